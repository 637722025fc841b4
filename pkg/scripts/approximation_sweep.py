"""Error of the composed birth-death approximation of the squared Bessel semigroup.

For f = exp(-lam y) prints error(eps) = |approximation - Q_t f(x)|, the ratio
error / eps against |d/dt Q_t f(x)|, and the fitted log-log slope.

    python scripts/approximation_sweep.py --beta 1 --t 1 --x 1 --lam 1
"""

import argparse
import sys

import numpy as np

from gateway.semigroups import bessel_laplace
from gateway.simulate import approximation_sweep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--x", type=float, default=1.0)
    ap.add_argument("--lam", type=float, default=1.0)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625])
    args = ap.parse_args(argv)

    a = 1.0 + args.lam * args.t
    deriv = bessel_laplace(args.beta, args.t, args.lam, args.x) * (
        -args.beta * args.lam / a + args.lam ** 2 * args.x / a ** 2)
    rows = approximation_sweep(args.beta, args.t, args.x, None, args.eps, laplace_lambda=args.lam)
    print(f"|d/dt Q_t f(x)| = {abs(deriv):.6e}")
    print(f"{'eps':>10} {'error':>14} {'error/eps':>14} {'identity gap':>14}")
    for r in rows:
        print(f"{r.eps:10.5g} {r.error:14.6e} {r.error / r.eps:14.6e} {r.identity_gap:14.3e}")
    eps = np.array([r.eps for r in rows])
    err = np.array([r.error for r in rows])
    print(f"log-log slope: {np.polyfit(np.log(eps), np.log(err), 1)[0]:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

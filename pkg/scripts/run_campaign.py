"""Run a campaign file and archive one JSON report per cell.

    python scripts/run_campaign.py scripts/campaign.toml results/ --jobs 2
"""

import argparse
import sys

from gateway.config import load_config, run_campaign


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("outdir")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--dry-run", action="store_true", help="list the cells and exit")
    args = ap.parse_args(argv)

    grid = load_config(args.config)
    if args.dry_run:
        for cell in grid.cells():
            print(cell.suite, cell.params, cell.seed)
        return 0
    failed = []

    def progress(cell, report):
        print(f"[{'PASS' if report.passed else 'FAIL'}] {cell.suite} {cell.params} seed={cell.seed}", flush=True)
        if not report.passed:
            failed.append(cell)

    paths = run_campaign(grid, args.outdir, jobs=args.jobs, progress=progress)
    print(f"{len(paths) - len(failed)}/{len(paths)} cells passed; index at {args.outdir}/index.json")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

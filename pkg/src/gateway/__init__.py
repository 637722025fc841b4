"""Squared Bessel and linear birth-death semigroups linked by gateway kernels."""

__version__ = "0.1.0"

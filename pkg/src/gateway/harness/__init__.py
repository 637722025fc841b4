"""Verification harness: statistical tests, suite registry, reports and CLI."""

from .report import Check, VerificationReport
from .registry import SUITES, run_suite, run_all

__all__ = ["Check", "VerificationReport", "SUITES", "run_suite", "run_all"]

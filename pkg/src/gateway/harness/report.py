"""Verification reports and their JSON form.

Field order is fixed: suite, params, seed, checks, runtime_ms, version.
Each check carries name, kind, statistic, threshold, pass, paper_ref. JSON
output is UTF-8 and newline-terminated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .. import __version__

CHECK_KINDS = ("deterministic", "statistical")


@dataclass
class Check:
    """One check. Deterministic checks pass when statistic <= threshold;
    statistical checks store a p-value and pass when it exceeds alpha
    (``threshold``), unless ``passed`` is set explicitly."""

    name: str
    kind: str
    statistic: float
    threshold: float
    paper_ref: str
    passed: bool | None = None

    def __post_init__(self):
        if self.kind not in CHECK_KINDS:
            raise ValueError(f"check kind must be one of {CHECK_KINDS}")
        if not self.paper_ref:
            raise ValueError("every check names the identity it verifies")
        self.statistic = float(self.statistic)
        self.threshold = float(self.threshold)
        if self.passed is None:
            if math.isnan(self.statistic):
                self.passed = False
            elif self.kind == "deterministic":
                self.passed = self.statistic <= self.threshold
            else:
                self.passed = self.statistic > self.threshold
        self.passed = bool(self.passed)

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "statistic": _num(self.statistic),
                "threshold": _num(self.threshold), "pass": self.passed, "paper_ref": self.paper_ref}

    @classmethod
    def from_dict(cls, d: dict) -> "Check":
        return cls(d["name"], d["kind"], _unnum(d["statistic"]), _unnum(d["threshold"]), d["paper_ref"], d["pass"])


def _num(x: float):
    return x if math.isfinite(x) else str(x)


def _unnum(x):
    return float(x)


@dataclass
class VerificationReport:
    suite: str
    params: dict
    seed: int
    checks: list = field(default_factory=list)
    runtime_ms: int = 0
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "params": dict(self.params), "seed": int(self.seed),
                "checks": [c.to_dict() for c in self.checks], "runtime_ms": int(self.runtime_ms),
                "version": self.version}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        return cls(d["suite"], dict(d["params"]), int(d["seed"]), [Check.from_dict(c) for c in d["checks"]],
                   int(d["runtime_ms"]), d.get("version", __version__))

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        return cls.from_dict(json.loads(text))


def combined_json(reports: list[VerificationReport], seed: int, params: dict, runtime_ms: int) -> str:
    """Aggregate document for a multi-suite run."""
    doc = {"suite": "all", "params": dict(params), "seed": int(seed),
           "reports": [r.to_dict() for r in reports], "pass": all(r.passed for r in reports),
           "runtime_ms": int(runtime_ms), "version": __version__}
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"

"""Declarative verification campaigns: TOML grids, cell enumeration and report archival.

A campaign file looks like::

    suites = ["gateway_bessel", "entropy"]
    beta_grid = [0.5, 1.0]
    t_grid = [0.5, 2.0]
    seed = 7
    seed_policy = "per-cell"

    [sample_size]
    default = 50000
    samplers = 200000

Omitted grids mean "use the suite's built-in grid". See docs/formats.md.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, DomainError
from .harness.registry import SUITES, run_suite, validate_params
from .harness.report import VerificationReport

__all__ = ["ExperimentGrid", "Cell", "load_config", "parse_config", "archive_report", "load_report",
           "run_campaign", "report_filename"]

SEED_POLICIES = ("fixed", "per-cell")
# grid field -> suite parameter it overrides
GRID_FIELDS = {"beta_grid": "beta", "sigma_grid": "sigma", "varsigma_grid": "varsigma", "t_grid": "t"}
TOP_KEYS = {"suites", "seed", "seed_policy", "tol", "sample_size", *GRID_FIELDS}
INDEX = "index.json"


@dataclass(frozen=True)
class Cell:
    """One suite run: suite name, parameter overrides and the seed to use."""

    suite: str
    params: dict
    seed: int


@dataclass
class ExperimentGrid:
    suites: list[str]
    beta_grid: list[float] | None = None
    sigma_grid: list[float] | None = None
    varsigma_grid: list[float] | None = None
    t_grid: list[float] | None = None
    sample_size: dict[str, int] = field(default_factory=dict)
    seed: int = 42
    seed_policy: str = "fixed"
    tol: float | None = None

    def __post_init__(self):
        if not self.suites:
            raise DomainError("suites: must list at least one suite")
        expanded = []
        for s in self.suites:
            names = list(SUITES) if s == "all" else [s]
            for n in names:
                if n not in SUITES:
                    raise DomainError(f"suites: unknown suite {n!r}")
                if n not in expanded:
                    expanded.append(n)
        self.suites = expanded
        for name in GRID_FIELDS:
            g = getattr(self, name)
            if g is None:
                continue
            if len(g) == 0:
                raise DomainError(f"{name}: grid must be non-empty (omit it to use the built-in grid)")
            setattr(self, name, [float(v) for v in g])
        if self.seed_policy not in SEED_POLICIES:
            raise DomainError(f"seed_policy: must be one of {', '.join(SEED_POLICIES)}")
        for k, v in self.sample_size.items():
            if k != "default" and k not in SUITES:
                raise DomainError(f"sample_size: unknown suite {k!r}")
            if not isinstance(v, int) or v < 1000:
                raise DomainError(f"sample_size.{k}: must be an integer >= 1000")
        if self.tol is not None and not self.tol > 0:
            raise DomainError("tol: must be positive")
        # every value must be admissible for every suite it reaches
        for suite in self.suites:
            for name, key in GRID_FIELDS.items():
                for v in getattr(self, name) or ():
                    try:
                        validate_params(suite, {key: v})
                    except DomainError as exc:
                        raise DomainError(f"{name}: {exc}") from None

    def n_samples(self, suite: str) -> int | None:
        return self.sample_size.get(suite, self.sample_size.get("default"))

    def cells(self) -> list[Cell]:
        """Cartesian enumeration: suites in order, then grids in field order."""
        out = []
        for suite in self.suites:
            axes = [(key, getattr(self, name)) for name, key in GRID_FIELDS.items() if getattr(self, name)]
            for combo in itertools.product(*(vals for _, vals in axes)):
                params = dict(zip((k for k, _ in axes), combo))
                if self.tol is not None:
                    params["tol"] = self.tol
                n = self.n_samples(suite)
                if n is not None:
                    params["n_samples"] = n
                out.append(Cell(suite, params, self._seed_for(suite, params)))
        return out

    def _seed_for(self, suite: str, params: dict) -> int:
        if self.seed_policy == "fixed":
            return self.seed
        key = json.dumps({"seed": self.seed, "suite": suite, "params": params}, sort_keys=True)
        return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=4).digest(), "little")


_LOC = re.compile(r"line (\d+), column (\d+)")


def parse_config(text: str) -> ExperimentGrid:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _LOC.search(str(exc))
        msg = _LOC.sub("", str(exc)).replace("(at )", "").strip()
        raise ConfigError(f"TOML parse error: {msg}", *(map(int, m.groups()) if m else ())) from None
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    if "suites" not in doc:
        raise ConfigError("missing required key 'suites'")
    kw = dict(doc)
    if isinstance(kw["suites"], str):
        kw["suites"] = [kw["suites"]]
    for name in GRID_FIELDS:
        if name in kw and not (isinstance(kw[name], list) and all(isinstance(v, (int, float)) for v in kw[name])):
            raise ConfigError(f"{name}: expected a list of numbers")
    if "sample_size" in kw:
        if isinstance(kw["sample_size"], int):
            kw["sample_size"] = {"default": kw["sample_size"]}
        elif not isinstance(kw["sample_size"], dict):
            raise ConfigError("sample_size: expected an integer or a table")
    if "seed" in kw and not isinstance(kw["seed"], int):
        raise ConfigError("seed: expected an integer")
    return ExperimentGrid(**kw)


def load_config(path) -> ExperimentGrid:
    """Read and validate a campaign file."""
    return parse_config(Path(path).read_text(encoding="utf-8"))


def report_filename(report: VerificationReport) -> str:
    key = json.dumps({"seed": report.seed, "params": report.params}, sort_keys=True)
    return f"{report.suite}_{hashlib.blake2b(key.encode(), digest_size=8).hexdigest()}.json"


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def archive_report(report: VerificationReport, directory) -> Path:
    """Write ``<suite>_<hash>.json`` and update ``index.json``; rewriting the same report is a no-op."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    path = d / report_filename(report)
    with FileLock(str(d / ".archive.lock")):
        _atomic_write(path, report.to_json())
        idx_path = d / INDEX
        entries = json.loads(idx_path.read_text(encoding="utf-8")) if idx_path.exists() else []
        entries = [e for e in entries if e["file"] != path.name]
        entries.append({"file": path.name, "suite": report.suite, "seed": report.seed,
                        "params": report.params, "pass": report.passed})
        entries.sort(key=lambda e: e["file"])
        _atomic_write(idx_path, json.dumps(entries, indent=2) + "\n")
    return path


def load_report(path) -> VerificationReport:
    return VerificationReport.from_json(Path(path).read_text(encoding="utf-8"))


def run_campaign(grid: ExperimentGrid, directory, jobs: int = 1, progress=None) -> list[Path]:
    """Run every cell of ``grid`` and archive each report; returns the written paths in cell order."""
    paths = []
    for cell in grid.cells():
        report = run_suite(cell.suite, cell.params, seed=cell.seed, jobs=jobs)
        paths.append(archive_report(report, directory))
        if progress is not None:
            progress(cell, report)
    return paths

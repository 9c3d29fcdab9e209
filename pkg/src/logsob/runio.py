"""Run configuration, manifests, and deterministic result files.

A run is described by one JSON document.  Validation is strict: every
field is checked before any computation starts, unknown keys are
rejected, and error messages name the offending field.  Numeric output
uses 17 significant digits so re-running a config reproduces results
byte for byte; wall-clock time, the one value that cannot be
deterministic, goes to a timing.json sidecar instead of the manifest.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import ConfigError

__all__ = [
    "RunConfig",
    "RunManifest",
    "EXPERIMENTS",
    "load_config",
    "make_run_dir",
    "write_csv",
    "format_float",
]

EXPERIMENTS = (
    "classical-growth",
    "flow-norm",
    "semiclassical-error",
    "sobolev-growth",
    "calibrate",
)

_DEFAULTS = {
    "l": 2,
    "hbar_list": None,
    "r_list": None,
    "t_max": None,
    "tol": 1e-10,
    "kappa": 1.0,
    "output_dir": "runs",
    "seedless": True,
}


@dataclass(frozen=True)
class RunConfig:
    """Validated experiment description.

    hbar_list, r_list and t_max may be omitted (None); each experiment
    resolves its documented defaults before running.
    """

    experiment: str
    l: int = 2
    hbar_list: tuple | None = None
    r_list: tuple | None = None
    t_max: float | None = None
    tol: float = 1e-10
    kappa: float = 1.0
    output_dir: str = "runs"
    seedless: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"experiment: {self.experiment!r} is not one of {EXPERIMENTS}")
        if not isinstance(self.l, int) or isinstance(self.l, bool) or self.l < 2:
            raise ConfigError(f"l: must be an integer >= 2, got {self.l!r}")
        if self.hbar_list is not None:
            hb = tuple(float(h) for h in self.hbar_list)
            if len(hb) == 0:
                raise ConfigError("hbar_list: must be nonempty")
            for h in hb:
                if not (0.0 < h <= 1.0) or not math.isfinite(h):
                    raise ConfigError(f"hbar_list: entry {h!r} outside (0, 1]")
            object.__setattr__(self, "hbar_list", hb)
        if self.r_list is not None:
            rl = []
            for r in self.r_list:
                if isinstance(r, bool) or int(r) != r or r < 0:
                    raise ConfigError(
                        f"r_list: entry {r!r} is not an integer >= 0")
                rl.append(int(r))
            object.__setattr__(self, "r_list", tuple(rl))
        if self.t_max is not None:
            t = float(self.t_max)
            if not (t > 0 and math.isfinite(t)):
                raise ConfigError(f"t_max: must be positive, got {self.t_max!r}")
            object.__setattr__(self, "t_max", t)
        if not (1e-13 <= float(self.tol) <= 1e-6):
            raise ConfigError(
                f"tol: must lie in [1e-13, 1e-6], got {self.tol!r}")
        object.__setattr__(self, "tol", float(self.tol))
        if not (0.0 < float(self.kappa) <= 1.0):
            raise ConfigError(f"kappa: must lie in (0, 1], got {self.kappa!r}")
        object.__setattr__(self, "kappa", float(self.kappa))
        if not isinstance(self.output_dir, (str, os.PathLike)):
            raise ConfigError(f"output_dir: not a path: {self.output_dir!r}")
        if self.seedless is not True:
            raise ConfigError(
                "seedless: must be true (runs use no randomness)")

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.hbar_list is not None:
            d["hbar_list"] = list(self.hbar_list)
        if self.r_list is not None:
            d["r_list"] = list(self.r_list)
        d["output_dir"] = str(self.output_dir)
        return d

    def resolved(self, **defaults) -> "RunConfig":
        """Copy with None fields replaced by experiment defaults."""
        d = self.to_dict()
        for k, v in defaults.items():
            if d.get(k) is None:
                d[k] = v
        return RunConfig(**d)


def load_config(path_or_dict, experiment: str | None = None,
                overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from a JSON file (or dict) plus CLI overrides.

    Unknown keys are configuration errors; overrides replace file values
    field by field before validation.
    """
    if isinstance(path_or_dict, dict):
        raw = dict(path_or_dict)
    elif path_or_dict is None:
        raw = {}
    else:
        try:
            with open(path_or_dict) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path_or_dict}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}")
        if not isinstance(raw, dict):
            raise ConfigError("config: top-level JSON value must be an object")
    allowed = {"experiment"} | set(_DEFAULTS)
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown config field {key!r}")
    merged = dict(_DEFAULTS)
    merged.update(raw)
    if experiment is not None:
        merged["experiment"] = experiment
    if "experiment" not in merged or merged.get("experiment") is None:
        raise ConfigError("experiment: missing (pass it as the CLI command)")
    if overrides:
        for k, v in overrides.items():
            if v is not None:
                merged[k] = v
    return RunConfig(**merged)


@dataclass
class RunManifest:
    """Deterministic record of one run: config echo, constants, checks."""

    config: dict
    version: str
    constants: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def add_check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks[name] = {"pass": bool(passed), "detail": detail}

    def all_passed(self) -> bool:
        return all(c["pass"] for c in self.checks.values())

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "version": self.version,
            "constants": self.constants,
            "checks": self.checks,
            "notes": self.notes,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write(self, run_dir, wall_time_s: float | None = None) -> None:
        run_dir = Path(run_dir)
        tmp = run_dir / "manifest.json.tmp"
        tmp.write_text(self.to_json())
        tmp.rename(run_dir / "manifest.json")
        if wall_time_s is not None:
            (run_dir / "timing.json").write_text(
                json.dumps({"wall_time_s": wall_time_s}) + "\n")


def make_run_dir(config: RunConfig) -> Path:
    """Create <output_dir>/<experiment>/<timestamp>/ (+checkpoints/)."""
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    base = Path(config.output_dir) / config.experiment
    run_dir = base / stamp
    n = 2
    while run_dir.exists():
        run_dir = base / f"{stamp}-{n}"
        n += 1
    (run_dir / "checkpoints").mkdir(parents=True)
    return run_dir


def format_float(x) -> str:
    return f"{float(x):.17g}"


def write_csv(path, header: list[str], rows, int_cols: set[str] = frozenset()) -> None:
    """Write rows (dicts or sequences) with 17-significant-digit floats."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            if isinstance(row, dict):
                vals = [row[c] for c in header]
            else:
                vals = list(row)
            out = []
            for c, v in zip(header, vals):
                if c in int_cols:
                    out.append(str(int(v)))
                else:
                    out.append(format_float(v))
            fh.write(",".join(out) + "\n")

"""Environment settings and the validated run configuration."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Tuple

try:
    from dotenv import load_dotenv

    load_dotenv()
except ModuleNotFoundError:
    pass

from aclab.solvers.errors import ConfigError

COMMANDS = ("cone", "spectrum", "table", "solve", "sweep", "diagnose")
ROOT = Path(__file__).resolve().parents[1]
GOLDEN_REFERENCE_PATH = ROOT / "data" / "golden_reference.json"


@lru_cache(maxsize=1)
def output_root() -> Path:
    """Return the output root (``ACLAB_OUTPUT_ROOT``, default ``out/``)."""
    return Path(os.getenv("ACLAB_OUTPUT_ROOT", "out"))


def worker_count() -> int:
    try:
        return max(1, int(os.getenv("ACLAB_WORKERS", "4")))
    except ValueError:
        return 1


def quiet() -> bool:
    return os.getenv("ACLAB_QUIET", "").strip().lower() in ("1", "true", "yes")


# (lower, upper) inclusive ranges for scalar parameters
_RANGES: Dict[str, Tuple[float, float]] = {
    "n": (64, 1 << 20),
    "h": (1e-5, 0.5),
    "radius": (1e-3, 100.0),
    "tol": (1e-14, 0.5),
    "energy_tol": (1e-16, 0.5),
    "max_sweeps": (1, 10_000_000),
    "rho": (0.0, 10.0),
    "seed": (0, 2**32 - 1),
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    dims: Tuple[int, ...] = (7,)
    splits: Tuple[Tuple[int, int], ...] = ()
    n: int = 4096
    geometry: str = "planar"
    data: str = "flat:0.3"
    radius: float = 1.0
    h: float = 1.0 / 128
    t_grid: str = "lin:0:0.1:5"
    pair: Tuple[str, ...] = ()
    rho: float = 0.1
    tol: float = 1e-10
    energy_tol: float = 1e-12
    max_sweeps: int = 20000
    output_dir: str = ""
    golden: str = ""
    seed: int = 0
    refine: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command: expected one of {', '.join(COMMANDS)}, got {self.command!r}")
        for d in self.dims:
            if not 3 <= int(d) <= 32:
                raise ConfigError(f"--dim: {d} outside valid range 3..32")
        if self.command == "table":
            if min(self.dims) < 7 or max(self.dims) > 14:
                raise ConfigError(f"--dims: table dimensions must lie in 7..14, got {self.dims}")
        for m, k in self.splits:
            if m < 1 or k < 1:
                raise ConfigError(f"--split: factors must be >= 1, got {m},{k}")
        for key, (lo, hi) in _RANGES.items():
            val = getattr(self, key)
            if not lo <= val <= hi:
                raise ConfigError(f"--{key.replace('_', '-')}: {val} outside valid range [{lo}, {hi}]")
        if self.command == "diagnose" and len(self.pair) != 2:
            raise ConfigError("--pair: expects exactly two field paths")

    @property
    def out_dir(self) -> Path:
        return Path(self.output_dir) if self.output_dir else output_root() / self.command

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["dims"] = list(self.dims)
        data["splits"] = [list(s) for s in self.splits]
        data["pair"] = list(self.pair)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = dict(data)
        try:
            if "dims" in kwargs:
                kwargs["dims"] = tuple(int(d) for d in kwargs["dims"])
            if "splits" in kwargs:
                kwargs["splits"] = tuple((int(s[0]), int(s[1])) for s in kwargs["splits"])
            if "pair" in kwargs:
                kwargs["pair"] = tuple(str(p) for p in kwargs["pair"])
            for key in ("n", "max_sweeps", "seed"):
                if key in kwargs:
                    kwargs[key] = int(kwargs[key])
            for key in ("radius", "h", "tol", "energy_tol", "rho"):
                if key in kwargs:
                    kwargs[key] = float(kwargs[key])
            if "refine" in kwargs:
                kwargs["refine"] = bool(kwargs["refine"])
        except (TypeError, ValueError, IndexError) as e:
            raise ConfigError(f"malformed config value: {e}") from e
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


def parse_dims(text: str) -> Tuple[int, ...]:
    """Parse ``7``, ``7..14`` or ``7,9,11``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as e:
        raise ConfigError(f"--dims: cannot parse {text!r} (use D, D1..D2 or D1,D2)") from e


def parse_split(text: str) -> Tuple[int, int]:
    try:
        m, k = text.split(",")
        return int(m), int(k)
    except ValueError as e:
        raise ConfigError(f"--split: cannot parse {text!r} (use M,K)") from e


def parse_t_grid(text: str) -> List[float]:
    """Parse ``log:1e-4:1e-1:9`` or ``lin:0:0.1:5`` into a sorted t grid."""
    import numpy as np

    try:
        kind, lo, hi, count = text.split(":")
        lo_f, hi_f, num = float(lo), float(hi), int(count)
    except ValueError as e:
        raise ConfigError(f"--t-grid: cannot parse {text!r} (use log:LO:HI:N or lin:LO:HI:N)") from e
    if num < 2 or not -1.0 < lo_f < hi_f < 1.0:
        raise ConfigError(f"--t-grid: need N >= 2 and -1 < LO < HI < 1, got {text!r}")
    if kind == "log":
        if lo_f <= 0:
            raise ConfigError("--t-grid: log grids need LO > 0")
        return [float(t) for t in np.geomspace(lo_f, hi_f, num)]
    if kind == "lin":
        return [float(t) for t in np.linspace(lo_f, hi_f, num)]
    raise ConfigError(f"--t-grid: unknown kind {kind!r}")


__all__ = [
    "COMMANDS",
    "GOLDEN_REFERENCE_PATH",
    "RunConfig",
    "output_root",
    "worker_count",
    "quiet",
    "parse_dims",
    "parse_split",
    "parse_t_grid",
]

"""Log-log power-law fits."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np
from scipy import stats

from aclab.solvers.errors import InsufficientPairs

MIN_PAIRS = 4


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    residual: float
    pairs: int
    ci_low: float
    ci_high: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def fit_power_law(x: Sequence[float], y: Sequence[float], confidence: float = 0.95) -> ExponentFit:
    """Least squares of log y on log x; pairs with a nonpositive coordinate are dropped."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    keep = (xa > 0) & (ya > 0) & np.isfinite(xa) & np.isfinite(ya)
    lx, ly = np.log(xa[keep]), np.log(ya[keep])
    if lx.size < MIN_PAIRS:
        raise InsufficientPairs(f"need at least {MIN_PAIRS} positive pairs, got {lx.size}")
    if np.ptp(lx) == 0:
        raise InsufficientPairs("all pairs share the same abscissa")
    res = stats.linregress(lx, ly)
    fitted = res.intercept + res.slope * lx
    rms = float(np.sqrt(np.mean((ly - fitted) ** 2)))
    q = stats.t.ppf(0.5 + confidence / 2, lx.size - 2)
    half = float(q * res.stderr)
    return ExponentFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        residual=rms,
        pairs=int(lx.size),
        ci_low=float(res.slope) - half,
        ci_high=float(res.slope) + half,
    )


__all__ = ["ExponentFit", "MIN_PAIRS", "fit_power_law"]

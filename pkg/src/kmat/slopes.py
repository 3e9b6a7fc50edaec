"""Log-log slope estimation for the asymptotic ("~ P^x") claims."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

MIN_POINTS = 4


@dataclass(frozen=True)
class SlopeEstimate:
    """OLS slope of ``log y`` against ``log x`` with its standard error.

    ``points`` holds the regressed ``(log x, log y)`` pairs; both logs use the
    same base, so the slope is base independent.
    """

    slope: float
    stderr: float
    intercept: float = 0.0
    points: tuple[tuple[float, float], ...] = field(default=(), repr=False)

    def within(self, target: float, tol: float) -> bool:
        return abs(self.slope - target) <= tol


def fit_slope(log_x, log_y, min_points: int = MIN_POINTS) -> SlopeEstimate:
    """Ordinary least squares fit of ``log_y = intercept + slope * log_x``.

    Parameters
    ----------
    log_x, log_y : array_like
        Abscissae and ordinates, already in log domain.
    min_points : int
        Minimum number of finite points required.

    Raises
    ------
    ValueError
        If fewer than ``min_points`` finite points remain.
    """
    x = np.asarray(log_x, dtype=float)
    y = np.asarray(log_y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if x.size < min_points:
        raise ValueError(f"need at least {min_points} finite points, got {x.size}")
    res = stats.linregress(x, y)
    return SlopeEstimate(
        slope=float(res.slope),
        stderr=float(res.stderr),
        intercept=float(res.intercept),
        points=tuple(zip(x.tolist(), y.tolist())),
    )


def nan_slope() -> SlopeEstimate:
    """Placeholder for a group with no usable points (e.g. clamped to zero power)."""
    return SlopeEstimate(slope=float("nan"), stderr=float("nan"), intercept=float("nan"))

"""Power-law fits on log-log data."""

from dataclasses import dataclass

import numpy as np


@dataclass
class FitResult:
    exponent: float
    prefactor: float
    r_squared: float
    window: tuple
    T_estimate: float = None

    def as_dict(self):
        return {"exponent": self.exponent, "prefactor": self.prefactor,
                "r_squared": self.r_squared, "window": list(self.window),
                "T_estimate": self.T_estimate}


def fit_power_law(xs, ys, window=None, min_points=16, min_decades=1.0):
    """Least squares fit of log y = log A + p log x.

    ``window`` restricts x to [lo, hi]. The data must hold at least
    ``min_points`` points spanning ``min_decades`` decades.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("xs and ys differ in shape")
    if window is not None:
        lo, hi = window
        keep = (xs >= lo) & (xs <= hi)
        xs, ys = xs[keep], ys[keep]
    if xs.size < min_points:
        raise ValueError(f"need at least {min_points} points, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(xs), np.log(ys)
    if (lx.max() - lx.min()) / np.log(10.0) < min_decades - 1e-12:
        raise ValueError("data spans less than the required decades")
    A = np.stack([np.ones_like(lx), lx], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    # constant data has no variance to explain
    flat = ss_tot <= 1e-20 * max(1.0, float(np.sum(ly**2)))
    r2 = 1.0 if flat else 1.0 - np.sum(resid**2) / ss_tot
    r2 = float(min(max(r2, 0.0), 1.0))
    return FitResult(float(coef[1]), float(np.exp(coef[0])), r2,
                     (float(xs.min()), float(xs.max())))


def loglog_slope(xs, ys):
    """Plain slope of log y against log x, without the size checks."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])


__all__ = ["FitResult", "fit_power_law", "loglog_slope"]

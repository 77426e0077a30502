"""Penalty-barrier kernel used by the multiplier method.

The scalar kernel is quadratic above a branch point and logarithmic below
it, glued so that the value and the first two derivatives are continuous.
It vanishes at the origin with unit slope, is strictly increasing and
strictly convex, and its derivative grows without bound on both ends of
the quadratic branch, which is what makes it usable both as a penalty on
nearly-active constraints and as a barrier on strongly violated ones.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["PenaltyBarrier"]

# Inputs beyond this magnitude would overflow the quadratic branch; they are
# saturated instead so that line searches on wildly infeasible trial points
# degrade gracefully.
_SATURATION = 1e150
_BIG = 1e300


@dataclass(frozen=True)
class PenaltyBarrier:
    """Two-branch scalar kernel with a configurable branch point.

    Parameters
    ----------
    branch : float
        Branch point in (-1, 0). Above it the kernel is the quadratic
        ``tau + tau**2 / 2``; below it the logarithmic extrapolation that
        keeps the kernel twice continuously differentiable.
    """

    branch: float = -0.5

    def __post_init__(self) -> None:
        if not -1.0 < self.branch < 0.0:
            raise ValueError(f"branch point must lie in (-1, 0), got {self.branch}")

    # The logarithmic branch is determined by C^2 continuity at the branch
    # point t: with c = (1 + t)^2 the derivative is c / (1 + 2t - tau), which
    # matches 1 + tau at tau = t along with its derivative.

    def value(self, tau):
        tau = np.asarray(tau, dtype=float)
        tau = _saturate(tau)
        t = self.branch
        c = (1.0 + t) ** 2
        out = np.empty_like(tau)
        quad = tau >= t
        tq = tau[quad]
        out[quad] = tq + 0.5 * tq * tq
        tl = tau[~quad]
        out[~quad] = -c * np.log((1.0 + 2.0 * t - tl) / (1.0 + t)) + t + 0.5 * t * t
        return _unwrap(out)

    def deriv(self, tau):
        tau = np.asarray(tau, dtype=float)
        tau = _saturate(tau)
        t = self.branch
        c = (1.0 + t) ** 2
        out = np.empty_like(tau)
        quad = tau >= t
        out[quad] = 1.0 + tau[quad]
        out[~quad] = c / (1.0 + 2.0 * t - tau[~quad])
        return _unwrap(out)

    def deriv2(self, tau):
        tau = np.asarray(tau, dtype=float)
        tau = _saturate(tau)
        t = self.branch
        c = (1.0 + t) ** 2
        out = np.empty_like(tau)
        quad = tau >= t
        out[quad] = 1.0
        out[~quad] = c / (1.0 + 2.0 * t - tau[~quad]) ** 2
        return _unwrap(out)


def _saturate(tau: np.ndarray) -> np.ndarray:
    if np.any(np.abs(tau) > _SATURATION) or np.any(~np.isfinite(tau)):
        warnings.warn(
            "penalty kernel input saturated at +/-1e150; the iterate is far "
            "outside the useful range of the kernel",
            RuntimeWarning,
            stacklevel=3,
        )
        tau = np.nan_to_num(tau, nan=0.0, posinf=_BIG, neginf=-_BIG)
        tau = np.clip(tau, -_SATURATION, _SATURATION)
    return tau


def _unwrap(out: np.ndarray):
    return out.item() if out.ndim == 0 else out

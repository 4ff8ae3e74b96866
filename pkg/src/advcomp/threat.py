"""L-infinity threat model: projection onto the ball/box intersection."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ThreatModel:
    epsilon: float
    box_low: float = 0.0
    box_high: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if not self.box_low < self.box_high:
            raise ConfigurationError("box_low must be below box_high")

    def scaled(self, factor: float) -> "ThreatModel":
        """Same box, radius multiplied by ``factor`` (used for enlarged-ball attacks)."""
        return ThreatModel(self.epsilon * factor, self.box_low, self.box_high)

    def bounds(self, x_orig):
        x_orig = np.asarray(x_orig, dtype=np.float64)
        lo = x_orig - self.epsilon
        hi = x_orig + self.epsilon
        # x -/+ eps can round one ulp outward; pull back so |p - x| <= eps holds in floats
        lo = np.where(x_orig - lo > self.epsilon, np.nextafter(lo, np.inf), lo)
        hi = np.where(hi - x_orig > self.epsilon, np.nextafter(hi, -np.inf), hi)
        return np.maximum(lo, self.box_low), np.minimum(hi, self.box_high)


def parse_epsilon(text) -> float:
    """Accept ``"8/255"``, ``"0.031"`` or a number."""
    if isinstance(text, (int, float)):
        return float(text)
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigurationError(f"cannot parse epsilon {text!r}") from exc


def project(x_adv, x_orig, tm: ThreatModel) -> np.ndarray:
    """Clamp coordinate-wise to [x-eps, x+eps] intersected with the box.

    Both sets are axis-aligned boxes, so their intersection is a box and one
    clamp to it gives the same result as ball-then-box or box-then-ball
    whenever x_orig itself is inside the box.
    """
    lo, hi = tm.bounds(x_orig)
    return np.clip(np.asarray(x_adv, dtype=np.float64), lo, hi)


def is_feasible(x_adv, x_orig, tm: ThreatModel, tol: float = 1e-6) -> np.ndarray:
    """Per-sample feasibility with slack ``tol``."""
    if tol < 0:
        raise ConfigurationError("tol must be non-negative")
    x_adv = np.atleast_2d(np.asarray(x_adv, dtype=np.float64))
    x_orig = np.atleast_2d(np.asarray(x_orig, dtype=np.float64))
    dist = np.abs(x_adv - x_orig).max(axis=1)
    in_box = (x_adv.min(axis=1) >= tm.box_low - tol) & (x_adv.max(axis=1) <= tm.box_high + tol)
    return (dist <= tm.epsilon + tol) & in_box

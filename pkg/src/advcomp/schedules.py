"""Step-size schedules for sign-gradient attacks.

``step_size(spec, i)`` is the step at (0-based) iteration ``i``:

* ``fixed``               -- ``eta_max``
* ``sgdr_cosine``         -- cosine annealing with warm restarts of period ``period``
* ``cos4``                -- ``eta_max * cos(4 i / total)``, clamped below at ``floor``
                             (default ``0.01 * eta_max``)
* ``two_stage``           -- ``2 eps`` for i < 5, then ``0.25 eps``
* ``kanra_piecewise``     -- ``eps``, then ``eps/3`` from ``0.25 N``, ``eps/8`` from ``0.5 N``
* ``cosine_per_restart``  -- half cosine from ``eta_max`` at i=0 to ``floor`` at i=total
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import ConfigurationError

KINDS = ("fixed", "sgdr_cosine", "cos4", "two_stage", "kanra_piecewise", "cosine_per_restart")

COS4_FLOOR = 0.01
TWO_STAGE_SWITCH = 5


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str
    eta_max: float | None = None
    eta_min: float | None = None
    period: int | None = None
    total: int | None = None
    epsilon: float | None = None
    floor: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        need = {
            "fixed": ("eta_max",),
            "sgdr_cosine": ("eta_max", "eta_min", "period"),
            "cos4": ("eta_max", "total"),
            "two_stage": ("epsilon",),
            "kanra_piecewise": ("epsilon", "total"),
            "cosine_per_restart": ("eta_max", "total", "floor"),
        }[self.kind]
        missing = [name for name in need if getattr(self, name) is None]
        if missing:
            raise ConfigurationError(f"{self.kind} schedule needs {', '.join(missing)}")
        if self.eta_max is not None and not self.eta_max > 0:
            raise ConfigurationError("eta_max must be positive")
        if self.kind == "sgdr_cosine" and not (self.eta_max >= self.eta_min > 0):
            raise ConfigurationError("sgdr_cosine needs eta_max >= eta_min > 0")
        if self.floor is not None and not (self.eta_max >= self.floor > 0):
            raise ConfigurationError("floor must satisfy eta_max >= floor > 0")
        if self.period is not None and self.period < 1:
            raise ConfigurationError("period must be >= 1")
        if self.total is not None and self.total < 1:
            raise ConfigurationError("total must be >= 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")

    def with_total(self, total: int) -> "ScheduleSpec":
        """Same schedule stretched over ``total`` iterations."""
        if self.kind == "sgdr_cosine":
            return replace(self, period=total)
        if self.kind in ("cos4", "kanra_piecewise", "cosine_per_restart"):
            return replace(self, total=total)
        return self


def step_size(spec: ScheduleSpec, i: int) -> float:
    if i < 0:
        raise ConfigurationError("iteration index must be non-negative")
    kind = spec.kind
    if kind == "fixed":
        return spec.eta_max
    if kind == "sgdr_cosine":
        phase = (i % spec.period) / spec.period
        return 0.5 * (spec.eta_max - spec.eta_min) * (1.0 + math.cos(phase * math.pi)) + spec.eta_min
    if kind == "cos4":
        floor = COS4_FLOOR * spec.eta_max if spec.floor is None else spec.floor
        return max(spec.eta_max * math.cos(4.0 * i / spec.total), floor)
    if kind == "two_stage":
        return 2.0 * spec.epsilon if i < TWO_STAGE_SWITCH else 0.25 * spec.epsilon
    if kind == "kanra_piecewise":
        if i < 0.25 * spec.total:
            return spec.epsilon
        if i < 0.5 * spec.total:
            return spec.epsilon / 3.0
        return spec.epsilon / 8.0
    if kind == "cosine_per_restart":
        frac = min(i, spec.total) / spec.total
        return spec.floor + 0.5 * (spec.eta_max - spec.floor) * (1.0 + math.cos(math.pi * frac))
    raise ConfigurationError(f"unknown schedule kind {kind!r}")  # pragma: no cover

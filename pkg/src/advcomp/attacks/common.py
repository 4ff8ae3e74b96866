"""Helpers shared by the attack pipelines."""

from __future__ import annotations

import dataclasses

import numpy as np

from ..engine import AttackContext
from ..errors import ConfigurationError
from ..schedules import ScheduleSpec, step_size


def make_context(model, batch, tm, ledger=None, seed=0) -> AttackContext:
    return AttackContext(model, batch, tm, ledger=ledger, seed=seed)


def config_from_dict(cls, params: dict | None):
    """Build a config dataclass from plain (JSON) values, rejecting unknown keys."""
    params = dict(params or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(params) - names)
    if unknown:
        raise ConfigurationError(f"{cls.__name__}: unknown parameters {unknown}")
    for f in dataclasses.fields(cls):
        if f.name in params and isinstance(params[f.name], list):
            params[f.name] = tuple(params[f.name])
    return cls(**params)


def config_to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            v = dataclasses.asdict(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def schedule(kind, eps, *, eta=1.0, floor=0.01, total=1) -> ScheduleSpec:
    """A schedule with step sizes given as multiples of epsilon."""
    if kind == "fixed":
        return ScheduleSpec("fixed", eta_max=eta * eps)
    if kind == "sgdr_cosine":
        return ScheduleSpec("sgdr_cosine", eta_max=eta * eps, eta_min=floor * eta * eps, period=total)
    if kind == "cos4":
        return ScheduleSpec("cos4", eta_max=eta * eps, total=total)
    if kind == "two_stage":
        return ScheduleSpec("two_stage", epsilon=eps)
    if kind == "kanra_piecewise":
        return ScheduleSpec("kanra_piecewise", epsilon=eps, total=total)
    if kind == "cosine_per_restart":
        return ScheduleSpec("cosine_per_restart", eta_max=eta * eps, floor=floor * eps, total=total)
    raise ConfigurationError(f"unknown schedule kind {kind!r}")


def row_schedule(spec: ScheduleSpec, totals):
    """``k -> per-row step`` where each row's schedule spans its own total."""
    totals = np.maximum(np.asarray(totals, dtype=np.int64), 1)
    uniq, inverse = np.unique(totals, return_inverse=True)
    specs = [spec.with_total(int(t)) for t in uniq]

    def eta(k):
        return np.array([step_size(s, k) for s in specs])[inverse]

    return eta


def require_classes(ctx: AttackContext, need: int, what: str) -> None:
    if ctx.C < need:
        raise ConfigurationError(f"{what} needs at least {need} classes, model has {ctx.C}")

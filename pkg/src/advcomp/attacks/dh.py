"""Difficulty-hierarchical attack with a shared global perturbation.

An opening PGD pass harvests the easy samples. Every later restart first
tries the global perturbation (forward only), then restricted ODI and a
cosine-decayed PGD run whose loss is drawn from {margin, DLR}. Successful
deltas feed an exponential moving average that becomes the next global
perturbation, rescaled to the full epsilon radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..budget import Status
from ..errors import ConfigurationError
from ..inits import restricted_odi_init
from ..losses import LossSpec
from ..threat import project
from .common import config_from_dict, make_context, require_classes, schedule


@dataclass
class DHConfig:
    opening_iters: int = 10
    restart_iters: int = 20
    eta: float = 0.5
    eta_floor: float = 0.01
    losses: tuple = ("margin", "dlr")
    ema: float = 0.9
    use_global: bool = True
    odi_steps: int = 5
    mt_steps: int = 5
    max_restarts: int | None = None
    policy: str = "even_split"

    def __post_init__(self):
        if not 0.0 <= self.ema < 1.0:
            raise ConfigurationError("ema factor must lie in [0, 1)")
        if not self.losses:
            raise ConfigurationError("need at least one loss to choose from")

    @classmethod
    def from_dict(cls, params):
        return config_from_dict(cls, params)

    @property
    def init_cost(self) -> int:
        return self.odi_steps + self.mt_steps


def update_global(g, deltas, ema, eps) -> np.ndarray:
    """Fold successful deltas (in order) into the EMA and rescale to ||g||_inf = eps."""
    g = np.array(g, dtype=np.float64, copy=True)
    for d in deltas:
        g = ema * g + (1.0 - ema) * d
    peak = np.abs(g).max() if g.size else 0.0
    return g * (eps / peak) if peak > 0 else g


def try_global(ctx, g) -> np.ndarray:
    """Forward-only trial of x + g on the active samples; returns the ones it broke."""
    idx = ctx.active()
    if not idx.size or not np.any(g):
        return np.zeros(0, dtype=np.int64)
    cand = project(ctx.x[idx] + g, ctx.x[idx], ctx.tm)
    return idx[ctx.check(idx, cand)]


def dh_attack(model, batch, tm, cfg: DHConfig | None = None, *, ledger=None, seed=0):
    cfg = cfg or DHConfig()
    ctx = make_context(model, batch, tm, ledger, seed)
    if "dlr" in cfg.losses:
        require_classes(ctx, 3, "DLR loss")
    ctx.phase("clean")
    ctx.clean_pass()
    g = np.zeros(ctx.x.shape[1])

    def harvest(before):
        nonlocal g
        new = np.flatnonzero((ctx.state.status == Status.SUCCEEDED) & ~before)
        if cfg.use_global and new.size:
            g = update_global(g, ctx.state.best_x[new] - ctx.x[new], cfg.ema, tm.epsilon)

    ctx.phase("opening")
    before = ctx.state.status == Status.SUCCEEDED
    idx = ctx.affordable(ctx.active(), 1)
    sched = schedule("cosine_per_restart", tm.epsilon, eta=cfg.eta, floor=cfg.eta_floor, total=cfg.opening_iters)
    ctx.ascend(idx, ctx.x[idx], cfg.opening_iters, LossSpec("margin"), sched)
    harvest(before)
    ctx.reallocate(cfg.policy)

    sched = sched.with_total(cfg.restart_iters)
    global_hits = 0
    r = 0
    while cfg.max_restarts is None or r < cfg.max_restarts:
        r += 1
        ctx.phase(f"restart {r}")
        if cfg.use_global:
            global_hits += int(try_global(ctx, g).size)
        idx = ctx.affordable(ctx.active(), cfg.init_cost + 1)
        if not idx.size:
            break
        before = ctx.state.status == Status.SUCCEEDED
        x0 = restricted_odi_init(ctx, idx, r, odi_steps=cfg.odi_steps, mt_steps=cfg.mt_steps)
        choice = ctx.rng(0, r, "loss_choice").integers(len(cfg.losses))
        ctx.ascend(idx, x0, cfg.restart_iters, LossSpec(cfg.losses[choice]), sched)
        harvest(before)
        ctx.reallocate(cfg.policy)
    return ctx.finish(restarts=r, global_hits=global_hits, global_perturbation=g.tolist())

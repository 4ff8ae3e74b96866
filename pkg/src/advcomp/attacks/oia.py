"""Outside-inside attack followed by warm-started ODI-PGD.

Stage 1 runs BIM inside an enlarged ball. Samples that stay correctly
classified everywhere BIM went are filtered out as probably robust; the
others have their enlarged-ball point projected back to the real ball as a
first candidate. Stage 2 spends everything left on ODI-PGD restarts for the
samples still in play, each restart starting from the best point so far.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..budget import Status
from ..errors import ConfigurationError
from ..inits import odi_init
from ..losses import LossSpec
from ..threat import project
from .common import config_from_dict, make_context, schedule


@dataclass
class OIAConfig:
    outer_factor: float = 2.0
    bim_steps: int = 5
    bim_alpha: float = 0.5
    bim_loss: str = "margin"
    odi_steps: int = 2
    odi_alpha: float = 1.0
    pgd_steps: int = 20
    eta: float = 0.5
    eta_floor: float = 0.05
    loss: str = "margin"
    max_restarts: int = 100
    policy: str = "even_split"

    def __post_init__(self):
        if not self.outer_factor > 1:
            raise ConfigurationError("outer_factor must exceed 1")
        if self.bim_steps < 1:
            raise ConfigurationError("need at least one BIM step")

    @classmethod
    def from_dict(cls, params):
        return config_from_dict(cls, params)


def outside_stage(ctx, cfg: OIAConfig):
    """Enlarged-ball BIM on every image; returns (outer points, outer success mask).

    Charges exactly ``bim_steps`` backward per image plus one forward for the
    final outer point. Outer points are never stored as candidates.
    """
    outer = ctx.tm.scaled(cfg.outer_factor)
    idx = np.arange(ctx.n)
    spec = LossSpec(cfg.bim_loss)
    alpha = cfg.bim_alpha * ctx.tm.epsilon
    x = ctx.x.copy()
    hit = np.zeros(ctx.n, dtype=bool)
    for _ in range(cfg.bim_steps):
        _, g, z, _ = ctx.grad(idx, x, spec, observe=False)
        hit |= np.argmax(z, axis=1) != ctx.y
        x = project(x + alpha * np.sign(g), ctx.x, outer)
    z = ctx.meter.logits(idx, x)
    hit |= np.argmax(z, axis=1) != ctx.y
    return x, hit


def oia(model, batch, tm, cfg: OIAConfig | None = None, *, ledger=None, seed=0):
    cfg = cfg or OIAConfig()
    ctx = make_context(model, batch, tm, ledger, seed)
    ctx.phase("clean")
    ctx.clean_pass()

    ctx.phase("outside")
    x_out, hit = outside_stage(ctx, cfg)
    open_ = ctx.active()
    ctx.check(open_, project(x_out[open_], ctx.x[open_], tm))
    open_ = ctx.active()
    ctx.mark(open_[~hit[open_]], Status.FILTERED_ROBUST)
    filtered = np.flatnonzero(ctx.state.status == Status.FILTERED_ROBUST)
    ctx.reallocate(cfg.policy)

    spec = LossSpec(cfg.loss)
    sched = schedule("cosine_per_restart", tm.epsilon, eta=cfg.eta, floor=cfg.eta_floor, total=cfg.pgd_steps)
    restarts = 0
    for r in range(cfg.max_restarts):
        ctx.phase(f"inside restart {r}")
        idx = ctx.affordable(ctx.active(), cfg.odi_steps + 1)
        if not idx.size:
            break
        x0 = odi_init(ctx, idx, r, cfg.odi_steps, cfg.odi_alpha * tm.epsilon, x_start=ctx.state.best_x[idx])
        ctx.ascend(idx, x0, cfg.pgd_steps, spec, sched)
        ctx.reallocate(cfg.policy)
        restarts += 1
    return ctx.finish(filtered=filtered.tolist(), inside_restarts=restarts)

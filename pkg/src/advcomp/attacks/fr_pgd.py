"""Fast-Restart PGD: many short margin-decomposition restarts, then MIM.

Phase A spends ``ratio / (ratio + 1)`` of each image's budget on restarts of
2 ODI steps plus 4 ascent steps on the alternating margin-decomposition loss.
Budget freed by successes is reallocated after every restart. Phase B runs
MIM with the C&W margin loss from each image's best candidate, with the
step size dropping to eps/3 and eps/8 at a quarter and half of its length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from ..inits import odi_init
from ..losses import LossSpec
from .common import config_from_dict, make_context, row_schedule, schedule


@dataclass
class FRPGDConfig:
    odi_steps: int = 2
    odi_alpha: float = 1.0
    md_steps: int = 4
    md_alpha: float = 0.5
    phase_ratio: float = 4.0
    momentum: float = 1.0
    max_restarts: int | None = None
    phase_b: bool = True
    policy: str = "even_split"

    def __post_init__(self):
        if not self.phase_ratio > 0:
            raise ConfigurationError("phase_ratio must be positive")
        if self.md_steps < 1 or self.odi_steps < 1:
            raise ConfigurationError("restarts need at least one ODI and one ascent step")

    @classmethod
    def from_dict(cls, params):
        return config_from_dict(cls, params)

    @property
    def restart_cost(self) -> int:
        return self.odi_steps + self.md_steps


def md_loss_schedule(K: int, r: int):
    """``k -> LossSpec`` for restart ``r`` (1-based) of K ascent steps."""
    return lambda k: LossSpec("md_phase", k=k, K=K, r=r)


def fr_pgd(model, batch, tm, cfg: FRPGDConfig | None = None, *, ledger=None, seed=0):
    cfg = cfg or FRPGDConfig()
    ctx = make_context(model, batch, tm, ledger, seed)
    ctx.phase("clean")
    ctx.clean_pass()
    reserve = (ctx.ledger.allocation / (cfg.phase_ratio + 1)).astype(np.int64) if cfg.phase_b \
        else np.zeros(ctx.n, dtype=np.int64)
    ctx.reallocate(cfg.policy)
    md_step = schedule("fixed", tm.epsilon, eta=cfg.md_alpha)

    r = 0
    while cfg.max_restarts is None or r < cfg.max_restarts:
        act = ctx.active()
        idx = act[ctx.ledger.remaining(act) - reserve[act] >= cfg.restart_cost]
        if not idx.size:
            break
        r += 1
        ctx.phase(f"fast restart {r}")
        x0 = odi_init(ctx, idx, r, cfg.odi_steps, cfg.odi_alpha * tm.epsilon)
        ctx.ascend(idx, x0, cfg.md_steps, md_loss_schedule(cfg.md_steps, r), md_step)
        ctx.reallocate(cfg.policy)
    phase_a = ctx.ledger.backward.copy()

    if cfg.phase_b:
        ctx.phase("convergence")
        idx = ctx.affordable(ctx.active(), 1)
        if idx.size:
            n_steps = ctx.ledger.remaining(idx)
            sched = row_schedule(schedule("kanra_piecewise", tm.epsilon, total=1), n_steps)
            ctx.ascend(idx, ctx.state.best_x[idx], int(n_steps.max()), LossSpec("margin"), sched,
                       momentum=cfg.momentum, limit=n_steps)
        ctx.reallocate(cfg.policy)
    return ctx.finish(restarts=r, phase_a_backward=phase_a.tolist(),
                      phase_b_backward=(ctx.ledger.backward - phase_a).tolist())

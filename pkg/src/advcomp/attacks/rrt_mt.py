"""Restarted PGD with real-target initialisation, target cycling and momentum.

Each restart: an initialisation (RRT by default), then 18 PGD steps with a
large step for steps 0-4 and a small one afterwards; momentum only runs in
the small-step stage. With ``multi_target`` on, restart r attacks the r-th
wrong class by clean logit (cycling) with the targeted margin z_t - z_y.

The cumulative component ablation is available through ``ablation_ladder``.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..engine import multi_target_plans
from ..errors import ConfigurationError
from ..inits import odi_init, rrt_init, sample_targets, uniform_init
from ..losses import LossSpec
from .common import config_from_dict, make_context, schedule


@dataclass
class RRTConfig:
    init: str = "rrt"
    init_steps: int = 2
    init_alpha: float = 1.0
    pgd_steps: int = 18
    multi_target: bool = True
    loss: str = "margin"
    schedule: str = "two_stage"
    momentum: float | None = 1.0
    momentum_from: int = 5
    max_restarts: int = 100
    policy: str = "even_split"

    def __post_init__(self):
        if self.init not in ("rrt", "odi", "uniform"):
            raise ConfigurationError(f"unsupported init {self.init!r}")
        if self.pgd_steps < 1:
            raise ConfigurationError("need at least one PGD step")

    @classmethod
    def from_dict(cls, params):
        return config_from_dict(cls, params)

    @property
    def init_cost(self) -> int:
        return 0 if self.init == "uniform" else self.init_steps


def rrt_mt_mim(model, batch, tm, cfg: RRTConfig | None = None, *, ledger=None, seed=0):
    cfg = cfg or RRTConfig()
    ctx = make_context(model, batch, tm, ledger, seed)
    ctx.phase("clean")
    clean = ctx.clean_pass()
    plans = multi_target_plans(clean, ctx.y, ctx.C - 1)
    alpha = cfg.init_alpha * tm.epsilon
    sched = schedule(cfg.schedule, tm.epsilon, total=cfg.pgd_steps)
    restarts = 0
    for r in range(cfg.max_restarts):
        ctx.phase(f"restart {r}")
        idx = ctx.affordable(ctx.active(), cfg.init_cost + 1)
        if not idx.size:
            break
        if cfg.init == "rrt":
            x0 = rrt_init(ctx, idx, r, ctx.x[sample_targets(ctx, idx, r)], cfg.init_steps, alpha)
        elif cfg.init == "odi":
            x0 = odi_init(ctx, idx, r, cfg.init_steps, alpha)
        else:
            x0 = uniform_init(ctx, idx, r)
        if cfg.multi_target:
            spec = LossSpec("targeted_margin", target=plans[idx, r % (ctx.C - 1)])
        else:
            spec = LossSpec(cfg.loss)
        ctx.ascend(idx, x0, cfg.pgd_steps, spec, sched, momentum=cfg.momentum,
                   momentum_from=cfg.momentum_from)
        ctx.reallocate(cfg.policy)
        restarts += 1
    return ctx.finish(restarts=restarts)


def ablation_ladder() -> dict:
    """Configs for the cumulative component ablation, weakest first (after plain PGD)."""
    return {
        "ODI+PGD": RRTConfig(init="odi", multi_target=False, momentum=None),
        "ODI+PGD+MT": RRTConfig(init="odi", multi_target=True, momentum=None),
        "ODI+PGD+MT+MIM": RRTConfig(init="odi", multi_target=True, momentum=1.0),
        "RRT+PGD+MT+MIM": RRTConfig(init="rrt", multi_target=True, momentum=1.0),
    }

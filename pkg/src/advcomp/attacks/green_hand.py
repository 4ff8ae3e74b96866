"""ODI-PGD with SGDR step decay, growing restarts and hard-sample filtering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..budget import Status
from ..errors import ConfigurationError
from ..inits import biased_odi_init
from ..losses import LossSpec
from .common import config_from_dict, make_context, schedule


@dataclass
class GreenHandConfig:
    restarts: int = 17
    min_iters: int = 10
    max_iters: int = 60
    odi_steps: int = 2
    odi_alpha: float = 1.0
    bias_weight: float = 0.5
    eta_max: float = 1.0
    eta_min_ratio: float = 0.001
    loss: str = "margin"
    # samples below this quantile of best loss after the warm-up are dropped
    filter_quantile: float | None = 0.25
    warmup_restarts: int = 1
    policy: str = "even_split"

    def __post_init__(self):
        if not 1 <= self.min_iters <= self.max_iters:
            raise ConfigurationError("need 1 <= min_iters <= max_iters")
        if self.filter_quantile is not None and not 0.0 <= self.filter_quantile < 1.0:
            raise ConfigurationError("filter_quantile must lie in [0, 1)")

    @classmethod
    def from_dict(cls, params):
        return config_from_dict(cls, params)

    def lengths(self) -> list:
        """Iterations per restart, non-decreasing from min_iters to max_iters."""
        return [int(v) for v in np.rint(np.linspace(self.min_iters, self.max_iters, self.restarts))]


def odi_pgd_sgdr(model, batch, tm, cfg: GreenHandConfig | None = None, *, ledger=None, seed=0):
    cfg = cfg or GreenHandConfig()
    ctx = make_context(model, batch, tm, ledger, seed)
    ctx.phase("clean")
    ctx.clean_pass()
    spec = LossSpec(cfg.loss)
    filtered = 0
    for r, length in enumerate(cfg.lengths()):
        ctx.phase(f"restart {r}")
        idx = ctx.affordable(ctx.active(), cfg.odi_steps + 1)
        if not idx.size:
            break
        x0 = biased_odi_init(ctx, idx, r, cfg.odi_steps, cfg.odi_alpha * tm.epsilon, cfg.bias_weight)
        sched = schedule("sgdr_cosine", tm.epsilon, eta=cfg.eta_max, floor=cfg.eta_min_ratio, total=length)
        ctx.ascend(idx, x0, length, spec, sched)
        if cfg.filter_quantile and r == cfg.warmup_restarts - 1:
            act = ctx.active()
            if act.size:
                thr = np.quantile(ctx.state.best_loss[act], cfg.filter_quantile)
                drop = act[ctx.state.best_loss[act] < thr]
                ctx.mark(drop, Status.FILTERED_ROBUST)
                filtered = int(drop.size)
        ctx.reallocate(cfg.policy)
    return ctx.finish(filtered=filtered)

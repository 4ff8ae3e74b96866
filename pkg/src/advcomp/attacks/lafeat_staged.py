"""Staged LAFEAT attack with a robust / non-robust model switch.

Probe with untargeted LAFEAT, then targeted DLR on the top wrong classes.
If the targeted phase breaks a large share of the probe's survivors the
model is treated as non-robust and the rest of the budget goes to targeted
LAFEAT over the top-9 wrong classes; otherwise it all goes to untargeted
LAFEAT. Every setting starts from the best perturbation found so far.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..engine import multi_target_plans
from ..errors import ConfigurationError
from ..losses import LossSpec
from .common import config_from_dict, make_context, require_classes, row_schedule, schedule


@dataclass
class LafeatStagedConfig:
    probe_iters: int = 10
    dlr_targets: int = 3
    dlr_iters: int = 10
    final_targets: int = 9
    # share of probe survivors the targeted phase must break to call the model non-robust
    drop_threshold: float = 0.20
    eta: float = 1.0
    t: float = 1.0
    leftover_rounds: int = 4
    policy: str = "even_split"

    def __post_init__(self):
        if min(self.probe_iters, self.dlr_targets, self.dlr_iters, self.final_targets) < 1:
            raise ConfigurationError("iteration and target counts must be positive")

    @classmethod
    def from_dict(cls, params):
        return config_from_dict(cls, params)


def _run(ctx, idx, iters, spec, eta, *, limit=None):
    """One setting warm-started from the current best candidates."""
    if not idx.size:
        return
    totals = np.full(idx.size, iters) if limit is None else limit
    sched = schedule("cos4", ctx.tm.epsilon, eta=eta, total=iters)
    ctx.ascend(idx, ctx.state.best_x[idx], int(np.max(totals)), spec, row_schedule(sched, totals),
               limit=totals)


def lafeat_staged(model, batch, tm, cfg: LafeatStagedConfig | None = None, *, ledger=None, seed=0):
    cfg = cfg or LafeatStagedConfig()
    ctx = make_context(model, batch, tm, ledger, seed)
    require_classes(ctx, cfg.dlr_targets + 1, "targeted DLR over the top wrong classes")
    require_classes(ctx, 4, "targeted DLR")
    ctx.phase("clean")
    clean = ctx.clean_pass()
    n_final = min(cfg.final_targets, ctx.C - 1)
    plans = multi_target_plans(clean, ctx.y, max(cfg.dlr_targets, n_final))
    untargeted = LossSpec("lafeat")

    ctx.phase("probe")
    _run(ctx, ctx.affordable(ctx.active(), 1), cfg.probe_iters, untargeted, cfg.eta)
    ctx.reallocate(cfg.policy)
    survivors = ctx.active().size

    for j in range(cfg.dlr_targets):
        ctx.phase(f"dlr target {j}")
        idx = ctx.affordable(ctx.active(), 1)
        _run(ctx, idx, cfg.dlr_iters, LossSpec("dlr_targeted", target=plans[idx, j]), cfg.eta)
        ctx.reallocate(cfg.policy)
    broken = survivors - ctx.active().size
    rate = broken / survivors if survivors else 0.0
    non_robust = rate > cfg.drop_threshold

    if non_robust:
        for j in range(n_final):
            ctx.phase(f"lafeat target {j}")
            idx = ctx.affordable(ctx.active(), 1)
            share = ctx.ledger.remaining(idx) // (n_final - j)
            keep = share > 0
            idx, share = idx[keep], share[keep]
            spec = LossSpec("lafeat_targeted", target=plans[idx, j], t=cfg.t)
            _run(ctx, idx, int(share.max()) if share.size else 1, spec, cfg.eta, limit=share)
            ctx.reallocate(cfg.policy)

    # untargeted LAFEAT on whatever budget is left (all of it for robust models)
    for rnd in range(cfg.leftover_rounds):
        ctx.phase(f"lafeat untargeted {rnd}")
        idx = ctx.affordable(ctx.active(), 1)
        if not idx.size:
            break
        rem = ctx.ledger.remaining(idx)
        _run(ctx, idx, int(rem.max()), untargeted, cfg.eta, limit=rem)
        ctx.reallocate(cfg.policy)
    return ctx.finish(model_robust=not non_robust, incremental_success_rate=rate)

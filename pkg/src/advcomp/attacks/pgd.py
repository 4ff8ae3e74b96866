"""PGD / BIM / MIM with restarts."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigurationError
from ..inits import InitSpec, run_init
from ..losses import LossSpec
from .common import config_from_dict, make_context, schedule


@dataclass
class PGDConfig:
    """Plain sign-gradient ascent.

    ``eta`` and ``floor`` are multiples of epsilon. ``init.kind == "none"``
    gives BIM; setting ``momentum`` gives MIM.
    """

    steps: int = 100
    restarts: int = 1
    init: InitSpec = field(default_factory=lambda: InitSpec("uniform"))
    loss: str = "cross_entropy"
    schedule: str = "fixed"
    eta: float = 0.25
    floor: float = 0.01
    momentum: float | None = None
    momentum_from: int = 0

    def __post_init__(self):
        if isinstance(self.init, dict):
            self.init = InitSpec(**self.init)
        if self.steps < 1:
            raise ConfigurationError("PGD needs steps >= 1")
        if self.restarts < 1:
            raise ConfigurationError("PGD needs restarts >= 1")
        if self.momentum is not None and self.momentum < 0:
            raise ConfigurationError("momentum decay must be non-negative")

    @classmethod
    def from_dict(cls, params):
        return config_from_dict(cls, params)


def pgd(model, batch, tm, cfg: PGDConfig | None = None, *, ledger=None, seed=0):
    cfg = cfg or PGDConfig()
    ctx = make_context(model, batch, tm, ledger, seed)
    ctx.phase("clean")
    ctx.clean_pass()
    sched = schedule(cfg.schedule, tm.epsilon, eta=cfg.eta, floor=cfg.floor, total=cfg.steps)
    spec = LossSpec(cfg.loss)
    for r in range(cfg.restarts):
        ctx.phase(f"restart {r}")
        idx = ctx.affordable(ctx.active(), cfg.init.cost + 1)
        if not idx.size:
            break
        x0 = run_init(ctx, cfg.init, idx, r)
        ctx.ascend(idx, x0, cfg.steps, spec, sched, momentum=cfg.momentum,
                   momentum_from=cfg.momentum_from)
    return ctx.finish()


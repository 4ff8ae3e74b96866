"""Attack pipelines and the name registry used by the harness and CLI."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from ..engine import AttackOutcome, multi_target_plan
from ..errors import ConfigurationError
from .dh import DHConfig, dh_attack
from .fr_pgd import FRPGDConfig, fr_pgd
from .green_hand import GreenHandConfig, odi_pgd_sgdr
from .lafeat_staged import LafeatStagedConfig, lafeat_staged
from .oia import OIAConfig, oia
from .pgd import PGDConfig, pgd
from .reference import EmptyConfig, identity, oracle_attack
from .rrt_mt import RRTConfig, ablation_ladder, rrt_mt_mim


@dataclass(frozen=True)
class Pipeline:
    name: str
    run: Callable
    config: type
    # extra forwards per backward (success checks, target logits, global trials) and fixed extras
    forward_per_backward: float
    forward_fixed: int


PIPELINES = {
    "pgd": Pipeline("pgd", pgd, PGDConfig, 0.01, 2),
    "odi_pgd_sgdr": Pipeline("odi_pgd_sgdr", odi_pgd_sgdr, GreenHandConfig, 1 / 12, 2),
    "lafeat_staged": Pipeline("lafeat_staged", lafeat_staged, LafeatStagedConfig, 0.1, 20),
    "oia": Pipeline("oia", oia, OIAConfig, 1 / 22, 4),
    "rrt_mt_mim": Pipeline("rrt_mt_mim", rrt_mt_mim, RRTConfig, 2 / 20, 2),
    "fr_pgd": Pipeline("fr_pgd", fr_pgd, FRPGDConfig, 1 / 6, 3),
    "dh_attack": Pipeline("dh_attack", dh_attack, DHConfig, 2 / 30, 3),
    "identity": Pipeline("identity", identity, EmptyConfig, 0.0, 1),
    "linear_oracle": Pipeline("linear_oracle", oracle_attack, EmptyConfig, 0.0, 1),
}

ALIASES = {
    "green_hand": "odi_pgd_sgdr",
    "um_siat": "lafeat_staged",
    "s3l": "oia",
    "borderline": "rrt_mt_mim",
    "kanra": "fr_pgd",
    "balabala2020": "dh_attack",
}

COMPETITION = ("odi_pgd_sgdr", "lafeat_staged", "oia", "rrt_mt_mim", "fr_pgd", "dh_attack")


def get_pipeline(name: str) -> Pipeline:
    key = ALIASES.get(name.lower(), name.lower())
    if key not in PIPELINES:
        raise ConfigurationError(f"unknown attack {name!r}; choose from {sorted(PIPELINES) + sorted(ALIASES)}")
    return PIPELINES[key]


def declared_budget(name: str, backward_quota: int) -> dict:
    """Worst-case average per-image usage a pipeline can reach under a quota."""
    p = get_pipeline(name)
    fwd = backward_quota + math.ceil(p.forward_per_backward * backward_quota) + p.forward_fixed
    optimising = p.name not in ("identity", "linear_oracle")
    return {"avg_backward": backward_quota if optimising else 0,
            "avg_forward": fwd if optimising else p.forward_fixed}


def run_attack(name, model, batch, tm, params=None, *, ledger=None, seed=0) -> AttackOutcome:
    p = get_pipeline(name)
    cfg = params if isinstance(params, p.config) else p.config.from_dict(params)
    return p.run(model, batch, tm, cfg, ledger=ledger, seed=seed)


__all__ = [
    "AttackOutcome", "COMPETITION", "DHConfig", "FRPGDConfig", "GreenHandConfig", "LafeatStagedConfig",
    "OIAConfig", "PGDConfig", "PIPELINES", "RRTConfig", "ablation_ladder", "declared_budget", "dh_attack",
    "fr_pgd", "get_pipeline", "identity", "lafeat_staged", "multi_target_plan", "odi_pgd_sgdr", "oia",
    "oracle_attack", "pgd", "rrt_mt_mim", "run_attack",
]

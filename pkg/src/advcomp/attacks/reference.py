"""Non-optimising reference attacks used to sanity-check scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..budget import Status
from ..oracle import linear_oracle
from .common import config_from_dict, make_context


@dataclass
class EmptyConfig:
    @classmethod
    def from_dict(cls, params):
        return config_from_dict(cls, params)


def identity(model, batch, tm, cfg=None, *, ledger=None, seed=0):
    """Returns the clean inputs (one forward each to set honest success flags)."""
    ctx = make_context(model, batch, tm, ledger, seed)
    ctx.phase("clean")
    ctx.clean_pass()
    return ctx.finish()


def oracle_attack(model, batch, tm, cfg=None, *, ledger=None, seed=0):
    """Closed-form optimal attack for linear models; the witness is checked with one forward."""
    ctx = make_context(model, batch, tm, ledger, seed)
    ctx.phase("oracle")
    verdict = linear_oracle(model, batch.data, batch.labels, tm)
    idx = np.array(sorted(verdict.witnesses), dtype=np.int64)
    if idx.size:
        ctx.check(idx, np.stack([verdict.witnesses[i] for i in idx.tolist()]))
    rest = np.flatnonzero(ctx.state.status == Status.ACTIVE)
    ctx.check(rest, batch.data[rest])
    return ctx.finish()

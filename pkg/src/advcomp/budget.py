"""Forward/backward quota accounting.

Rules implemented here:

* a backward (input-gradient) call on an image also costs one forward;
* quotas are dataset averages: mean backward <= ``backward_quota`` and mean
  forward <= ``forward_quota`` over *all* images, including ones an attack
  stops early on;
* each image has a backward *allocation*; attacks move unspent allocation
  from finished images to active ones with ``reallocate``. The sum of
  allocations never changes.

In strict mode every charge is checked against the per-image allocation
(backward) and against the dataset-level totals (both counters).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import BudgetExceeded, ConfigurationError
from .losses import LossSpec


class Status(IntEnum):
    ACTIVE = 0
    SUCCEEDED = 1
    FILTERED_ROBUST = 2
    EXHAUSTED = 3


class BudgetLedger:
    def __init__(self, n, backward_quota=100, forward_quota=200, *, strict=False):
        if n < 0:
            raise ConfigurationError("n must be non-negative")
        self.n = n
        self.backward_quota = int(backward_quota)
        self.forward_quota = int(forward_quota)
        self.strict = strict
        self.forward = np.zeros(n, dtype=np.int64)
        self.backward = np.zeros(n, dtype=np.int64)
        self.allocation = np.full(n, self.backward_quota, dtype=np.int64)
        self.phase = "setup"
        self._lock = threading.Lock()

    def _indices(self, idx):
        idx = np.asarray(idx, dtype=np.int64).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise ConfigurationError("sample index out of range")
        return idx

    def charge_forward(self, idx) -> None:
        idx = self._indices(idx)
        if not idx.size:
            return
        with self._lock:
            if self.strict and self.forward.sum() + idx.size > self.forward_quota * self.n:
                raise BudgetExceeded(f"forward quota exceeded during phase {self.phase!r}")
            np.add.at(self.forward, idx, 1)

    def charge_backward(self, idx) -> None:
        idx = self._indices(idx)
        if not idx.size:
            return
        with self._lock:
            if self.strict:
                after = self.backward.copy()
                np.add.at(after, idx, 1)
                over = np.flatnonzero(after > self.allocation)
                if over.size:
                    raise BudgetExceeded(
                        f"sample {int(over[0])} exceeds its backward allocation during phase {self.phase!r}"
                    )
                if self.forward.sum() + idx.size > self.forward_quota * self.n:
                    raise BudgetExceeded(f"forward quota exceeded during phase {self.phase!r}")
            np.add.at(self.backward, idx, 1)
            np.add.at(self.forward, idx, 1)

    def remaining(self, idx=None) -> np.ndarray:
        """Unspent backward allocation."""
        rem = self.allocation - self.backward
        return rem if idx is None else rem[np.asarray(idx, dtype=np.int64)]

    def within_quota(self) -> bool:
        return (
            self.backward.sum() <= self.backward_quota * self.n
            and self.forward.sum() <= self.forward_quota * self.n
        )


@dataclass
class SampleState:
    """Per-sample attack progress.

    ``best_loss`` is the margin (best wrong logit minus true logit) of
    ``best_x``; it only ever increases.
    """

    status: np.ndarray
    best_x: np.ndarray
    best_loss: np.ndarray

    @classmethod
    def fresh(cls, x_orig):
        n = x_orig.shape[0]
        return cls(
            status=np.full(n, Status.ACTIVE, dtype=np.int64),
            best_x=np.array(x_orig, dtype=np.float64, copy=True),
            best_loss=np.full(n, -np.inf),
        )

    def active(self) -> np.ndarray:
        return np.flatnonzero(self.status == Status.ACTIVE)


def reallocate(ledger: BudgetLedger, status, policy="even_split") -> np.ndarray:
    """Move unspent backward allocation from non-active samples to active ones.

    ``even_split`` gives every active sample the same share;
    ``proportional`` weights shares by each active sample's current
    allocation. Integer remainders go to the lowest sample indices.
    """
    if policy not in ("even_split", "proportional"):
        raise ConfigurationError(f"unknown reallocation policy {policy!r}")
    status = np.asarray(status)
    with ledger._lock:
        active = np.flatnonzero(status == Status.ACTIVE)
        if not active.size:
            return ledger.allocation.copy()
        done = np.flatnonzero(status != Status.ACTIVE)
        pool = int((ledger.allocation[done] - ledger.backward[done]).clip(min=0).sum())
        ledger.allocation[done] = np.minimum(ledger.allocation[done], ledger.backward[done])
        if pool:
            weights = ledger.allocation[active].astype(np.int64)
            if policy == "proportional" and weights.sum() > 0:
                share = pool * weights // weights.sum()
            else:
                share = np.full(active.size, pool // active.size, dtype=np.int64)
            leftover = pool - int(share.sum())
            share[:leftover] += 1
            ledger.allocation[active] += share
        return ledger.allocation.copy()


def usage_report(ledger: BudgetLedger) -> dict:
    """Exact usage statistics; averages are over every image in the dataset."""
    n = max(ledger.n, 1)
    return {
        "n": ledger.n,
        "total_backward": int(ledger.backward.sum()),
        "total_forward": int(ledger.forward.sum()),
        "avg_backward": float(ledger.backward.sum()) / n if ledger.n else 0.0,
        "avg_forward": float(ledger.forward.sum()) / n if ledger.n else 0.0,
        "max_backward": int(ledger.backward.max()) if ledger.n else 0,
        "max_forward": int(ledger.forward.max()) if ledger.n else 0,
        "backward_quota": ledger.backward_quota,
        "forward_quota": ledger.forward_quota,
        "within_quota": bool(ledger.within_quota()),
        "per_image_backward": ledger.backward.tolist(),
        "per_image_forward": ledger.forward.tolist(),
    }


class MeteredModel:
    """Model access that charges every call to a ledger.

    Holds an ``InstrumentedModel`` whose row counters are an independent
    shadow of the ledger totals.
    """

    def __init__(self, model, ledger: BudgetLedger):
        from .models import InstrumentedModel

        self.shadow = InstrumentedModel(model)
        self.ledger = ledger

    @property
    def model(self):
        return self.shadow.model

    def logits(self, idx, x) -> np.ndarray:
        self.ledger.charge_forward(idx)
        return self.shadow.forward(x)

    def value_and_grad(self, idx, x, y, spec: LossSpec):
        self.ledger.charge_backward(idx)
        return self.shadow.value_and_grad(x, y, spec)

"""Shared machinery for budgeted sign-gradient attacks.

``AttackContext`` owns everything one attack run on one model needs: the
metered model, the ledger, per-sample state and the rng stream factory.
Pipelines are written as sequences of ``ctx.ascend`` calls separated by
phase boundaries where budget is reallocated.

Success is only ever recorded from logits the model actually produced for
the candidate being stored, so success flags are sound by construction.
The logits that come with every gradient call double as the success check
for the point the gradient was taken at.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses
from .budget import BudgetLedger, MeteredModel, SampleState, Status, reallocate, usage_report
from .data import ImageBatch
from .errors import ConfigurationError
from .schedules import ScheduleSpec, step_size
from .threat import ThreatModel, project

PURPOSES = {"uniform": 1, "odi": 2, "rrt_target": 3, "loss_choice": 4, "misc": 5}


def derive_seed(global_seed: int, model_id: str) -> tuple:
    """Stable per-model seed words (independent of Python's hash randomisation)."""
    return (int(global_seed), zlib.crc32(model_id.encode("utf-8")))


def multi_target_plan(clean_logits, y, count) -> list:
    """Wrong classes by clean logit, highest first; ties go to the lower index."""
    z = np.asarray(clean_logits, dtype=np.float64).ravel()
    if count > z.shape[0] - 1:
        raise ConfigurationError(f"count {count} exceeds the {z.shape[0] - 1} wrong classes")
    order = [int(c) for c in np.argsort(-z, kind="stable") if c != y]
    return order[:count]


def multi_target_plans(clean_logits, y, count) -> np.ndarray:
    """Row-wise ``multi_target_plan``; shape (n, count)."""
    z = np.asarray(clean_logits, dtype=np.float64)
    if count > z.shape[1] - 1:
        raise ConfigurationError(f"count {count} exceeds the {z.shape[1] - 1} wrong classes")
    masked = z.copy()
    masked[np.arange(z.shape[0]), y] = -np.inf
    return np.argsort(-masked, axis=1, kind="stable")[:, :count]


@dataclass
class AttackOutcome:
    candidates: np.ndarray
    success: np.ndarray
    status: np.ndarray
    best_loss: np.ndarray
    loss_traces: list
    usage: dict
    shadow: dict
    allocation_trace: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return float(self.success.mean()) if self.success.size else 0.0


class AttackContext:
    def __init__(self, model, batch: ImageBatch, tm: ThreatModel, ledger: BudgetLedger | None = None,
                 seed=0):
        if batch.dim != model.input_dim:
            raise ConfigurationError(f"dataset dim {batch.dim} != model input dim {model.input_dim}")
        if batch.num_classes != model.num_classes:
            raise ConfigurationError("dataset and model disagree on the number of classes")
        self.model = model
        self.batch = batch
        self.x = batch.data
        self.y = batch.labels
        self.n = batch.n
        self.C = model.num_classes
        self.tm = tm
        self.ledger = ledger if ledger is not None else BudgetLedger(batch.n)
        if self.ledger.n != batch.n:
            raise ConfigurationError("ledger size does not match the batch")
        self.meter = MeteredModel(model, self.ledger)
        self.state = SampleState.fresh(batch.data)
        self.traces = [[] for _ in range(batch.n)]
        self.seed = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
        self.clean_logits = None
        self.allocation_trace = []
        self.info = {}

    # -- bookkeeping -------------------------------------------------------

    def phase(self, name: str) -> None:
        self.ledger.phase = name

    def rng(self, sample: int, restart: int, purpose: str) -> np.random.Generator:
        words = list(self.seed) + [int(sample), int(restart), PURPOSES[purpose]]
        return np.random.default_rng(np.random.SeedSequence(words))

    def draw(self, idx, restart, purpose, fn: Callable) -> np.ndarray:
        """Stack ``fn(rng)`` over rows, one independent stream per sample."""
        return np.stack([fn(self.rng(i, restart, purpose)) for i in np.asarray(idx).tolist()]) \
            if len(idx) else np.zeros((0,))

    def active(self, idx=None) -> np.ndarray:
        idx = np.arange(self.n) if idx is None else np.asarray(idx, dtype=np.int64)
        return idx[self.state.status[idx] == Status.ACTIVE]

    def affordable(self, idx, cost: int) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        return idx[self.ledger.remaining(idx) >= cost]

    def reallocate(self, policy="even_split") -> None:
        reallocate(self.ledger, self.state.status, policy)
        self.allocation_trace.append(int(self.ledger.allocation.sum()))

    def mark(self, idx, status: Status) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        sel = idx[self.state.status[idx] == Status.ACTIVE]
        self.state.status[sel] = status

    # -- observation -------------------------------------------------------

    def observe(self, idx, x, z) -> np.ndarray:
        """Record evaluated points; returns the mask of rows now succeeded."""
        idx = np.asarray(idx, dtype=np.int64)
        y = self.y[idx]
        margin = losses.evaluate(losses.LossSpec("margin"), z, y).value
        mis = np.argmax(z, axis=1) != y
        st = self.state
        open_ = st.status[idx] != Status.SUCCEEDED
        better = open_ & ((margin > st.best_loss[idx]) | mis)
        rows = idx[better]
        st.best_x[rows] = x[better]
        st.best_loss[rows] = np.maximum(st.best_loss[rows], margin[better])
        newly = open_ & mis
        st.status[idx[newly]] = Status.SUCCEEDED
        for i, v in zip(idx.tolist(), st.best_loss[idx].tolist()):
            self.traces[i].append(v)
        return st.status[idx] == Status.SUCCEEDED

    def check(self, idx, x) -> np.ndarray:
        """Charged forward on candidates ``x`` for samples ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        if not idx.size:
            return np.zeros(0, dtype=bool)
        z = self.meter.logits(idx, x)
        return self.observe(idx, x, z)

    def clean_pass(self) -> np.ndarray:
        """One charged forward on every clean input; stores the clean logits."""
        idx = np.arange(self.n)
        z = self.meter.logits(idx, self.x)
        self.clean_logits = z
        self.observe(idx, self.x, z)
        return z

    def grad(self, idx, x, spec: losses.LossSpec, *, observe=True):
        idx = np.asarray(idx, dtype=np.int64)
        value, g, z, degenerate = self.meter.value_and_grad(idx, x, self.y[idx], spec)
        if observe:
            self.observe(idx, x, z)
        return value, g, z, degenerate

    # -- iteration ---------------------------------------------------------

    def sign_steps(self, idx, x, steps, spec, alpha, *, tm=None, observe=True) -> np.ndarray:
        """``steps`` unconditional projected sign steps (exactly ``steps`` charges per row)."""
        tm = tm or self.tm
        idx = np.asarray(idx, dtype=np.int64)
        x = np.array(x, dtype=np.float64, copy=True)
        for _ in range(steps):
            if not idx.size:
                break
            _, g, _, _ = self.grad(idx, x, spec, observe=observe)
            x = project(x + alpha * np.sign(g), self.x[idx], tm)
        return x

    def ascend(self, idx, x0, steps, loss, eta, *, momentum=None, momentum_from=0, limit=None,
               tm=None, observe=True, stop_on_success=True, final_check=True) -> np.ndarray:
        """Projected sign-gradient ascent with early stopping and budget checks.

        ``loss`` is a LossSpec aligned with ``idx`` or ``k -> LossSpec``;
        ``eta`` is a ScheduleSpec or ``k -> step`` (scalar or per-row array).
        With ``momentum`` set, steps follow the L1-normalised accumulated
        gradient from iteration ``momentum_from`` on (buffer is zero before).
        """
        tm = tm or self.tm
        idx = np.asarray(idx, dtype=np.int64)
        x = np.array(x0, dtype=np.float64, copy=True)
        m = idx.size
        cap = np.full(m, steps, dtype=np.int64) if limit is None else np.asarray(limit, dtype=np.int64)
        used = np.zeros(m, dtype=np.int64)
        live = np.ones(m, dtype=bool)
        pending = np.ones(m, dtype=bool)
        buf = np.zeros_like(x)
        for k in range(steps):
            if stop_on_success:
                live &= self.state.status[idx] == Status.ACTIVE
            rows = np.flatnonzero(live & (used < cap) & (self.ledger.remaining(idx) >= 1))
            if not rows.size:
                break
            spec = loss(k) if callable(loss) else loss
            _, g, _, _ = self.grad(idx[rows], x[rows], spec.take(rows), observe=observe)
            used[rows] += 1
            pending[rows] = False
            if stop_on_success:
                keep = self.state.status[idx[rows]] == Status.ACTIVE
                rows, g = rows[keep], g[keep]
            if momentum is not None and k >= momentum_from:
                l1 = np.abs(g).sum(axis=1, keepdims=True)
                buf[rows] = momentum * buf[rows] + g / np.maximum(l1, 1e-12)
                g = buf[rows]
            step = step_size(eta, k) if isinstance(eta, ScheduleSpec) else eta(k)
            step = np.asarray(step, dtype=np.float64)
            if step.ndim:
                step = step[rows][:, None]
            x[rows] = project(x[rows] + step * np.sign(g), self.x[idx[rows]], tm)
            pending[rows] = True
        if final_check and observe:
            rows = np.flatnonzero(pending & (self.state.status[idx] == Status.ACTIVE) & (used > 0))
            self.check(idx[rows], x[rows])
        return x

    # -- result ------------------------------------------------------------

    def finish(self, **info) -> AttackOutcome:
        st = self.state
        st.status[st.status == Status.ACTIVE] = Status.EXHAUSTED
        self.info.update(info)
        return AttackOutcome(
            candidates=st.best_x.copy(),
            success=st.status == Status.SUCCEEDED,
            status=st.status.copy(),
            best_loss=st.best_loss.copy(),
            loss_traces=self.traces,
            usage=usage_report(self.ledger),
            shadow={"forward": self.meter.shadow.forward_rows,
                    "backward": self.meter.shadow.backward_rows},
            allocation_trace=list(self.allocation_trace),
            info=dict(self.info),
        )

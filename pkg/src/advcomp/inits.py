"""Restart starting points.

All initialisers take an ``AttackContext``, the sample indices to
initialise and the restart number (which selects the rng streams). Each
charges exactly ``steps`` backward calls per sample it is given; callers are
responsible for only passing samples that can afford that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import AttackContext, multi_target_plans
from .errors import ConfigurationError
from .losses import LossSpec, best_wrong
from .threat import project

INIT_KINDS = ("none", "uniform", "odi", "biased_odi", "rrt", "restricted_odi")


@dataclass(frozen=True)
class InitSpec:
    """Initialiser choice; ``alpha`` is in units of epsilon."""

    kind: str = "uniform"
    steps: int = 0
    alpha: float = 1.0
    bias_weight: float = 0.5

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ConfigurationError(f"unknown init kind {self.kind!r}")
        if self.steps < 0 or not self.alpha > 0:
            raise ConfigurationError("init needs steps >= 0 and alpha > 0")
        if not 0.0 <= self.bias_weight <= 1.0:
            raise ConfigurationError("bias_weight must lie in [0, 1]")

    @property
    def cost(self) -> int:
        """Backward calls charged per sample."""
        if self.kind == "restricted_odi":
            return 10
        return self.steps if self.kind in ("odi", "biased_odi", "rrt") else 0


def uniform_init(ctx: AttackContext, idx, restart) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    eps = ctx.tm.epsilon
    noise = ctx.draw(idx, restart, "uniform", lambda g: g.uniform(-eps, eps, size=ctx.x.shape[1]))
    return project(ctx.x[idx] + noise.reshape(idx.size, -1), ctx.x[idx], ctx.tm)


def random_directions(ctx: AttackContext, idx, restart) -> np.ndarray:
    """One output-space direction w ~ U(-1, 1)^C per sample and restart."""
    return ctx.draw(idx, restart, "odi", lambda g: g.uniform(-1.0, 1.0, size=ctx.C)).reshape(len(idx), ctx.C)


def odi_init(ctx: AttackContext, idx, restart, steps, alpha, *, direction=None, x_start=None):
    """Ascend w . f(x) with projected sign steps of size ``alpha`` (absolute)."""
    if steps < 1:
        raise ConfigurationError("ODI needs at least one step")
    idx = np.asarray(idx, dtype=np.int64)
    w = random_directions(ctx, idx, restart) if direction is None else direction
    x = ctx.x[idx] if x_start is None else x_start
    return ctx.sign_steps(idx, x, steps, LossSpec("output_direction", direction=w), alpha)


def biased_odi_init(ctx: AttackContext, idx, restart, steps, alpha, bias_weight=0.5, *, x_start=None):
    """ODI whose direction is blended towards raising the clean runner-up.

    w = (1 - b) w_random + b (e_runner_up - e_y)
    """
    if not 0.0 <= bias_weight <= 1.0:
        raise ConfigurationError("bias_weight must lie in [0, 1]")
    idx = np.asarray(idx, dtype=np.int64)
    if ctx.clean_logits is None:
        raise ConfigurationError("biased ODI needs the clean logits (run ctx.clean_pass first)")
    w = random_directions(ctx, idx, restart)
    y = ctx.y[idx]
    ru = best_wrong(ctx.clean_logits[idx], y)
    push = np.zeros_like(w)
    push[np.arange(idx.size), ru] = 1.0
    push[np.arange(idx.size), y] = -1.0
    w = (1.0 - bias_weight) * w + bias_weight * push
    return odi_init(ctx, idx, restart, steps, alpha, direction=w, x_start=x_start)


def sample_targets(ctx: AttackContext, idx, restart) -> np.ndarray:
    """Row indices of random dataset images whose label differs from each sample's."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.empty(idx.size, dtype=np.int64)
    for r, i in enumerate(idx.tolist()):
        pool = np.flatnonzero(ctx.y != ctx.y[i])
        if not pool.size:
            raise ConfigurationError("every image shares the same label; no real targets available")
        out[r] = pool[ctx.rng(i, restart, "rrt_target").integers(pool.size)]
    return out


def rrt_init(ctx: AttackContext, idx, restart, x_tar, steps, alpha) -> np.ndarray:
    """Ascend cos(f(x), f(x_tar)) from the clean input.

    f(x_tar) costs one forward per sample. Samples whose logits have zero
    norm fall back to a uniform start.
    """
    idx = np.asarray(idx, dtype=np.int64)
    if not idx.size:
        return ctx.x[idx]
    z_tar = ctx.meter.logits(idx, x_tar)
    spec = LossSpec("rrt_cosine", ref_logits=z_tar)
    x = ctx.x[idx].copy()
    dead = np.zeros(idx.size, dtype=bool)
    for _ in range(steps):
        _, g, _, degenerate = ctx.grad(idx, x, spec)
        dead |= degenerate
        x = project(x + alpha * np.sign(g), ctx.x[idx], ctx.tm)
    if dead.any():
        x[dead] = uniform_init(ctx, idx[dead], restart)
    return x


def restricted_odi_init(ctx: AttackContext, idx, restart, *, odi_steps=5, mt_steps=5,
                        alpha=None, mt_alpha=None) -> np.ndarray:
    """ODI followed by ascent on the summed targeted margins of the top-2 wrong classes.

    Step sizes default to ``eps`` for ODI and ``eps / 2`` for the targeted steps.
    """
    if ctx.C < 3:
        raise ConfigurationError("restricted ODI needs at least 3 classes")
    if ctx.clean_logits is None:
        raise ConfigurationError("restricted ODI needs the clean logits (run ctx.clean_pass first)")
    idx = np.asarray(idx, dtype=np.int64)
    eps = ctx.tm.epsilon
    x = odi_init(ctx, idx, restart, odi_steps, eps if alpha is None else alpha)
    targets = multi_target_plans(ctx.clean_logits[idx], ctx.y[idx], 2)
    spec = LossSpec("multi_target", target=targets)
    return ctx.sign_steps(idx, x, mt_steps, spec, eps / 2 if mt_alpha is None else mt_alpha)


def run_init(ctx: AttackContext, spec: InitSpec, idx, restart, *, x_tar=None) -> np.ndarray:
    """Dispatch on ``spec.kind``; step sizes scale with epsilon."""
    idx = np.asarray(idx, dtype=np.int64)
    a = spec.alpha * ctx.tm.epsilon
    if spec.kind == "none":
        return ctx.x[idx].copy()
    if spec.kind == "uniform":
        return uniform_init(ctx, idx, restart)
    if spec.kind == "odi":
        return odi_init(ctx, idx, restart, spec.steps, a)
    if spec.kind == "biased_odi":
        return biased_odi_init(ctx, idx, restart, spec.steps, a, spec.bias_weight)
    if spec.kind == "rrt":
        if x_tar is None:
            x_tar = ctx.x[sample_targets(ctx, idx, restart)]
        return rrt_init(ctx, idx, restart, x_tar, spec.steps, a)
    return restricted_odi_init(ctx, idx, restart)

"""PGD adversarial training for the tiny reference models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses
from .data import ImageBatch
from .errors import ConfigurationError, TrainingError
from .models import build_model, init_model, input_gradient
from .threat import ThreatModel, project


@dataclass
class TrainConfig:
    epochs: int = 30
    pgd_steps: int = 7
    epsilon: float = 8 / 255
    lr: float = 0.1
    seed: int = 0
    batch_size: int = 64
    hidden: tuple = (32,)
    activation: str = "tanh"
    momentum: float = 0.9
    # fraction of each minibatch replaced by its PGD counterpart; 1.0 is pure Madry training
    adv_fraction: float = 1.0
    weight_decay: float = 0.0


def pgd_perturb(model, x, y, tm, steps, rng, loss="cross_entropy"):
    """Random-start sign-gradient PGD, unmetered (training only)."""
    if steps == 0:
        return x
    alpha = 2.5 * tm.epsilon / steps
    spec = losses.LossSpec(loss)
    xa = project(x + rng.uniform(-tm.epsilon, tm.epsilon, size=x.shape), x, tm)
    for _ in range(steps):
        _, g, _, _ = input_gradient(model, xa, y, spec)
        xa = project(xa + alpha * np.sign(g), x, tm)
    return xa


def train_tiny_defense(arch, dataset: ImageBatch, config: TrainConfig | None = None):
    """Minibatch SGD with momentum on PGD examples; fully determined by ``config.seed``."""
    cfg = config or TrainConfig()
    if dataset.n == 0:
        raise ConfigurationError("empty training set")
    model = init_model(arch, dataset.dim, dataset.num_classes, hidden=cfg.hidden,
                       activation=cfg.activation, seed=cfg.seed)
    if cfg.epochs == 0:
        return model
    tm = ThreatModel(cfg.epsilon)
    rng = np.random.default_rng([cfg.seed, 1])
    params = [p.copy() for p in model.params()]
    velocity = [np.zeros_like(p) for p in params]
    ce = losses.LossSpec("cross_entropy")
    X, Y = dataset.data, dataset.labels
    for epoch in range(cfg.epochs):
        order = rng.permutation(dataset.n)
        for start in range(0, dataset.n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = X[idx], Y[idx]
            current = build_model(arch, params, cfg.activation)
            if cfg.pgd_steps and cfg.adv_fraction > 0:
                n_adv = int(round(cfg.adv_fraction * len(idx)))
                xb = xb.copy()
                xb[:n_adv] = pgd_perturb(current, xb[:n_adv], yb[:n_adv], tm, cfg.pgd_steps, rng)
            z = current.forward(xb)
            lv = losses.evaluate(ce, z, yb)
            if not np.isfinite(lv.value).all():
                raise TrainingError(f"non-finite loss in epoch {epoch}")
            grads = current.param_grads(xb, lv.grad / len(idx))
            for p, v, g in zip(params, velocity, grads):
                v *= cfg.momentum
                v += g + cfg.weight_decay * p
                p -= cfg.lr * v
        if not all(np.isfinite(p).all() for p in params):
            raise TrainingError(f"non-finite weights after epoch {epoch}")
    return build_model(arch, params, cfg.activation)


def accuracy(model, batch: ImageBatch, x=None) -> float:
    z = model.forward(batch.data if x is None else x)
    return float(np.mean(np.argmax(z, axis=1) == batch.labels))

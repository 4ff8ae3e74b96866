"""Reproducible desk-scale defense suites.

Each builder returns ``(models, eval_batch)`` where ``models`` is a list of
``(model_id, model)`` sharing one held-out evaluation set. Models differ in
training seed, width and training radius, a small stand-in for a zoo of
adversarially trained defenses.
"""

from __future__ import annotations

import numpy as np

from .data import ImageBatch, feature_split_blobs, gaussian_blobs, two_moons_grid
from .training import TrainConfig, train_tiny_defense


def _split(batch: ImageBatch, n_eval: int):
    return batch.subset(np.arange(n_eval, batch.n)), batch.subset(np.arange(n_eval))


def linear_suite(n_models=8, n_eval=512, dim=16, classes=4, seed=0):
    full = gaussian_blobs(n_eval + 1024, dim, classes, separation=0.25, std=0.12, seed=seed)
    train, evaluation = _split(full, n_eval)
    models = []
    for i in range(n_models):
        cfg = TrainConfig(epochs=20, pgd_steps=3 if i % 2 else 0, epsilon=(2 + 2 * (i % 4)) / 255,
                          lr=0.2, seed=seed * 100 + i)
        models.append((f"linear-{i}", train_tiny_defense("linear", train, cfg)))
    return models, evaluation


def mlp_suite(n_models=4, n_eval=256, dim=16, classes=10, seed=0, epochs=40):
    full = gaussian_blobs(n_eval + 1024, dim, classes, separation=0.5, std=0.12, seed=seed)
    train, evaluation = _split(full, n_eval)
    widths = (32, 24, 32, 48)
    radii = (8, 6, 10, 8)
    models = []
    for i in range(n_models):
        cfg = TrainConfig(epochs=epochs, pgd_steps=7, epsilon=radii[i % 4] / 255, hidden=(widths[i % 4],),
                          seed=seed * 100 + i)
        models.append((f"mlp-{i}", train_tiny_defense("mlp", train, cfg)))
    return models, evaluation


def clean_mlp_twin(classes=5, seed=0, epochs=30):
    """An undefended MLP and its adversarially trained twin on the same data.

    The data mixes strong and faint class features, so clean training is
    L-inf fragile and adversarial training is not.
    """
    full = feature_split_blobs(256 + 1024, classes, seed=seed)
    train, evaluation = _split(full, 256)
    base = dict(epochs=epochs, hidden=(32,), seed=seed)
    clean = train_tiny_defense("mlp", train, TrainConfig(pgd_steps=0, **base))
    robust = train_tiny_defense("mlp", train, TrainConfig(pgd_steps=7, epsilon=8 / 255, **base))
    return clean, robust, evaluation


def grid_suite(n_models=4, n_eval=256, classes=3, seed=0):
    """2-d inputs, small enough for exhaustive grid verification."""
    full = two_moons_grid(n_eval + 768, classes, seed=seed)
    train, evaluation = _split(full, n_eval)
    models = []
    for i in range(n_models):
        cfg = TrainConfig(epochs=60, pgd_steps=5 if i % 2 else 0, epsilon=8 / 255, hidden=(16, 16),
                          lr=0.1, seed=seed * 100 + i)
        models.append((f"grid-{i}", train_tiny_defense("mlp", train, cfg)))
    return models, evaluation

"""Attack objectives on logits, with analytic gradients w.r.t. the logits.

Every loss is written to be *maximised* by the attacker. ``evaluate`` works on
a batch of logit rows and returns the values, d(loss)/d(logits) and a mask of
rows where the loss is degenerate (undefined normaliser, zero norm). The
scalar helpers (``cross_entropy``, ``margin_loss`` ...) evaluate one row.

Ties in "best wrong class" are broken towards the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError

DLR_EPS = 1e-12
LAFEAT_MIN_MARGIN = 1e-12
# cos >= 1 - ALIGN_TOL is treated as the maximum of the cosine (zero gradient)
ALIGN_TOL = 1e-12

KINDS = (
    "cross_entropy",
    "margin",
    "dlr",
    "dlr_targeted",
    "lafeat",
    "lafeat_targeted",
    "md_phase",
    "rrt_cosine",
    "output_direction",
    "targeted_margin",
    "multi_target",
    "constant",
)
TARGETED = {"dlr_targeted", "lafeat_targeted", "targeted_margin", "multi_target"}


@dataclass(frozen=True, eq=False)
class LossSpec:
    """Which objective to evaluate plus its per-row parameters.

    Array fields (``target``, ``ref_logits``, ``direction``) are either a
    single value broadcast to every row or one entry per row; ``take``
    subsets the per-row ones.
    """

    kind: str
    target: object = None
    t: float = 1.0
    k: int | None = None
    K: int | None = None
    r: int | None = None
    ref_logits: np.ndarray | None = None
    direction: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown loss kind {self.kind!r}")
        if (self.target is not None) != (self.kind in TARGETED):
            raise ConfigurationError(f"target must be given iff the loss is targeted ({self.kind})")
        if self.kind == "md_phase":
            if self.k is None or self.K is None or self.r is None:
                raise ConfigurationError("md_phase needs k, K and r")
            if not (0 <= self.k < self.K) or self.r < 1:
                raise ConfigurationError("md_phase needs 0 <= k < K and r >= 1")
        if self.kind == "lafeat_targeted" and not self.t > 0:
            raise ConfigurationError("t must be positive")
        if self.kind == "rrt_cosine" and self.ref_logits is None:
            raise ConfigurationError("rrt_cosine needs reference logits")
        if self.kind == "output_direction" and self.direction is None:
            raise ConfigurationError("output_direction needs a direction vector")

    def take(self, rows) -> "LossSpec":
        """Restrict per-row parameters to ``rows``."""
        changes = {}
        for f in fields(self):
            if f.name not in ("target", "ref_logits", "direction"):
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            arr = np.asarray(v)
            single_ndim = 0 if (f.name == "target" and self.kind != "multi_target") else 1
            per_row = arr.ndim > single_ndim
            if per_row:
                changes[f.name] = arr[rows]
        return replace(self, **changes) if changes else self


class LossValue(NamedTuple):
    value: np.ndarray
    grad: np.ndarray
    degenerate: np.ndarray


def _rows(z):
    return np.arange(z.shape[0])


def best_wrong(z, y):
    """Index of the largest non-true logit per row (lowest index on ties)."""
    masked = np.array(z, dtype=np.float64, copy=True)
    masked[_rows(z), y] = -np.inf
    return np.argmax(masked, axis=1)


def _onehot(idx, C):
    out = np.zeros((idx.shape[0], C))
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


def _logsumexp_softmax(u):
    m = u.max(axis=1, keepdims=True)
    e = np.exp(u - m)
    s = e.sum(axis=1, keepdims=True)
    return (m + np.log(s))[:, 0], e / s


def _per_row_int(v, n):
    arr = np.asarray(v, dtype=np.int64)
    return np.broadcast_to(arr, (n,)) if arr.ndim == 0 else arr


def _per_row_vec(v, n):
    arr = np.asarray(v, dtype=np.float64)
    return np.broadcast_to(arr, (n, arr.shape[-1])) if arr.ndim == 1 else arr


def _sce(u, y):
    """Softmax cross-entropy of rows ``u`` against labels ``y`` and its gradient."""
    lse, p = _logsumexp_softmax(u)
    r = _rows(u)
    return lse - u[r, y], p - _onehot(y, u.shape[1])


def _check_classes(C, need, kind):
    if C < need:
        raise ConfigurationError(f"{kind} needs at least {need} classes, got {C}")


def evaluate(spec: LossSpec, z, y) -> LossValue:
    """Loss values, gradients w.r.t. ``z`` and degenerate-row flags."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    n, C = z.shape
    y = _per_row_int(y, n)
    r = _rows(z)
    ok = np.zeros(n, dtype=bool)
    kind = spec.kind

    if kind == "constant":
        return LossValue(np.zeros(n), np.zeros_like(z), ok)

    if kind == "cross_entropy":
        v, g = _sce(z, y)
        return LossValue(v, g, ok)

    if kind == "margin":
        j = best_wrong(z, y)
        return LossValue(z[r, j] - z[r, y], _onehot(j, C) - _onehot(y, C), ok)

    if kind == "targeted_margin":
        t = _per_row_int(spec.target, n)
        return LossValue(z[r, t] - z[r, y], _onehot(t, C) - _onehot(y, C), ok)

    if kind == "multi_target":
        tt = np.asarray(spec.target, dtype=np.int64)
        tt = np.broadcast_to(tt, (n, tt.shape[-1])) if tt.ndim == 1 else tt
        v = np.zeros(n)
        g = np.zeros_like(z)
        for col in range(tt.shape[1]):
            t = tt[:, col]
            v += z[r, t] - z[r, y]
            g += _onehot(t, C) - _onehot(y, C)
        return LossValue(v, g, ok)

    if kind == "output_direction":
        w = _per_row_vec(spec.direction, n)
        return LossValue(np.einsum("ij,ij->i", w, z), np.array(w, dtype=np.float64), ok)

    if kind == "md_phase":
        j = best_wrong(z, y)
        if spec.k < spec.K / 2:
            if spec.r % 2 == 0:
                return LossValue(z[r, j], _onehot(j, C), ok)
            return LossValue(-z[r, y], -_onehot(y, C), ok)
        return LossValue(z[r, j] - z[r, y], _onehot(j, C) - _onehot(y, C), ok)

    if kind == "dlr":
        _check_classes(C, 3, "dlr")
        order = np.argsort(-z, axis=1, kind="stable")
        j = best_wrong(z, y)
        num = z[r, y] - z[r, j]
        den = z[r, order[:, 0]] - z[r, order[:, 2]] + DLR_EPS
        g_num = _onehot(y, C) - _onehot(j, C)
        g_den = _onehot(order[:, 0], C) - _onehot(order[:, 2], C)
        v = -num / den
        g = -g_num / den[:, None] + (num / den**2)[:, None] * g_den
        return LossValue(v, g, ok)

    if kind == "dlr_targeted":
        _check_classes(C, 4, "dlr_targeted")
        t = _per_row_int(spec.target, n)
        order = np.argsort(-z, axis=1, kind="stable")
        num = z[r, y] - z[r, t]
        den = z[r, order[:, 0]] - 0.5 * (z[r, order[:, 2]] + z[r, order[:, 3]]) + DLR_EPS
        g_num = _onehot(y, C) - _onehot(t, C)
        g_den = _onehot(order[:, 0], C) - 0.5 * (_onehot(order[:, 2], C) + _onehot(order[:, 3], C))
        v = -num / den
        g = -g_num / den[:, None] + (num / den**2)[:, None] * g_den
        return LossValue(v, g, ok)

    if kind in ("lafeat", "lafeat_targeted"):
        j = best_wrong(z, y)
        m = z[r, y] - z[r, j]
        degenerate = m <= 0
        mc = np.where(degenerate, LAFEAT_MIN_MARGIN, m)
        dm = _onehot(y, C) - _onehot(j, C)
        if kind == "lafeat":
            scale = mc
            u = z / scale[:, None]
            v, gu = _sce(u, y)
        else:
            scale = spec.t * mc
            u = z / scale[:, None]
            tau = _per_row_int(spec.target, n)
            v, gu = _sce(u, tau)
            v, gu = -v, -gu
        g = gu / scale[:, None]
        # chain through the margin normaliser where it is not clamped
        dot = np.einsum("ij,ij->i", gu, z) / (scale * mc)
        g -= np.where(degenerate, 0.0, dot)[:, None] * dm
        return LossValue(v, g, degenerate)

    if kind == "rrt_cosine":
        zt = _per_row_vec(spec.ref_logits, n)
        n1 = np.linalg.norm(z, axis=1)
        n2 = np.linalg.norm(zt, axis=1)
        degenerate = (n1 == 0) | (n2 == 0)
        n1s = np.where(degenerate, 1.0, n1)
        n2s = np.where(degenerate, 1.0, n2)
        cos = np.einsum("ij,ij->i", z, zt) / (n1s * n2s)
        cos = np.where(degenerate, 0.0, np.clip(cos, -1.0, 1.0))
        g = zt / (n1s * n2s)[:, None] - (cos / n1s**2)[:, None] * z
        stationary = degenerate | (cos >= 1.0 - ALIGN_TOL)
        g[stationary] = 0.0
        return LossValue(cos, g, degenerate)

    raise ConfigurationError(f"unknown loss kind {kind!r}")  # pragma: no cover


def _scalar(spec, z, y):
    z = np.asarray(z, dtype=np.float64)
    return float(evaluate(spec, z[None, :], [y]).value[0])


def cross_entropy(z, y) -> float:
    return _scalar(LossSpec("cross_entropy"), z, y)


def margin_loss(z, y) -> float:
    """Best wrong logit minus true logit; positive iff misclassified."""
    return _scalar(LossSpec("margin"), z, y)


def dlr_loss(z, y) -> float:
    return _scalar(LossSpec("dlr"), z, y)


def lafeat_loss(z, y) -> float:
    return _scalar(LossSpec("lafeat"), z, y)


def lafeat_targeted(z, y, target, t=1.0) -> float:
    return _scalar(LossSpec("lafeat_targeted", target=target, t=t), z, y)


def md_phase_loss(z, y, k, K, r) -> float:
    return _scalar(LossSpec("md_phase", k=k, K=K, r=r), z, y)


def rrt_cosine(z_x, z_tar) -> float:
    z_tar = np.asarray(z_tar, dtype=np.float64)
    return _scalar(LossSpec("rrt_cosine", ref_logits=z_tar), z_x, 0)

"""Ground-truth robustness for small instances.

``linear_oracle`` is exact for linear models: the worst case of each
pairwise margin over the ball/box intersection is attained at a corner that
can be written down directly. ``grid_oracle`` enumerates a regular grid
over the feasible box and is only practical in a handful of dimensions.
Neither touches a budget ledger.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .budget import Status
from .errors import ConfigurationError
from .models import LinearModel
from .threat import ThreatModel

ATTACKABLE = "attackable"
ROBUST = "robust"
UNKNOWN = "unknown"

DEFAULT_GRID_CAP = 1 << 22


@dataclass
class RobustnessVerdict:
    verdicts: list
    witnesses: dict = field(default_factory=dict)
    worst_margin: list = field(default_factory=list)
    resolution: int | None = None

    @property
    def attackable(self) -> np.ndarray:
        return np.array([v == ATTACKABLE for v in self.verdicts], dtype=bool)

    def to_dict(self) -> dict:
        return {
            "verdicts": list(self.verdicts),
            "worst_margin": [float(v) for v in self.worst_margin],
            "resolution": self.resolution,
            "witnesses": {str(k): np.asarray(v).tolist() for k, v in sorted(self.witnesses.items())},
        }

    @classmethod
    def from_dict(cls, d) -> "RobustnessVerdict":
        return cls(
            verdicts=list(d["verdicts"]),
            witnesses={int(k): np.asarray(v) for k, v in d.get("witnesses", {}).items()},
            worst_margin=list(d.get("worst_margin", [])),
            resolution=d.get("resolution"),
        )


def _misclassified(model, x, y) -> np.ndarray:
    return np.argmax(model.forward(np.atleast_2d(x)), axis=1) != np.asarray(y)


def linear_oracle(model: LinearModel, x, y, tm: ThreatModel) -> RobustnessVerdict:
    """Exact verdicts for a linear classifier.

    For each wrong class j the true-minus-j margin (w_y - w_j).x' + b_y - b_j
    is minimised coordinate-wise over [max(0, x-eps), min(1, x+eps)]: take
    the lower end where w_y - w_j is positive and the upper end otherwise.
    The minimiser for the worst class is the witness; it is confirmed with
    a real forward pass so ties resolve exactly as argmax does.
    """
    if not isinstance(model, LinearModel):
        raise ConfigurationError("linear_oracle needs a LinearModel")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    W, b = model.weight, model.bias
    lo, hi = tm.bounds(x)
    verdicts, worst, witnesses = [], [], {}
    for i in range(x.shape[0]):
        best_m, best_pt = np.inf, None
        for j in range(W.shape[0]):
            if j == y[i]:
                continue
            dw = W[y[i]] - W[j]
            pt = np.where(dw > 0, lo[i], hi[i])
            m = float(dw @ pt + b[y[i]] - b[j])
            if m < best_m:
                best_m, best_pt = m, pt
        worst.append(best_m)
        if _misclassified(model, best_pt, [y[i]])[0]:
            verdicts.append(ATTACKABLE)
            witnesses[i] = best_pt
        else:
            verdicts.append(ROBUST)
    return RobustnessVerdict(verdicts, witnesses, worst)


def grid_points(lo, hi, resolution) -> np.ndarray:
    axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*axes)))


def grid_oracle(model, x, y, tm: ThreatModel, resolution=64, *, cap=DEFAULT_GRID_CAP) -> RobustnessVerdict:
    """Exhaustive grid over each sample's feasible box.

    Grids with resolutions r1, r2 are nested when (r2 - 1) is a multiple of
    (r1 - 1); refining that way can only turn robust into attackable.
    """
    if resolution < 2:
        raise ConfigurationError("resolution must be at least 2 points per axis")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    d = x.shape[1]
    if resolution ** d > cap:
        raise ConfigurationError(f"grid of {resolution}^{d} points exceeds the cap of {cap}")
    lo, hi = tm.bounds(x)
    verdicts, worst, witnesses = [], [], {}
    for i in range(x.shape[0]):
        pts = grid_points(lo[i], hi[i], resolution)
        z = model.forward(pts)
        zy = z[:, y[i]].copy()
        z[:, y[i]] = -np.inf
        margin = zy - z.max(axis=1)
        z[:, y[i]] = zy
        mis = np.argmax(z, axis=1) != y[i]
        worst.append(float(margin.min()))
        if mis.any():
            verdicts.append(ATTACKABLE)
            cand = np.flatnonzero(mis)
            witnesses[i] = pts[cand[np.argmin(margin[cand])]]
        else:
            verdicts.append(ROBUST)
    return RobustnessVerdict(verdicts, witnesses, worst, resolution)


def measure_filter_error(status, verdict: RobustnessVerdict) -> dict:
    """Compare a pipeline's filter decisions with oracle verdicts.

    False negative: filtered as robust although the oracle found an attack
    (rate over oracle-attackable samples). False positive: kept in play
    although the oracle proves it robust (rate over oracle-robust samples).
    """
    status = np.asarray(status)
    if status.shape[0] != len(verdict.verdicts):
        raise ConfigurationError("pipeline and oracle verdicts cover different samples")
    filtered = status == Status.FILTERED_ROBUST
    attackable = verdict.attackable
    robust = np.array([v == ROBUST for v in verdict.verdicts], dtype=bool)
    fn = int((filtered & attackable).sum())
    fp = int((~filtered & robust).sum())
    n_att, n_rob = int(attackable.sum()), int(robust.sum())
    fnr = Fraction(fn, n_att) if n_att else Fraction(0)
    fpr = Fraction(fp, n_rob) if n_rob else Fraction(0)
    return {
        "false_negatives": fn,
        "false_positives": fp,
        "attackable": n_att,
        "robust": n_rob,
        "false_negative_rate": fnr,
        "false_positive_rate": fpr,
    }

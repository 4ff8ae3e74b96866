"""Tiny differentiable classifiers with hand-written backprop.

Two architectures: ``LinearModel`` (logits = W x + b) and ``MLP`` (one or
more hidden layers with a pointwise activation). Weights are always stored
as float32-representable values so a bundle round trip is bit-exact.

Activation kink sets: ``tanh`` and ``softplus`` are smooth everywhere;
``relu`` is non-differentiable where a pre-activation is exactly 0.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import losses
from .errors import ConfigurationError, LoadError

ARCHITECTURES = ("linear", "mlp")
BUNDLE_FORMAT = "advcomp-model/1"


def _f32(a):
    return np.ascontiguousarray(np.asarray(a, dtype=np.float32).astype(np.float64))


def _act(name, a):
    if name == "tanh":
        return np.tanh(a)
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "softplus":
        return np.logaddexp(0.0, a)
    raise ConfigurationError(f"unknown activation {name!r}")


def _act_grad(name, a, h):
    if name == "tanh":
        return 1.0 - h * h
    if name == "relu":
        return (a > 0).astype(np.float64)
    if name == "softplus":
        return 0.5 * (1.0 + np.tanh(0.5 * a))
    raise ConfigurationError(f"unknown activation {name!r}")


def kink_distance(model, x) -> np.ndarray:
    """Smallest |pre-activation| per row (inf for kink-free models)."""
    x = np.atleast_2d(x)
    if not isinstance(model, MLP) or model.activation != "relu":
        return np.full(x.shape[0], np.inf)
    out = np.full(x.shape[0], np.inf)
    h = x
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        a = h @ W.T + b
        out = np.minimum(out, np.abs(a).min(axis=1))
        h = _act("relu", a)
    return out


@dataclass(frozen=True, eq=False)
class LinearModel:
    weight: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)

    architecture = "linear"

    def __post_init__(self):
        W, b = _f32(self.weight), _f32(self.bias)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ConfigurationError("linear model needs W (C, d) and b (C,)")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", W)
        object.__setattr__(self, "bias", b)

    @property
    def input_dim(self):
        return self.weight.shape[1]

    @property
    def num_classes(self):
        return self.weight.shape[0]

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        return np.atleast_2d(x) @ self.weight.T + self.bias

    def backward(self, x, grad_logits):
        """d(loss)/dx given d(loss)/d(logits)."""
        return np.asarray(grad_logits) @ self.weight

    def param_grads(self, x, grad_logits):
        x = np.atleast_2d(x)
        return [grad_logits.T @ x, grad_logits.sum(axis=0)]


@dataclass(frozen=True, eq=False)
class MLP:
    weights: tuple  # per layer (out, in)
    biases: tuple
    activation: str = "tanh"

    architecture = "mlp"

    def __post_init__(self):
        Ws = tuple(_f32(w) for w in self.weights)
        bs = tuple(_f32(b) for b in self.biases)
        if len(Ws) < 2 or len(Ws) != len(bs):
            raise ConfigurationError("an MLP needs at least one hidden layer")
        for i, (W, b) in enumerate(zip(Ws, bs)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ConfigurationError(f"layer {i}: bad weight/bias shapes")
            if i and W.shape[1] != Ws[i - 1].shape[0]:
                raise ConfigurationError(f"layer {i}: input width does not match previous layer")
            W.setflags(write=False)
            b.setflags(write=False)
        _act(self.activation, np.zeros(1))
        object.__setattr__(self, "weights", Ws)
        object.__setattr__(self, "biases", bs)

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def num_classes(self):
        return self.weights[-1].shape[0]

    @property
    def hidden(self):
        return tuple(W.shape[0] for W in self.weights[:-1])

    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def _trace(self, x):
        pre, post = [], [np.atleast_2d(x)]
        h = post[0]
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = h @ W.T + b
            h = _act(self.activation, a)
            pre.append(a)
            post.append(h)
        return pre, post

    def forward(self, x):
        _, post = self._trace(x)
        return post[-1] @ self.weights[-1].T + self.biases[-1]

    def _backprop(self, x, grad_logits, want_params):
        pre, post = self._trace(x)
        g = np.asarray(grad_logits, dtype=np.float64)
        grads = []
        for layer in range(len(self.weights) - 1, -1, -1):
            if want_params:
                grads.append(g.sum(axis=0))
                grads.append(g.T @ post[layer])
            g = g @ self.weights[layer]
            if layer:
                g = g * _act_grad(self.activation, pre[layer - 1], post[layer])
        return g, grads[::-1]

    def backward(self, x, grad_logits):
        return self._backprop(x, grad_logits, False)[0]

    def param_grads(self, x, grad_logits):
        return self._backprop(x, grad_logits, True)[1]


def build_model(arch, params, activation="tanh"):
    if arch == "linear":
        return LinearModel(*params)
    if arch == "mlp":
        return MLP(tuple(params[0::2]), tuple(params[1::2]), activation)
    raise ConfigurationError(f"unknown architecture {arch!r}")


def init_model(arch, input_dim, num_classes, *, hidden=(16,), activation="tanh", seed=0):
    """Seeded scaled-normal initialisation."""
    rng = np.random.default_rng(seed)
    widths = [input_dim] + (list(hidden) if arch == "mlp" else []) + [num_classes]
    params = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        params.append(rng.normal(scale=1.0 / np.sqrt(fan_in), size=(fan_out, fan_in)))
        params.append(np.zeros(fan_out))
    return build_model(arch, params, activation)


def forward(model, x) -> np.ndarray:
    """Raw logits, no budget accounting (see budget.MeteredModel)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.input_dim:
        raise ConfigurationError(f"input dim {x.shape[1]} != model input dim {model.input_dim}")
    return model.forward(x)


def input_gradient(model, x, y, spec: losses.LossSpec):
    """(loss values, d loss / dx, logits, degenerate flags) with no accounting."""
    z = forward(model, x)
    lv = losses.evaluate(spec, z, y)
    return lv.value, model.backward(np.atleast_2d(x), lv.grad), z, lv.degenerate


def fd_gradient(model, x, y, spec: losses.LossSpec, h=1e-3) -> np.ndarray:
    """Central-difference estimate of d loss / dx for a single input."""
    if not h > 0:
        raise ConfigurationError("h must be positive")
    x = np.asarray(x, dtype=np.float64).ravel()
    d = x.shape[0]
    pts = np.concatenate([x + h * np.eye(d), x - h * np.eye(d)])
    vals = losses.evaluate(spec.take(np.zeros(2 * d, dtype=int)) if _per_row(spec) else spec,
                           model.forward(pts), np.full(2 * d, y)).value
    return (vals[:d] - vals[d:]) / (2 * h)


def _per_row(spec):
    return spec.take([0]) is not spec


class InstrumentedModel:
    """Wraps a model and counts the rows that pass through it.

    Used as an independent shadow of the budget ledger: every row pushed
    through ``forward`` or ``backward`` is tallied here regardless of which
    samples the caller claims to be charging.
    """

    def __init__(self, model):
        self.model = model
        self.forward_rows = 0
        self.backward_rows = 0
        self._lock = threading.Lock()

    @property
    def input_dim(self):
        return self.model.input_dim

    @property
    def num_classes(self):
        return self.model.num_classes

    def forward(self, x):
        z = forward(self.model, x)
        with self._lock:
            self.forward_rows += z.shape[0]
        return z

    def value_and_grad(self, x, y, spec):
        value, grad, z, degenerate = input_gradient(self.model, x, y, spec)
        with self._lock:
            self.forward_rows += z.shape[0]
            self.backward_rows += z.shape[0]
        return value, grad, z, degenerate


# --- bundles -----------------------------------------------------------------


def _tensor_names(model):
    if model.architecture == "linear":
        return ["weight", "bias"]
    names = []
    for i in range(len(model.weights)):
        names += [f"layer{i}.weight", f"layer{i}.bias"]
    return names


def save_model(model, directory) -> Path:
    """Write ``manifest.json`` plus one raw float32 LE file per tensor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = []
    for name, arr in zip(_tensor_names(model), model.params()):
        fname = f"{name}.f32"
        (directory / fname).write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        tensors.append({"name": name, "file": fname, "shape": list(arr.shape)})
    manifest = {
        "format": BUNDLE_FORMAT,
        "architecture": model.architecture,
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "hidden": list(model.hidden) if model.architecture == "mlp" else [],
        "activation": model.activation if model.architecture == "mlp" else None,
        "tensors": tensors,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_model(directory):
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"{directory}: unreadable manifest ({exc})") from exc
    arch = manifest.get("architecture")
    if arch not in ARCHITECTURES:
        raise LoadError(f"{directory}: unknown architecture {arch!r}")
    d, C = manifest.get("input_dim"), manifest.get("num_classes")
    hidden = manifest.get("hidden") or []
    widths = [d] + (hidden if arch == "mlp" else []) + [C]
    expected = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        expected += [[fan_out, fan_in], [fan_out]]
    entries = manifest.get("tensors", [])
    if len(entries) != len(expected):
        raise LoadError(f"{directory}: expected {len(expected)} tensors, manifest lists {len(entries)}")
    params = []
    for entry, shape in zip(entries, expected):
        if list(entry["shape"]) != shape:
            raise LoadError(
                f"{directory}: tensor {entry['name']} has shape {entry['shape']}, "
                f"architecture implies {shape}"
            )
        raw = (directory / entry["file"]).read_bytes()
        if len(raw) != 4 * int(np.prod(shape)):
            raise LoadError(
                f"{directory}: {entry['file']} holds {len(raw)} bytes, expected {4 * int(np.prod(shape))}"
            )
        params.append(np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64))
    try:
        return build_model(arch, params, manifest.get("activation") or "tanh")
    except ConfigurationError as exc:
        raise LoadError(f"{directory}: {exc}") from exc

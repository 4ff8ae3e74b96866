import numpy as np
import pytest
from hypothesis import given, strategies as st

from advcomp import MLP, ConfigurationError, LinearModel, LoadError, LossSpec, load_model, save_model
from advcomp.losses import evaluate
from advcomp.models import InstrumentedModel, fd_gradient, forward, init_model, input_gradient, kink_distance


def softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def reference_mlp_forward(weights, biases, x, act):
    h = x
    for i, (W, b) in enumerate(zip(weights, biases)):
        h = W @ h + b
        if i < len(weights) - 1:
            h = act(h)
    return h


def test_linear_examples():
    assert np.all(forward(LinearModel(np.zeros((3, 4)), np.zeros(3)), np.full((2, 4), 0.7)) == 0)
    z = forward(LinearModel(np.eye(2), np.zeros(2)), [[0.25, 0.75]])
    assert z.tolist() == [[0.25, 0.75]]


def test_mlp_matches_independent_forward():
    m = init_model("mlp", 10, 4, hidden=(7,), activation="tanh", seed=42)
    x = 0.5 * np.ones(10)
    ref = reference_mlp_forward(m.weights, m.biases, x, np.tanh)
    assert np.allclose(m.forward(x)[0], ref, rtol=0, atol=1e-12)


def test_forward_is_pure(mlp5):
    x = np.random.default_rng(0).uniform(size=(3, 8))
    assert np.array_equal(mlp5.forward(x), mlp5.forward(x))


def test_forward_dimension_check(mlp5):
    with pytest.raises(ConfigurationError):
        forward(mlp5, np.zeros((1, 3)))


def test_linear_ce_gradient_closed_form():
    rng = np.random.default_rng(1)
    W = rng.normal(size=(2, 5))
    m = LinearModel(W, np.zeros(2))
    x = rng.uniform(size=5)
    _, g, z, _ = input_gradient(m, x, [1], LossSpec("cross_entropy"))
    onehot = np.array([0.0, 1.0])
    # gradient of CE is (softmax - onehot) W; the attacker maximises CE
    expected = (softmax(m.forward(x)[0]) - onehot) @ m.weight
    assert np.allclose(g[0], expected, atol=1e-12)
    fd = fd_gradient(m, x, 1, LossSpec("cross_entropy"), h=1e-4)
    assert np.abs(fd - expected).max() < 1e-6


def test_constant_loss_zero_gradient(mlp5):
    x = np.full(8, 0.4)
    _, g, _, _ = input_gradient(mlp5, x, [0], LossSpec("constant"))
    assert np.all(g == 0)
    assert np.all(fd_gradient(mlp5, x, 0, LossSpec("constant")) == 0)


def test_fd_gradient_on_quadratic():
    # loss = z.z / 2 through the identity map is |x|^2 / 2, so fd should give x
    m = LinearModel(np.eye(3), np.zeros(3))
    x = np.array([0.3, -0.2, 0.9])
    spec = LossSpec("output_direction", direction=np.zeros(3))
    lin = np.array([fd_gradient(m, x, 0, LossSpec("output_direction", direction=x))])
    assert np.allclose(lin[0], x, atol=1e-10)
    assert np.all(fd_gradient(m, x, 0, spec) == 0)
    with pytest.raises(ConfigurationError):
        fd_gradient(m, x, 0, spec, h=0)


def test_relu_kink_distance():
    m = init_model("mlp", 3, 2, hidden=(4,), activation="relu", seed=0)
    assert np.isfinite(kink_distance(m, np.full((1, 3), 0.5))).all()
    assert np.isinf(kink_distance(init_model("linear", 3, 2), np.zeros((1, 3)))).all()


def test_instrumented_counts_rows(mlp5):
    im = InstrumentedModel(mlp5)
    im.forward(np.zeros((3, 8)))
    im.value_and_grad(np.zeros((2, 8)), [0, 1], LossSpec("margin"))
    assert (im.forward_rows, im.backward_rows) == (5, 2)


def test_mlp_validation():
    with pytest.raises(ConfigurationError):
        MLP((np.zeros((2, 3)),), (np.zeros(2),))
    with pytest.raises(ConfigurationError):
        MLP((np.zeros((4, 3)), np.zeros((2, 5))), (np.zeros(4), np.zeros(2)))
    with pytest.raises(ConfigurationError):
        MLP((np.zeros((4, 3)), np.zeros((2, 4))), (np.zeros(4), np.zeros(2)), activation="gelu")


# -- bundles --------------------------------------------------------------------

@pytest.mark.parametrize("arch", ["linear", "mlp"])
def test_bundle_round_trip_bit_exact(tmp_path, arch):
    m = init_model(arch, 6, 4, hidden=(5, 3), seed=9)
    save_model(m, tmp_path / "b")
    back = load_model(tmp_path / "b")
    x = np.random.default_rng(0).uniform(size=(16, 6))
    assert np.array_equal(m.forward(x), back.forward(x))


def test_truncated_payload_rejected(tmp_path):
    save_model(init_model("linear", 6, 4, seed=1), tmp_path / "b")
    f = tmp_path / "b" / "weight.f32"
    f.write_bytes(f.read_bytes()[:-4])
    with pytest.raises(LoadError):
        load_model(tmp_path / "b")


def test_class_count_mismatch_rejected(tmp_path):
    import json
    save_model(init_model("linear", 6, 3, seed=1), tmp_path / "b")
    man = json.loads((tmp_path / "b" / "manifest.json").read_text())
    man["num_classes"] = 4
    (tmp_path / "b" / "manifest.json").write_text(json.dumps(man))
    with pytest.raises(LoadError):
        load_model(tmp_path / "b")


def test_missing_manifest_rejected(tmp_path):
    with pytest.raises(LoadError):
        load_model(tmp_path)


# -- gradient oracle ------------------------------------------------------------

GRAD_SPECS = {
    "cross_entropy": lambda y, C, rng: LossSpec("cross_entropy"),
    "margin": lambda y, C, rng: LossSpec("margin"),
    "dlr": lambda y, C, rng: LossSpec("dlr"),
    "dlr_targeted": lambda y, C, rng: LossSpec("dlr_targeted", target=(y + 1) % C),
    "lafeat": lambda y, C, rng: LossSpec("lafeat"),
    "lafeat_targeted": lambda y, C, rng: LossSpec("lafeat_targeted", target=(y + 2) % C, t=1.5),
    "md_phase": lambda y, C, rng: LossSpec("md_phase", k=int(rng.integers(4)), K=4, r=int(rng.integers(1, 3))),
    "rrt_cosine": lambda y, C, rng: LossSpec("rrt_cosine", ref_logits=rng.normal(size=C)),
    "output_direction": lambda y, C, rng: LossSpec("output_direction", direction=rng.uniform(-1, 1, C)),
    "targeted_margin": lambda y, C, rng: LossSpec("targeted_margin", target=(y + 1) % C),
    "multi_target": lambda y, C, rng: LossSpec("multi_target", target=np.array([(y + 1) % C, (y + 2) % C])),
    "constant": lambda y, C, rng: LossSpec("constant"),
}


def structure_stable(model, x, h):
    """True when the logit ordering is the same at x and every x +/- h e_i."""
    d = x.shape[0]
    pts = np.concatenate([x[None], x + h * np.eye(d), x - h * np.eye(d)])
    order = np.argsort(-model.forward(pts), axis=1, kind="stable")
    return bool((order == order[0]).all())


def tie_distance(model, x):
    """First-order L-inf distance from x to the nearest tie between two logits."""
    z = model.forward(x)[0]
    C = z.size
    best = np.inf
    for a in range(C):
        for b in range(a + 1, C):
            w = np.zeros(C)
            w[a], w[b] = 1.0, -1.0
            slope = np.abs(model.backward(x[None], w[None])[0]).sum()
            best = min(best, abs(z[a] - z[b]) / max(slope, 1e-12))
    return best


# gradients below this scale are compared absolutely (saturated losses)
GRAD_FLOOR = 1e-4
# fd with h=1e-3 is only a sharp oracle this far from a logit tie
TIE_MARGIN = 0.1


def relative_error(a, b):
    return float(np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), GRAD_FLOOR))


def gradient_check(model, kind, n_points=100, h=1e-3, seed=0):
    """Worst relative errors at interior points (h) and near-tie points (h=1e-6).

    Returns (far_worst, far_count, near_worst, near_count); near-tie points
    are checked with a much smaller step where the logit ordering is still
    locally constant.
    """
    rng = np.random.default_rng(seed)
    C = model.num_classes
    far, near = [], []
    tries = 0
    while len(far) < n_points and tries < 50 * n_points:
        tries += 1
        x = rng.uniform(0.05, 0.95, size=model.input_dim)
        y = int(rng.integers(C))
        spec = GRAD_SPECS[kind](y, C, rng)
        _, g, _, degenerate = input_gradient(model, x, [y], spec)
        if degenerate[0]:
            continue
        if tie_distance(model, x) >= TIE_MARGIN:
            far.append(relative_error(g[0], fd_gradient(model, x, y, spec, h)))
        elif structure_stable(model, x, 1e-6):
            near.append(relative_error(g[0], fd_gradient(model, x, y, spec, 1e-6)))
    return max(far, default=0.0), len(far), max(near, default=0.0), len(near)


def _reference_models():
    r = np.random.default_rng(7)
    return {
        "linear": LinearModel(r.normal(size=(5, 6)), r.normal(scale=3, size=5)),
        "mlp-tanh": MLP((r.normal(size=(8, 6)), r.normal(size=(5, 8))),
                        (r.normal(size=8), r.normal(scale=3, size=5)), "tanh"),
        "mlp-softplus": MLP((r.normal(size=(8, 6)), r.normal(size=(6, 8)), r.normal(size=(5, 6))),
                            (r.normal(size=8), r.normal(size=6), r.normal(scale=3, size=5)), "softplus"),
    }


REFERENCE_MODELS = _reference_models()


@pytest.mark.parametrize("arch", sorted(REFERENCE_MODELS))
@pytest.mark.parametrize("kind", sorted(GRAD_SPECS))
def test_gradients_match_finite_differences(arch, kind):
    far, n_far, near, n_near = gradient_check(REFERENCE_MODELS[arch], kind)
    assert n_far == 100
    assert far < 1e-4
    assert near < 1e-4


@given(st.integers(0, 10_000))
def test_relu_margin_gradient_away_from_kinks(seed):
    m = init_model("mlp", 5, 3, hidden=(6,), activation="relu", seed=5)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.05, 0.95, size=5)
    h = 1e-3
    if kink_distance(m, x)[0] < 10 * h * np.abs(m.weights[0]).sum(axis=1).max() or not structure_stable(m, x, h):
        return
    _, g, _, _ = input_gradient(m, x, [0], LossSpec("margin"))
    assert relative_error(g[0], fd_gradient(m, x, 0, LossSpec("margin"), h)) < 1e-4


def test_evaluate_grad_matches_logit_fd():
    rng = np.random.default_rng(4)
    z = rng.normal(size=5)
    for kind in ("cross_entropy", "lafeat", "dlr"):
        spec = LossSpec(kind)
        g = evaluate(spec, z[None], [0]).grad[0]
        fd = np.array([(evaluate(spec, (z + 1e-6 * e)[None], [0]).value[0]
                        - evaluate(spec, (z - 1e-6 * e)[None], [0]).value[0]) / 2e-6 for e in np.eye(5)])
        assert np.allclose(g, fd, atol=1e-6)

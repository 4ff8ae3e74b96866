import numpy as np
import pytest

from advcomp import BudgetLedger, ThreatModel, project
from advcomp.attacks import (
    COMPETITION, DHConfig, FRPGDConfig, GreenHandConfig, LafeatStagedConfig, OIAConfig, PGDConfig,
    RRTConfig, declared_budget, dh_attack, fr_pgd, get_pipeline, lafeat_staged, odi_pgd_sgdr, oia, pgd,
    rrt_mt_mim, run_attack,
)
from advcomp.attacks import rrt_mt
from advcomp.attacks.dh import try_global, update_global
from advcomp.attacks.fr_pgd import md_loss_schedule
from advcomp.attacks.common import make_context, schedule
from advcomp.budget import Status
from advcomp.data import ImageBatch
from advcomp.engine import multi_target_plans
from advcomp.errors import ConfigurationError
from advcomp.inits import InitSpec, odi_init
from advcomp.losses import LossSpec
from advcomp.models import LinearModel, input_gradient
from advcomp.oracle import linear_oracle, measure_filter_error
from advcomp.suites import clean_mlp_twin, linear_suite

from conftest import EPS, binary_linear, random_batch


def unbreakable(n=6, dim=4, classes=5):
    """A model no attack can fool: constant logits favouring class 0, all labels 0."""
    bias = np.zeros(classes)
    bias[0] = 1.0
    model = LinearModel(np.zeros((classes, dim)), bias)
    batch = random_batch(n, dim, classes, seed=1)
    return model, ImageBatch(batch.data, np.zeros(n, dtype=np.int64), classes)


# --- PGD ---------------------------------------------------------------------


def test_pgd_reaches_linear_corner(tm):
    model = binary_linear((1.0, -1.0), dim=2)
    batch = ImageBatch(np.array([[0.9, 0.1], [0.7, 0.3]]), np.array([0, 0]), 2)
    out = pgd(model, batch, tm, PGDConfig(steps=8, init=InitSpec("none")))
    corner = project(batch.data + tm.epsilon * np.array([-1.0, 1.0]), batch.data, tm)
    np.testing.assert_array_equal(out.candidates, corner)
    assert not out.success.any()


def test_single_step_equals_fgsm(tm):
    model = binary_linear((1.0, -0.5, 2.0, -1.5), dim=4)
    batch = random_batch(20, 4, 2, seed=5)
    out = pgd(model, batch, tm, PGDConfig(steps=1, eta=1.0, init=InitSpec("none")))
    _, g, _, _ = input_gradient(model, batch.data, batch.labels, LossSpec("cross_entropy"))
    fgsm = project(batch.data + tm.epsilon * np.sign(g), batch.data, tm)
    # already-misclassified inputs succeed at the clean pass and are left alone
    wrong = np.argmax(model.forward(batch.data), axis=1) != batch.labels
    assert 0 < wrong.sum() < batch.n
    np.testing.assert_array_equal(out.candidates[~wrong], fgsm[~wrong])
    np.testing.assert_array_equal(out.candidates[wrong], batch.data[wrong])


def test_pgd_rejects_zero_steps():
    with pytest.raises(ConfigurationError):
        PGDConfig(steps=0)


def test_zero_momentum_matches_plain(mlp5, blobs, tm):
    a = pgd(mlp5, blobs, tm, PGDConfig(steps=15))
    b = pgd(mlp5, blobs, tm, PGDConfig(steps=15, momentum=0.0))
    np.testing.assert_array_equal(a.candidates, b.candidates)
    np.testing.assert_array_equal(a.status, b.status)


def test_full_backward_budget_usage_example(tm):
    model, batch = unbreakable()
    out = pgd(model, batch, tm, PGDConfig(steps=99, init=InitSpec("none")),
              ledger=BudgetLedger(batch.n, strict=True))
    # 99 gradient steps plus the initial clean forward; the final check adds one more forward
    assert out.usage["avg_backward"] == 99
    assert out.usage["avg_forward"] == 101
    out = pgd(model, batch, tm, PGDConfig(steps=100, init=InitSpec("none")),
              ledger=BudgetLedger(batch.n, strict=True))
    assert out.usage["avg_backward"] == 100
    assert out.usage["within_quota"]


# --- ODI-PGD with SGDR -------------------------------------------------------


def test_green_hand_lengths_non_decreasing():
    lengths = GreenHandConfig().lengths()
    assert lengths[0] == 10 and lengths[-1] == 60 and len(lengths) == 17
    assert all(a <= b for a, b in zip(lengths, lengths[1:]))


def test_green_hand_zero_quantile_is_no_filter(mlp5, blobs, tm):
    a = odi_pgd_sgdr(mlp5, blobs, tm, GreenHandConfig(restarts=3, filter_quantile=0.0))
    b = odi_pgd_sgdr(mlp5, blobs, tm, GreenHandConfig(restarts=3, filter_quantile=None))
    np.testing.assert_array_equal(a.candidates, b.candidates)
    assert a.info["filtered"] == b.info["filtered"] == 0


def test_green_hand_filter_agrees_with_linear_oracle(tm):
    models, data = linear_suite(n_models=2)
    for _, model in models:
        out = odi_pgd_sgdr(model, data, tm, ledger=BudgetLedger(data.n, strict=True))
        verdict = linear_oracle(model, data.data, data.labels, tm)
        err = measure_filter_error(out.status, verdict)
        assert out.info["filtered"] > 0
        assert err["false_negative_rate"] <= 0.05
        # soundness: every success is a real attack
        assert not (out.success & ~verdict.attackable).any()


# --- staged LAFEAT -----------------------------------------------------------


def test_lafeat_staged_needs_four_classes(tm):
    model = LinearModel(np.eye(3, 4), np.zeros(3))
    with pytest.raises(ConfigurationError):
        lafeat_staged(model, random_batch(8, 4, 3), tm)


def test_lafeat_staged_twin_classification(tm):
    clean, robust, data = clean_mlp_twin()
    a = lafeat_staged(clean, data, tm)
    b = lafeat_staged(robust, data, tm)
    assert a.info["model_robust"] is False
    assert b.info["model_robust"] is True
    assert a.info["incremental_success_rate"] > 0.20 >= b.info["incremental_success_rate"]


def test_lafeat_staged_traces_non_decreasing(mlp5, blobs, tm):
    out = lafeat_staged(mlp5, blobs, tm, LafeatStagedConfig(probe_iters=5, dlr_iters=5))
    for trace in out.loss_traces:
        assert all(a <= b for a, b in zip(trace, trace[1:]))


# --- outside-inside ----------------------------------------------------------


def test_oia_stage_one_costs_five_backward(mlp5, blobs, tm):
    out = oia(mlp5, blobs, tm, OIAConfig(max_restarts=0), ledger=BudgetLedger(blobs.n, strict=True))
    assert out.usage["per_image_backward"] == [5] * blobs.n
    assert out.shadow["backward"] == out.usage["total_backward"]
    assert out.shadow["forward"] == out.usage["total_forward"]


def test_oia_huge_ball_breaks_everything(tm):
    model = binary_linear((1.0, -1.0, 0.5), dim=3)
    batch = random_batch(30, 3, 2, seed=2)
    out = oia(model, batch, ThreatModel(1.0))
    assert out.success.all()
    assert out.info["filtered"] == []


def test_oia_filtered_samples_were_never_hit(tm):
    model, batch = unbreakable()
    out = oia(model, batch, tm, OIAConfig(max_restarts=3))
    assert out.info["filtered"] == list(range(batch.n))
    assert out.info["inside_restarts"] == 0


# --- RRT + multi-target + momentum -------------------------------------------


def mixed_labels(n=8, classes=5):
    """Constant model with labels 0 and 1 alternating: label-1 rows are wrong from the start."""
    model, batch = unbreakable(n=n, classes=classes)
    return model, ImageBatch(batch.data, np.arange(n) % 2, classes)


def test_rrt_restart_costs_twenty_backward(tm):
    model, batch = mixed_labels()
    out = rrt_mt_mim(model, batch, tm, RRTConfig(max_restarts=1))
    assert out.usage["per_image_backward"] == [20, 0] * (batch.n // 2)


def test_rrt_momentum_starts_after_five_steps(mlp5, blobs, tm):
    a = rrt_mt_mim(mlp5, blobs, tm, RRTConfig(pgd_steps=5, max_restarts=3))
    b = rrt_mt_mim(mlp5, blobs, tm, RRTConfig(pgd_steps=5, max_restarts=3, momentum=None))
    np.testing.assert_array_equal(a.candidates, b.candidates)


def test_rrt_cycles_targets(monkeypatch, tm):
    model, batch = mixed_labels()
    seen = []
    real = rrt_mt.LossSpec

    def spy(kind, **kw):
        if kind == "targeted_margin":
            seen.append(np.asarray(kw["target"]).copy())
        return real(kind, **kw)

    monkeypatch.setattr(rrt_mt, "LossSpec", spy)
    rrt_mt_mim(model, batch, tm, RRTConfig(max_restarts=5))
    rows = np.flatnonzero(batch.labels == 0)
    plans = multi_target_plans(model.forward(batch.data), batch.labels, 4)[rows]
    assert len(seen) == 5
    for r, t in enumerate(seen):
        np.testing.assert_array_equal(t, plans[:, r % 4])


# --- fast-restart PGD --------------------------------------------------------


def test_fr_pgd_phase_split(tm):
    model, batch = unbreakable()
    out = fr_pgd(model, batch, tm)
    # reserve of 100 / 5 = 20; 13 restarts of 6 fill 78, the leftover 2 joins phase B
    assert out.info["restarts"] == 13
    assert out.info["phase_a_backward"] == [78] * batch.n
    assert out.info["phase_b_backward"] == [22] * batch.n


def test_md_schedule_carries_restart_index():
    specs = [md_loss_schedule(4, 2)(k) for k in range(4)]
    assert all(s.kind == "md_phase" and s.r == 2 and s.K == 4 for s in specs)
    assert [s.k for s in specs] == [0, 1, 2, 3]


def test_fr_pgd_single_restart_matches_manual(mlp5, blobs, tm):
    out = fr_pgd(mlp5, blobs, tm, FRPGDConfig(max_restarts=1, phase_b=False), seed=4)
    ctx = make_context(mlp5, blobs, tm, None, 4)
    ctx.clean_pass()
    ctx.reallocate()
    idx = ctx.active()
    x0 = odi_init(ctx, idx, 1, 2, tm.epsilon)
    ctx.ascend(idx, x0, 4, md_loss_schedule(4, 1), schedule("fixed", tm.epsilon, eta=0.5))
    ref = ctx.finish()
    np.testing.assert_array_equal(out.candidates, ref.candidates)
    assert out.usage["total_backward"] == ref.usage["total_backward"]


# --- difficulty-hierarchical attack ------------------------------------------


def test_global_trial_is_forward_only(mlp5, blobs, tm):
    ctx = make_context(mlp5, blobs, tm)
    ctx.clean_pass()
    active = ctx.active().size
    f0, b0 = ctx.ledger.forward.sum(), ctx.ledger.backward.sum()
    try_global(ctx, np.full(blobs.dim, tm.epsilon))
    assert ctx.ledger.forward.sum() - f0 == active
    assert ctx.ledger.backward.sum() == b0


def test_dh_without_restarts_is_cosine_pgd(mlp5, blobs, tm):
    a = dh_attack(mlp5, blobs, tm, DHConfig(max_restarts=0))
    b = pgd(mlp5, blobs, tm, PGDConfig(steps=10, init=InitSpec("none"), loss="margin",
                                       schedule="cosine_per_restart", eta=0.5, floor=0.01))
    np.testing.assert_array_equal(a.candidates, b.candidates)
    np.testing.assert_array_equal(a.status, b.status)


def test_dh_global_perturbation_in_ball(mlp5, blobs, tm):
    out = dh_attack(mlp5, blobs, tm)
    g = np.asarray(out.info["global_perturbation"])
    assert np.abs(g).max() <= tm.epsilon + 1e-12


def test_update_global_rescales():
    d = np.array([0.01, -0.02, 0.005])
    g = update_global(np.zeros(3), [d], 0.9, EPS)
    np.testing.assert_allclose(g, d * EPS / 0.02)
    g2 = update_global(g, [np.array([0.0, 0.03, 0.0])], 0.5, EPS)
    raw = 0.5 * g + 0.5 * np.array([0.0, 0.03, 0.0])
    np.testing.assert_allclose(g2, raw * EPS / np.abs(raw).max())
    assert not update_global(np.zeros(3), [], 0.9, EPS).any()


# --- every pipeline ----------------------------------------------------------


ALL = ("pgd",) + COMPETITION


@pytest.mark.parametrize("name", ALL)
def test_pipeline_contract(name, mlp5, blobs, tm):
    ledger = BudgetLedger(blobs.n, strict=True)
    out = run_attack(name, mlp5, blobs, tm, ledger=ledger, seed=3)
    # feasible
    assert np.abs(out.candidates - blobs.data).max() <= tm.epsilon
    assert out.candidates.min() >= 0.0 and out.candidates.max() <= 1.0
    # success flags are honest
    z = mlp5.forward(out.candidates)
    np.testing.assert_array_equal(out.success, np.argmax(z, axis=1) != blobs.labels)
    # quota and shadow
    assert out.usage["avg_backward"] <= 100 and out.usage["avg_forward"] <= 200
    assert out.shadow["backward"] == out.usage["total_backward"]
    assert out.shadow["forward"] == out.usage["total_forward"]
    bound = declared_budget(name, 100)
    assert out.usage["avg_forward"] <= bound["avg_forward"]
    # allocation is only ever moved, never created
    assert set(out.allocation_trace) <= {100 * blobs.n}
    # deterministic
    again = run_attack(name, mlp5, blobs, tm, ledger=BudgetLedger(blobs.n, strict=True), seed=3)
    np.testing.assert_array_equal(out.candidates, again.candidates)


@pytest.mark.parametrize("name", ALL)
def test_pipeline_sound_on_linear_models(name, tm):
    models, data = linear_suite(n_models=1, n_eval=96)
    model = models[0][1]
    out = run_attack(name, model, data, tm)
    verdict = linear_oracle(model, data.data, data.labels, tm)
    assert not (out.success & ~verdict.attackable).any()


def test_aliases_resolve():
    assert get_pipeline("green_hand").name == "odi_pgd_sgdr"
    assert get_pipeline("KANRA").name == "fr_pgd"
    with pytest.raises(ConfigurationError):
        get_pipeline("nope")


def test_unknown_params_rejected(mlp5, blobs, tm):
    with pytest.raises(ConfigurationError):
        run_attack("pgd", mlp5, blobs, tm, {"stepz": 3})


def test_union_covers_pgd_on_linear_suite(tm):
    models, data = linear_suite(n_models=2, n_eval=128)
    for _, model in models:
        base = run_attack("pgd", model, data, tm).success
        union = np.zeros_like(base)
        for name in COMPETITION:
            union |= run_attack(name, model, data, tm).success
        assert not (base & ~union).any()

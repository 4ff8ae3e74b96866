import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from advcomp import ConfigurationError, ThreatModel, is_feasible, parse_epsilon, project

EPS = 8 / 255
unit = st.floats(0.0, 1.0)
wide = st.floats(-3.0, 3.0, allow_nan=False)


def test_feasible_point_unchanged():
    x = np.array([[0.2, 0.5, 0.9]])
    v = x + np.array([[EPS, -EPS / 2, 0.0]])
    assert np.array_equal(project(v, x, ThreatModel(EPS)), v)


def test_one_sided_clamp():
    out = project(np.array([0.9]), np.array([0.5]), ThreatModel(EPS))
    assert out[0] == pytest.approx(0.5 + EPS) and round(out[0], 5) == 0.53137


def test_box_binds_before_ball():
    assert project(np.array([-0.2]), np.array([0.01]), ThreatModel(EPS))[0] == 0.0


def test_is_feasible_examples():
    tm = ThreatModel(EPS)
    x = np.array([[0.3, 0.7]])
    assert is_feasible(x, x, tm).all()
    bad = x + np.array([[EPS + 1e-3, 0.0]])
    assert not is_feasible(bad, x, tm).any()
    with pytest.raises(ConfigurationError):
        is_feasible(x, x, tm, tol=-1)


def test_parse_epsilon():
    assert parse_epsilon("8/255") == 8 / 255
    assert parse_epsilon("0.5") == 0.5
    assert parse_epsilon(0.25) == 0.25
    with pytest.raises(ConfigurationError):
        parse_epsilon("eight")


def test_threat_model_validation():
    with pytest.raises(ConfigurationError):
        ThreatModel(0.0)
    with pytest.raises(ConfigurationError):
        ThreatModel(0.1, 1.0, 0.0)
    assert ThreatModel(0.1).scaled(2).epsilon == pytest.approx(0.2)


@given(arrays(np.float64, 6, elements=unit), arrays(np.float64, 6, elements=wide), st.floats(1e-4, 0.5))
def test_projection_properties(x, v, eps):
    tm = ThreatModel(eps)
    p = project(v, x, tm)
    assert np.array_equal(project(p, x, tm), p)
    assert np.abs(p - x).max() <= eps
    assert is_feasible(p, x, tm, tol=0.0).all()


@given(arrays(np.float64, 6, elements=unit), arrays(np.float64, 6, elements=wide), st.floats(1e-4, 0.5))
def test_clip_order_does_not_matter_inside_box(x, v, eps):
    tm = ThreatModel(eps)
    lo, hi = ThreatModel(eps, -np.inf, np.inf).bounds(x)
    ball_then_box = np.clip(np.clip(v, lo, hi), 0.0, 1.0)
    box_then_ball = np.clip(np.clip(v, 0.0, 1.0), lo, hi)
    assert np.array_equal(project(v, x, tm), ball_then_box)
    assert np.array_equal(project(v, x, tm), box_then_ball)

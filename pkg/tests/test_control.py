import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gismc.control import (GainState, SlidingConfig, adapt_gains, control_law, controller_step,
                           sigmoid, sigmoid_derivative, sliding_variable)

CFG = SlidingConfig()
finite = dict(allow_nan=False, allow_infinity=False)
vec3 = st.lists(st.floats(-1, 1, **finite), min_size=3, max_size=3)


def test_sliding_config_validation():
    with pytest.raises(ValueError):
        SlidingConfig(lam=[6, 0, 6])
    with pytest.raises(ValueError):
        SlidingConfig(a=0)


def test_sliding_variable_examples():
    np.testing.assert_array_equal(sliding_variable(np.zeros(3), np.zeros(3), CFG), np.zeros(3))
    s = sliding_variable([0.001, 0, 0], [0.002, 0, 0], CFG)
    assert s[0] == pytest.approx(0.008, abs=1e-17)


@given(vec3, vec3, st.floats(-10, 10, **finite))
def test_sliding_variable_linear(e, ed, k):
    e, ed = np.array(e), np.array(ed)
    np.testing.assert_allclose(sliding_variable(k * e, k * ed, CFG), k * sliding_variable(e, ed, CFG),
                               rtol=1e-12, atol=1e-14)


def test_sigmoid_examples():
    assert sigmoid(0.0, 3.7) == 0.0
    assert sigmoid(0.2, 10) == pytest.approx(0.7615941559557649, abs=1e-15)
    assert abs(sigmoid(50, 10) - 1.0) <= 1e-15
    assert abs(sigmoid(-50, 10) + 1.0) <= 1e-15


def test_sigmoid_matches_exponential_form():
    s = np.linspace(-3, 3, 601)
    a = 10.0
    ref = (1 - np.exp(-a * s)) / (1 + np.exp(-a * s))
    np.testing.assert_allclose(sigmoid(s, a), ref, rtol=0, atol=1e-15)


def test_sigmoid_derivative_examples():
    assert sigmoid_derivative(0.0, 10) == 5.0
    s = np.linspace(-5, 5, 1001)
    assert np.all(sigmoid_derivative(s, 10) >= 0)


def test_control_law_examples():
    np.testing.assert_array_equal(control_law(np.zeros(3), np.ones(3), 10), np.zeros(3))
    u = control_law([0.2, 0, 0], [2, 1, 1], 10)
    assert u[0] == pytest.approx(-2 * math.tanh(1.0), abs=1e-15)
    assert u[0] == pytest.approx(-1.5231883, abs=1e-7)


@settings(max_examples=200)
@given(st.lists(st.floats(-10, 10, **finite), min_size=3, max_size=3),
       st.lists(st.floats(0.01, 100, **finite), min_size=3, max_size=3))
def test_control_law_bounded_and_stabilizing(s, G):
    s, G = np.array(s), np.array(G)
    u = control_law(s, G, 10.0)
    assert np.all(np.abs(u) <= G)
    nz = np.abs(s) > 1e-3      # away from the tanh saturation to exactly +-1
    assert np.all(np.sign(u[s != 0]) == -np.sign(s[s != 0]))
    assert np.all(np.abs(u[nz & (np.abs(s) < 1.0)]) < G[nz & (np.abs(s) < 1.0)])


def test_adapt_gains_examples():
    g = GainState.initial("C1")
    np.testing.assert_array_equal(adapt_gains(g, np.zeros(3), 5e-5).Gamma, g.Gamma)
    g1 = adapt_gains(g, [1e-3, 0, 0], 5e-5)
    assert g1.Gamma[0] == pytest.approx(1.00005, abs=1e-15)
    g2 = GainState.initial("C2", epsilon=1e-3)
    g2n = adapt_gains(g2, [5e-4, 5e-4, 5e-4], 5e-5)
    assert np.all(g2n.Gamma < g2.Gamma)
    g3 = GainState.initial("C3")
    np.testing.assert_array_equal(adapt_gains(g3, [1, 1, 1], 5e-5).Gamma, g3.Gamma)
    with pytest.raises(ValueError):
        adapt_gains(g, np.zeros(3), 0.0)


def test_c2_clamps_at_zero():
    g = GainState.initial("C2", Gamma_0=(1e-6, 1e-6, 1e-6), epsilon=1.0)
    for _ in range(10):
        g = adapt_gains(g, [0.5, 0.5, 0.5], 1.0)
    assert np.all(g.Gamma == 0.0)


@settings(max_examples=100)
@given(st.lists(vec3, min_size=1, max_size=50))
def test_c1_monotone(ss):
    g = GainState.initial("C1")
    for s in ss:
        g2 = adapt_gains(g, s, 5e-5)
        assert np.all(g2.Gamma >= g.Gamma)
        g = g2


def test_controller_step_zero_error_fixpoint():
    g = GainState.initial("C1")
    u, s, g2 = controller_step(np.ones(3), np.ones(3), np.zeros(3), np.zeros(3), g, CFG, 5e-5)
    np.testing.assert_array_equal(u, np.zeros(3))
    np.testing.assert_array_equal(g2.Gamma, g.Gamma)


def test_controller_step_hand_chain():
    g = GainState.initial("C1")
    y = np.array([0.001, 0.0, -0.002])
    v = np.array([0.002, 0.0, 0.001])
    u, s, g2 = controller_step(y, np.zeros(3), np.zeros(3), v, g, CFG, 5e-5)
    s_ref = 6 * y + v
    G_ref = 1 + 1000 * np.abs(s_ref) * 5e-5
    np.testing.assert_allclose(s, s_ref, rtol=1e-15)
    np.testing.assert_allclose(g2.Gamma, G_ref, rtol=1e-15)
    np.testing.assert_allclose(u, -G_ref * np.tanh(5 * s_ref), rtol=1e-15)
    u_old, _, _ = controller_step(y, np.zeros(3), np.zeros(3), v, g, CFG, 5e-5, adapt_first=False)
    np.testing.assert_allclose(u_old, -np.tanh(5 * s_ref), rtol=1e-15)


def test_c3_fixed_over_ticks(rng):
    g = GainState.initial("C3", Gamma_0=(2, 3, 4))
    for _ in range(100):
        _, _, g = controller_step(rng.normal(size=3), np.zeros(3), np.zeros(3), rng.normal(size=3),
                                  g, CFG, 5e-5)
        np.testing.assert_array_equal(g.Gamma, [2, 3, 4])


def test_gain_state_validation():
    with pytest.raises(ValueError):
        GainState.initial("C4")
    with pytest.raises(ValueError):
        GainState.initial("C1", Gamma_0=(-1, 1, 1))
    with pytest.raises(ValueError):
        GainState.initial("C2", epsilon=-1)

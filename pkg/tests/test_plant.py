import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gismc import _kernels as K
from gismc.plant import (GantryParams, GeneralizedState, PlantDomainError, PlantState,
                         SingularDynamicsError, actuator_to_generalized_forces,
                         assemble_matrices, carriage_to_generalized, coupling_terms,
                         force_transform, forward_dynamics, friction_vector,
                         generalized_to_actuator_forces, generalized_to_carriage, pack_params)

P = GantryParams()
finite = dict(allow_nan=False, allow_infinity=False)


def test_params_validation():
    with pytest.raises(ValueError, match="m_e"):
        GantryParams(m_e=0.0)
    with pytest.raises(ValueError, match="mu_1"):
        GantryParams(mu_1=-1.0)
    GantryParams(mu_1=0.0, k_tau1=0.0)


def test_carriage_to_generalized_examples():
    gs = carriage_to_generalized([0.01, 0.01, 0.02], np.zeros(3), P)
    np.testing.assert_allclose(gs.q, [0.01, 0.0, 0.02], atol=0, rtol=0)
    p1 = GantryParams(L_ca=1.0)
    gs = carriage_to_generalized([0.02, 0.0, 0.0], np.zeros(3), p1)
    assert gs.q[0] == pytest.approx(0.01, abs=1e-18)
    assert gs.q[1] == pytest.approx(0.02, abs=1e-18)
    assert gs.q[2] == 0.0


def test_generalized_to_carriage_examples():
    x, _ = generalized_to_carriage(GeneralizedState(np.array([0.01, 0.0, 0.02]), np.zeros(3)), P)
    np.testing.assert_array_equal(x, [0.01, 0.01, 0.02])
    x, _ = generalized_to_carriage(GeneralizedState(np.array([0.0, 0.02, 0.0]), np.zeros(3)),
                                   GantryParams(L_ca=1.0))
    np.testing.assert_allclose(x[:2], [0.01, -0.01], atol=1e-18)


def test_theta_bounds():
    with pytest.raises(PlantDomainError):
        carriage_to_generalized([0.5, -0.5, 0.0], np.zeros(3), P)
    with pytest.raises(PlantDomainError):
        generalized_to_carriage(GeneralizedState(np.array([0.0, np.pi / 2, 0.0]), np.zeros(3)), P)
    with pytest.raises(PlantDomainError):
        force_transform(np.pi / 2, P.L_ca)


@settings(max_examples=300, deadline=None)
@given(st.floats(-0.1, 0.1, **finite), st.floats(-0.3, 0.3, **finite), st.floats(-0.2, 0.2, **finite),
       st.lists(st.floats(-1, 1, **finite), min_size=3, max_size=3))
def test_round_trip_generalized(X, th, Y, qd):
    gs = GeneralizedState(np.array([X, th, Y]), np.array(qd))
    x, xd = generalized_to_carriage(gs, P)
    back = carriage_to_generalized(x, xd, P)
    np.testing.assert_allclose(back.q, gs.q, rtol=0, atol=1e-12)
    np.testing.assert_allclose(back.q_dot, gs.q_dot, rtol=0, atol=1e-12)


def test_velocity_map_is_the_time_derivative():
    # d/dt of the position map along a smooth path equals the velocity map
    def path(t):
        return np.array([0.01 * np.sin(t), 0.012 * np.sin(t) - 0.01 * t, 0.02 * np.cos(2 * t)])

    def pathd(t):
        return np.array([0.01 * np.cos(t), 0.012 * np.cos(t) - 0.01, -0.04 * np.sin(2 * t)])

    t, h = 0.7, 1e-6
    qp = carriage_to_generalized(path(t + h), pathd(t), P).q
    qm = carriage_to_generalized(path(t - h), pathd(t), P).q
    qd = carriage_to_generalized(path(t), pathd(t), P).q_dot
    np.testing.assert_allclose((qp - qm) / (2 * h), qd, rtol=1e-7, atol=1e-12)


def test_force_examples():
    np.testing.assert_allclose(actuator_to_generalized_forces([1, 1, 0], 0.0, 0.5), [2, 0, 0])
    # row 2 of T_f is (L_ca/2) cos(Theta) (N_1 - N_2) = 0.25 * 2
    np.testing.assert_allclose(actuator_to_generalized_forces([1, -1, 0], 0.0, 0.5), [0, 0.5, 0])
    np.testing.assert_allclose(generalized_to_actuator_forces([2, 0, 0], 0.0, 0.5), [1, 1, 0])
    np.testing.assert_allclose(generalized_to_actuator_forces([0, 1, 0], 0.0, 0.5), [2, -2, 0])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-100, 100, **finite), min_size=3, max_size=3), st.floats(-0.5, 0.5, **finite),
       st.floats(0.1, 2.0, **finite))
def test_force_split_composition(N, th, L):
    N = np.array(N)
    back = actuator_to_generalized_forces(generalized_to_actuator_forces(N, th, L), th, L)
    np.testing.assert_allclose(back, N, rtol=0, atol=1e-12 * max(1.0, np.abs(N).max()))


def test_matrices_at_symmetric_rest():
    gs = GeneralizedState(np.array([0.01, 0.0, 0.0]), np.zeros(3))
    M, Pm, W, Km = assemble_matrices(gs, P)
    assert M[0, 1] == 0.0 and M[1, 0] == 0.0
    assert M[2, 2] == P.m_e
    assert M[0, 2] == 0.0 and M[1, 2] == 0.0
    t = coupling_terms(gs.q, gs.q_dot, P)
    assert t["c_12"] == 0.0 and t["c_21"] == 0.0
    np.testing.assert_array_equal(Pm, np.zeros((3, 3)))
    np.testing.assert_array_equal(W, W.T)
    np.testing.assert_array_equal(Km, np.diag([0.0, P.k_tau1 + P.k_tau2, 0.0]))


def test_coriolis_placement():
    gs = GeneralizedState(np.array([0.02, 0.05, 0.03]), np.array([0.1, 0.2, -0.1]))
    _, Pm, _, _ = assemble_matrices(gs, P)
    t = coupling_terms(gs.q, gs.q_dot, P)
    assert Pm[0, 1] == t["c_12"] and Pm[1, 0] == t["c_21"] and Pm[1, 1] == t["c_22"]


def test_friction_examples():
    assert np.all(friction_vector(np.zeros(3), 0.0, P) == 0.0)
    p = GantryParams(mu_1=2.0, mu_2=2.0, v_eps=1e-4)
    np.testing.assert_allclose(friction_vector([0.1, 0.1, 0.0], 0.0, p), [4, 0, 0], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-2, 2, **finite), min_size=3, max_size=3), st.floats(-0.5, 0.5, **finite))
def test_friction_odd_and_bounded(xd, th):
    xd = np.array(xd)
    f = friction_vector(xd, th, P)
    np.testing.assert_array_equal(friction_vector(-xd, th, P), -f)
    bound = np.abs(force_transform(th, P.L_ca)) @ np.array([P.mu_1, P.mu_2, P.mu_y])
    assert np.all(np.abs(f) <= bound + 1e-15)


def _state(rng):
    x = np.array([rng.uniform(-0.05, 0.05), 0.0, rng.uniform(-0.1, 0.1)])
    x[1] = x[0] - P.L_ca * rng.uniform(-0.2, 0.2)
    return PlantState(x, rng.uniform(-0.3, 0.3, 3))


def test_forward_dynamics_examples(rng):
    dz = forward_dynamics(PlantState(np.zeros(3), np.zeros(3)), np.zeros(3), np.zeros(3), P)
    np.testing.assert_array_equal(dz, np.zeros(6))
    st_ = _state(rng)
    dz = forward_dynamics(st_, rng.normal(size=3), None, P)
    np.testing.assert_array_equal(dz[:3], st_.x_dot)


def test_symmetric_plant_no_yaw_acceleration():
    st_ = PlantState(np.array([0.01, 0.01, 0.0]), np.array([0.05, 0.05, 0.0]))
    dz = forward_dynamics(st_, np.array([0.3, 0.3, 0.0]), np.zeros(3), P)
    theta_ddot = (dz[3] - dz[4]) / P.L_ca
    assert abs(theta_ddot) < 1e-12


def test_forward_dynamics_affine_in_u(rng):
    for _ in range(50):
        st_ = _state(rng)
        h = rng.normal(size=3)
        u1, u2 = rng.normal(size=3), rng.normal(size=3)
        f = lambda u: forward_dynamics(st_, u, h, P)
        res = f(u1 + u2) - f(u1) - f(u2) + f(np.zeros(3))
        assert np.abs(res).max() < 1e-10


def test_kernel_derivative_matches_numpy_reference(rng):
    p = pack_params(P)
    for _ in range(100):
        st_ = _state(rng)
        u, h = rng.normal(size=3), rng.normal(size=3)
        ref = forward_dynamics(st_, u, h, P)
        dz = np.empty(6)
        assert K.state_derivative(st_.z, u, h, p, dz)
        np.testing.assert_allclose(dz, ref, rtol=1e-11, atol=1e-11)


def test_singular_dynamics_detected():
    # a massless end effector leaves the Y row of M T_p empty
    p = GantryParams(m_e=1e-30)
    with pytest.raises(SingularDynamicsError):
        forward_dynamics(PlantState(np.zeros(3), np.zeros(3)), np.zeros(3), np.zeros(3), p)

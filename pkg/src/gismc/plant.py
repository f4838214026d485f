"""Flexure-linked biaxial gantry: kinematics, force maps, matrices, dynamics.

Generalized coordinates are ``q = (X, Theta, Y)``: cross-arm position, cross-arm
yaw and end-effector position along the arm.  Carriage coordinates are
``x = (x_1, x_2, x_y)``.  The map between them is

    X = (x_1 + x_2) / 2,   Theta = (x_1 - x_2) / L_ca,   Y = x_y sec(Theta)

and is inverted exactly (x_1 = X + L_ca Theta / 2, ...), not through the
small-angle ``sin`` form.

The functions in this module are the readable numpy reference.  The simulator
runs the equivalent code in :mod:`gismc._kernels`.
"""

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Tuple

import numpy as np

from . import _kernels as K

THETA_MAX_DEFAULT = np.pi / 3
COND_LIMIT = 1e12


class PlantDomainError(ValueError):
    """State outside the region where the gantry model is defined."""


class SingularDynamicsError(ArithmeticError):
    """``M T_p`` is numerically singular at the requested state."""


@dataclass(frozen=True)
class GantryParams:
    """Physical constants of one gantry instance (SI units).

    The defaults are an invented, physically plausible desk-scale rig; none of
    the acceptance checks depend on the particular numbers.
    """

    m_e: float = 2.0
    m_ca: float = 5.0
    m_1: float = 8.0
    m_2: float = 8.0
    mu_1: float = 1.0
    mu_2: float = 1.0
    mu_y: float = 0.5
    mu_k1: float = 5.0
    mu_k2: float = 5.0
    mu_kY: float = 3.0
    mu_tau1: float = 0.5
    mu_tau2: float = 0.5
    k_tau1: float = 200.0
    k_tau2: float = 200.0
    L_e: float = 0.1
    L_ca: float = 0.5
    W_ca: float = 0.05
    K_f1: float = 600.0
    K_f2: float = 600.0
    K_fy: float = 600.0
    upsilon: float = 100.0
    v_eps: float = 1e-3

    def __post_init__(self):
        for name in ("m_e", "m_ca", "m_1", "m_2", "L_e", "L_ca", "W_ca",
                     "K_f1", "K_f2", "K_fy", "upsilon", "v_eps"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"plant.{name} must be finite and > 0, got {v!r}")
        for name in ("mu_1", "mu_2", "mu_y", "mu_k1", "mu_k2", "mu_kY",
                     "mu_tau1", "mu_tau2", "k_tau1", "k_tau2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"plant.{name} must be finite and >= 0, got {v!r}")

    @property
    def K_f(self) -> np.ndarray:
        return np.diag([self.K_f1, self.K_f2, self.K_fy])

    def to_dict(self) -> dict:
        return asdict(self)


def pack_params(params: GantryParams) -> np.ndarray:
    """Flatten parameters into the float64 layout the kernels expect."""
    return np.array([float(getattr(params, n)) for n in K.PARAM_NAMES], dtype=np.float64)


assert tuple(f.name for f in fields(GantryParams)) == K.PARAM_NAMES


class GeneralizedState(NamedTuple):
    q: np.ndarray       # (X, Theta, Y)
    q_dot: np.ndarray   # (X_dot, Theta_dot, Y_dot)


@dataclass
class PlantState:
    x: np.ndarray
    x_dot: np.ndarray
    t: float = 0.0

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.x_dot])

    @classmethod
    def from_z(cls, z, t=0.0) -> "PlantState":
        z = np.asarray(z, dtype=float)
        return cls(z[:3].copy(), z[3:].copy(), t)


class ForceVector(NamedTuple):
    values: np.ndarray
    frame: str   # "actuator" (N_1, N_2, N_y) or "generalized" (N_X, N_Theta, N_Y)


def _check_theta(theta, limit=np.pi / 2):
    if not np.isfinite(theta) or abs(theta) >= limit:
        raise PlantDomainError(f"|Theta| = {abs(theta):.6g} rad outside the model range {limit:.6g}")


def carriage_to_generalized(x, x_dot, params: GantryParams,
                            theta_max: float = THETA_MAX_DEFAULT) -> GeneralizedState:
    x = np.asarray(x, dtype=float)
    x_dot = np.asarray(x_dot, dtype=float)
    L = params.L_ca
    theta = (x[0] - x[1]) / L
    if not np.isfinite(theta) or abs(theta) >= theta_max:
        raise PlantDomainError(
            f"carriage de-synchronization |x_1 - x_2| / L_ca = {abs(theta):.6g} "
            f"exceeds the flexure range {theta_max:.6g} rad")
    sec = 1.0 / np.cos(theta)
    theta_dot = (x_dot[0] - x_dot[1]) / L
    q = np.array([0.5 * (x[0] + x[1]), theta, x[2] * sec])
    q_dot = np.array([
        0.5 * (x_dot[0] + x_dot[1]),
        theta_dot,
        x_dot[2] * sec + x[2] * sec * np.tan(theta) * theta_dot,
    ])
    return GeneralizedState(q, q_dot)


def generalized_to_carriage(gs: GeneralizedState, params: GantryParams) -> Tuple[np.ndarray, np.ndarray]:
    q = np.asarray(gs.q, dtype=float)
    qd = np.asarray(gs.q_dot, dtype=float)
    X, theta, Y = q
    _check_theta(theta)
    Xd, thd, Yd = qd
    L = params.L_ca
    c, s = np.cos(theta), np.sin(theta)
    x = np.array([X + 0.5 * L * theta, X - 0.5 * L * theta, Y * c])
    x_dot = np.array([Xd + 0.5 * L * thd, Xd - 0.5 * L * thd, Yd * c - Y * s * thd])
    return x, x_dot


def position_transform(theta: float, L_ca: float) -> np.ndarray:
    """T_p with q = T_p x."""
    _check_theta(theta)
    return np.array([[0.5, 0.5, 0.0],
                     [1.0 / L_ca, -1.0 / L_ca, 0.0],
                     [0.0, 0.0, 1.0 / np.cos(theta)]])


def force_transform(theta: float, L_ca: float) -> np.ndarray:
    """T_f with N = T_f N_hat."""
    _check_theta(theta)
    c = np.cos(theta)
    return np.array([[1.0, 1.0, np.tan(theta)],
                     [0.5 * L_ca * c, -0.5 * L_ca * c, 0.0],
                     [0.0, 0.0, 1.0 / c]])


def actuator_to_generalized_forces(N_hat, theta: float, L_ca: float) -> np.ndarray:
    return force_transform(theta, L_ca) @ np.asarray(N_hat, dtype=float)


def generalized_to_actuator_forces(N, theta: float, L_ca: float) -> np.ndarray:
    if L_ca <= 0:
        raise ValueError("L_ca must be positive")
    _check_theta(theta)
    c = np.cos(theta)
    if c == 0.0:
        raise PlantDomainError("cos(Theta) = 0")
    NX, NT, NY = np.asarray(N, dtype=float)
    common = 0.5 * (NX - NY * np.sin(theta))
    split = NT / (L_ca * c)
    return np.array([common + split, common - split, NY * c])


def coupling_terms(q, q_dot, params: GantryParams) -> dict:
    """Scalars J_ca, J_e, c_c, c_12, c_21, c_22, d_12, d_22, m_12, m_22."""
    X, th, Y = q
    Xd, thd, Yd = q_dot
    p = params
    hL = 0.5 * p.L_ca
    s, c = np.sin(th), np.cos(th)
    J_ca = p.m_ca / 12.0 * (p.L_ca ** 2 + p.W_ca ** 2)
    J_e = p.m_e / 12.0 * ((abs(X) + 0.5 * p.L_e) ** 2 + p.L_e ** 2) + p.m_e * Y ** 2
    c_c = p.m_e / 12.0 * (X + 0.5 * p.L_e * np.tanh(p.upsilon * X))
    return {
        "J_ca": J_ca,
        "J_e": J_e,
        "c_c": c_c,
        "m_12": hL * (p.m_1 - p.m_2) * c - p.m_e * Y * c,
        "m_22": J_e + J_ca + p.m_e * Y ** 2 + hL ** 2 * (p.m_1 + p.m_2) * c ** 2,
        "c_12": (-hL * (p.m_1 - p.m_2) + p.m_e * Y) * s * thd - c_c * thd - p.m_e * c * Yd,
        "c_21": c_c * thd,
        "c_22": c_c * Xd + 2 * p.m_e * Y * Yd - hL ** 2 * (p.m_1 + p.m_2) * c * s * thd,
        # virtual work of mu_k1 x1_dot, mu_k2 x2_dot at +-L/2 gives the difference
        "d_12": hL * (p.mu_k1 - p.mu_k2) * c,
        "d_22": p.mu_tau1 + p.mu_tau2 + hL ** 2 * (p.mu_k1 + p.mu_k2) * c,
    }


def assemble_matrices(gs: GeneralizedState, params: GantryParams):
    """Inertia M, Coriolis P, damping W and stiffness K at a generalized state."""
    q = np.asarray(gs.q, dtype=float)
    qd = np.asarray(gs.q_dot, dtype=float)
    _check_theta(q[1])
    p = params
    th, Y = q[1], q[2]
    thd = qd[1]
    s, c = np.sin(th), np.cos(th)
    t = coupling_terms(q, qd, p)
    me = p.m_e
    M = np.array([[me + p.m_ca + p.m_1 + p.m_2, t["m_12"], -me * s],
                  [t["m_12"], t["m_22"], 0.0],
                  [-me * s, 0.0, me]])
    P = np.array([[0.0, t["c_12"], -me * c * thd],
                  [t["c_21"], t["c_22"], 2 * me * Y * thd],
                  [0.0, -2 * me * Y * thd, 0.0]])
    W = np.array([[p.mu_k1 + p.mu_k2, t["d_12"], 0.0],
                  [t["d_12"], t["d_22"], 0.0],
                  [0.0, 0.0, p.mu_kY]])
    Km = np.diag([0.0, p.k_tau1 + p.k_tau2, 0.0])
    return M, P, W, Km


def friction_vector(x_dot, theta: float, params: GantryParams) -> np.ndarray:
    """Smoothed Coulomb friction of the three carriages in the generalized frame."""
    x_dot = np.asarray(x_dot, dtype=float)
    mu = np.array([params.mu_1, params.mu_2, params.mu_y])
    f_hat = mu * np.tanh(x_dot / params.v_eps)
    return force_transform(theta, params.L_ca) @ f_hat


def forward_dynamics(state: PlantState, u, h, params: GantryParams) -> np.ndarray:
    """Return dz/dt = (x_dot, x_ddot) for the carriage-coordinate model.

    Solves ``M T_p x_ddot = T_f K_f u - gamma - h - (P + W) T_p x_dot - K T_p x``.
    """
    x = np.asarray(state.x, dtype=float)
    xd = np.asarray(state.x_dot, dtype=float)
    u = np.asarray(u, dtype=float)
    h = np.zeros(3) if h is None else np.asarray(h, dtype=float)
    gs = carriage_to_generalized(x, xd, params, theta_max=np.pi / 2)
    th = gs.q[1]
    M, P, W, Km = assemble_matrices(gs, params)
    Tp = position_transform(th, params.L_ca)
    Tf = force_transform(th, params.L_ca)
    MTp = M @ Tp
    if np.linalg.cond(MTp) > COND_LIMIT:
        raise SingularDynamicsError("condition number of M T_p exceeds 1e12")
    rhs = Tf @ (params.K_f @ u) - friction_vector(xd, th, params) - h \
        - (P + W) @ (Tp @ xd) - Km @ (Tp @ x)
    xdd = np.linalg.solve(MTp, rhs)
    return np.concatenate([xd, xdd])

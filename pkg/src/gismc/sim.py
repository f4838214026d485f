"""Fixed-step closed-loop simulation at the control rate.

Inputs are held (zero-order hold) over each control period; the plant is
integrated with RK4 or semi-implicit Euler, optionally with several substeps
per period.  The measured output is ``y = x + w`` rounded to the encoder grid.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from . import _kernels as K
from .contours import ContourSpec, contour_error, reference
from .control import GainState, SlidingConfig
from .ilc import IlcMemory, corrected_reference
from .plant import THETA_MAX_DEFAULT, GantryParams, PlantState, pack_params

INTEGRATORS = {"rk4": K.RK4, "semi_implicit_euler": K.SEMI_IMPLICIT_EULER}
VELOCITY_MODES = {"true_velocity": K.VEL_TRUE, "filtered_difference": K.VEL_FILTERED}
DISTURBANCE_KINDS = ("zero", "constant", "sinusoid", "band_limited_noise")


class SimulationAbort(RuntimeError):
    """Closed loop left the valid state region; carries the partial trace."""

    def __init__(self, message, index, time, reason, trace=None):
        super().__init__(message)
        self.index = index
        self.time = time
        self.reason = reason
        self.trace = trace


@dataclass(frozen=True)
class SimConfig:
    control_rate: float = 20000.0
    substeps_per_control_period: int = 1
    duration: Optional[float] = None        # None: one contour period
    integrator: str = "rk4"
    seed: int = 0
    velocity: str = "true_velocity"
    velocity_cutoff: float = 1000.0         # Hz, filtered_difference only
    theta_max: float = THETA_MAX_DEFAULT

    def __post_init__(self):
        if not self.control_rate > 0:
            raise ValueError("sim.control_rate must be > 0")
        if int(self.substeps_per_control_period) != self.substeps_per_control_period \
                or self.substeps_per_control_period < 1:
            raise ValueError("sim.substeps_per_control_period must be an integer >= 1")
        if self.duration is not None and not self.duration > 0:
            raise ValueError("sim.duration must be > 0")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"sim.integrator must be one of {tuple(INTEGRATORS)}")
        if self.velocity not in VELOCITY_MODES:
            raise ValueError(f"sim.velocity must be one of {tuple(VELOCITY_MODES)}")
        if not 0 < self.theta_max < np.pi / 2:
            raise ValueError("sim.theta_max must lie in (0, pi/2)")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate

    def n_samples(self, duration: float) -> int:
        return int(round(duration * self.control_rate)) + 1


def _vec3(v) -> np.ndarray:
    a = np.broadcast_to(np.asarray(v, dtype=float), (3,)).copy()
    return a


@dataclass(frozen=True)
class DisturbanceProfile:
    """Per-axis disturbance channel.

    ``band_limited_noise`` is seeded white noise through a single-pole
    low-pass at ``cutoff`` Hz, scaled so its stationary std is ``amplitude``.
    """

    kind: str = "zero"
    amplitude: Sequence[float] = (0.0, 0.0, 0.0)
    frequency: Sequence[float] = (0.0, 0.0, 0.0)   # Hz, sinusoid only
    phase: Sequence[float] = (0.0, 0.0, 0.0)       # rad, sinusoid only
    cutoff: float = 100.0                          # Hz, noise only

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise ValueError(f"disturbance kind must be one of {DISTURBANCE_KINDS}")
        amp = _vec3(self.amplitude)
        if not np.all(np.isfinite(amp)) or np.any(amp < 0):
            raise ValueError("disturbance amplitudes must be finite and non-negative")
        object.__setattr__(self, "amplitude", tuple(amp))
        object.__setattr__(self, "frequency", tuple(_vec3(self.frequency)))
        object.__setattr__(self, "phase", tuple(_vec3(self.phase)))
        if self.kind == "band_limited_noise" and not self.cutoff > 0:
            raise ValueError("noise cutoff must be > 0")

    def value_at(self, t: float, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        amp = np.asarray(self.amplitude)
        if self.kind == "zero":
            return np.zeros(3)
        if self.kind == "constant":
            return amp.copy()
        if self.kind == "sinusoid":
            return amp * np.sin(2 * np.pi * np.asarray(self.frequency) * t + np.asarray(self.phase))
        if rng is None:
            raise ValueError("noise disturbance needs an rng")
        return amp * rng.standard_normal(3)

    def sequence(self, n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
        amp = np.asarray(self.amplitude)
        t = np.arange(n) * dt
        if self.kind == "zero":
            return np.zeros((n, 3))
        if self.kind == "constant":
            return np.tile(amp, (n, 1))
        if self.kind == "sinusoid":
            return amp * np.sin(2 * np.pi * np.outer(t, self.frequency) + np.asarray(self.phase))
        alpha = float(np.exp(-2.0 * np.pi * self.cutoff * dt))
        white = rng.standard_normal((n, 3))
        gain = np.sqrt((1.0 + alpha) / (1.0 - alpha)) * (1.0 - alpha)
        # stationary start: previous output taken as white[0] (unit std)
        out, _ = lfilter([gain], [1.0, -alpha], white, axis=0, zi=alpha * white[:1])
        return amp * out


@dataclass(frozen=True)
class DisturbanceConfig:
    h: DisturbanceProfile = field(default_factory=DisturbanceProfile)   # generalized force, N
    w: DisturbanceProfile = field(default_factory=DisturbanceProfile)   # output, m
    quantization: float = 0.5e-6

    def __post_init__(self):
        if not (np.isfinite(self.quantization) and self.quantization >= 0):
            raise ValueError("disturbance.quantization must be >= 0")

    def sequences(self, n: int, dt: float, seed: int, iteration_index: int = 0):
        """Held h and additive w for every control tick of one iteration."""
        ss = np.random.SeedSequence([int(seed), int(iteration_index)])
        rh, rw = (np.random.default_rng(s) for s in ss.spawn(2))
        return self.h.sequence(n, dt, rh), self.w.sequence(n, dt, rw)


@dataclass(frozen=True)
class ControllerConfig:
    variant: str = "C1"
    sliding: SlidingConfig = field(default_factory=SlidingConfig)
    gamma0: Sequence[float] = (1.0, 1.0, 1.0)
    gamma_bar: float = 1000.0
    epsilon: float = 1e-3
    adapt_first: bool = True
    persist_gains: bool = True             # adapted gains carry into the next trial

    def __post_init__(self):
        object.__setattr__(self, "gamma0", tuple(_vec3(self.gamma0)))
        # validates variant / gains
        self.initial_gains()

    def initial_gains(self) -> GainState:
        return GainState.initial(self.variant, self.gamma0, self.gamma_bar, self.epsilon)


@dataclass
class IterationTrace:
    t: np.ndarray
    y: np.ndarray
    r: np.ndarray
    e: np.ndarray
    s: np.ndarray
    Gamma: np.ndarray
    u: np.ndarray
    e_c: np.ndarray
    y_r: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None          # true plant state (N, 6)
    w_new: Optional[np.ndarray] = None      # online-resolved ILC profile
    h: Optional[np.ndarray] = None          # injected generalized force disturbance
    w_out: Optional[np.ndarray] = None      # injected output disturbance
    e_c_fallback: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def __len__(self):
        return len(self.t)


def integrate_step(state: PlantState, u, h, dt: float, params: GantryParams,
                   integrator: str = "rk4", substeps: int = 1) -> PlantState:
    """Advance the plant by dt with u and h held constant."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    z = np.ascontiguousarray(state.z, dtype=float)
    out = np.empty(6)
    hv = np.zeros(3) if h is None else np.ascontiguousarray(h, dtype=float)
    ok = K.advance(z, np.ascontiguousarray(u, dtype=float), hv, float(dt), int(substeps),
                   INTEGRATORS[integrator], pack_params(params), out)
    if not ok:
        from .plant import SingularDynamicsError
        raise SingularDynamicsError("M T_p singular during integration")
    return PlantState.from_z(out, state.t + dt)


def sensor_read(state: PlantState, dcfg: DisturbanceConfig, t: float,
                rng: Optional[np.random.Generator] = None, w=None) -> np.ndarray:
    """Encoder reading: positions plus output disturbance, on the encoder grid."""
    if w is None:
        w = dcfg.w.value_at(t, rng)
    y = np.asarray(state.x, dtype=float) + np.asarray(w, dtype=float)
    q = dcfg.quantization
    if q > 0:
        y = q * np.floor(y / q + 0.5)
    return y


def start_state(contour: ContourSpec) -> np.ndarray:
    ref = reference(contour, 0.0)
    return np.array([ref.x_d[0], ref.x_d[0], ref.y_d[0], 0.0, 0.0, 0.0])


def run_iteration(params: GantryParams, sim_cfg: SimConfig, dcfg: DisturbanceConfig,
                  controller: ControllerConfig, ilc_memory: Optional[IlcMemory],
                  contour: ContourSpec, iteration_index: int = 0,
                  gains0: Optional[np.ndarray] = None,
                  z0: Optional[np.ndarray] = None) -> IterationTrace:
    """One closed-loop trial from the contour's start pose at rest.

    ``ilc_memory`` of ``None`` (or with ``enabled=False``) runs without learning.
    ``gains0`` overrides the initial gains (used when gains persist across
    iterations).
    """
    duration = sim_cfg.duration if sim_cfg.duration is not None else contour.period
    n = sim_cfg.n_samples(duration)
    dt = sim_cfg.dt
    t = np.arange(n) * dt
    ref = reference(contour, t)
    r = np.ascontiguousarray(ref.r)
    r_dot = np.ascontiguousarray(ref.r_dot)

    learning = ilc_memory is not None and ilc_memory.enabled
    if learning:
        if ilc_memory.n_samples != n:
            from .ilc import GridMismatchError
            raise GridMismatchError(f"ILC profile has {ilc_memory.n_samples} samples, grid has {n}")
        cr = corrected_reference(ilc_memory, r, r_dot, dt)
        w_prev = np.ascontiguousarray(ilc_memory.w)
        w_prev_dot = np.ascontiguousarray(cr.y_r_dot - r_dot)
        mode = K.ILC_CURRENT if ilc_memory.mode == "current" else K.ILC_PREVIOUS
        l_rate = float(ilc_memory.l)
    else:
        w_prev = np.zeros((n, 3))
        w_prev_dot = np.zeros((n, 3))
        mode = K.ILC_OFF
        l_rate = 0.0

    h_seq, w_out = dcfg.sequences(n, dt, sim_cfg.seed, iteration_index)
    g0 = np.asarray(controller.gamma0 if gains0 is None else gains0, dtype=float)
    z_init = start_state(contour) if z0 is None else np.asarray(z0, dtype=float)

    Z = np.zeros((n, 6))
    out = {k: np.zeros((n, 3)) for k in ("y", "y_r", "e", "s", "G", "u", "w_new")}
    vel_alpha = float(np.exp(-2.0 * np.pi * sim_cfg.velocity_cutoff * dt))
    variant = {"C1": K.C1, "C2": K.C2, "C3": K.C3}[controller.variant]

    status, idx = K.closed_loop(
        pack_params(params), np.ascontiguousarray(z_init), dt,
        int(sim_cfg.substeps_per_control_period), INTEGRATORS[sim_cfg.integrator],
        r, r_dot, w_prev, w_prev_dot, mode, l_rate,
        np.ascontiguousarray(h_seq), np.ascontiguousarray(w_out), float(dcfg.quantization),
        np.ascontiguousarray(controller.sliding.lam), float(controller.sliding.a),
        np.ascontiguousarray(g0), float(controller.gamma_bar), float(controller.epsilon),
        variant, bool(controller.adapt_first),
        VELOCITY_MODES[sim_cfg.velocity], vel_alpha, float(sim_cfg.theta_max),
        Z, out["y"], out["y_r"], out["e"], out["s"], out["G"], out["u"], out["w_new"])

    meta = {"iteration_index": int(iteration_index), "variant": controller.variant,
            "task": contour.kind, "status": int(status)}
    m = n if status == K.OK else idx
    xpos = 0.5 * (out["y"][:m, 0] + out["y"][:m, 1])
    e_c = np.full(n, np.nan)
    fb = np.zeros(n, dtype=bool)
    e_c[:m], fb[:m] = contour_error(contour, xpos, out["y"][:m, 2], return_fallback_mask=True)
    trace = IterationTrace(t, out["y"], r, out["e"], out["s"], out["G"], out["u"], e_c,
                           y_r=out["y_r"], z=Z, w_new=out["w_new"], h=h_seq, w_out=w_out,
                           e_c_fallback=fb, meta=meta)
    if status != K.OK:
        reason = {K.ABORT_THETA: "yaw bound exceeded", K.ABORT_SINGULAR: "singular M T_p",
                  K.ABORT_NONFINITE: "non-finite state"}[status]
        raise SimulationAbort(
            f"iteration {iteration_index} aborted at t = {idx * dt:.6f} s: {reason}",
            idx, idx * dt, reason, trace)
    return trace

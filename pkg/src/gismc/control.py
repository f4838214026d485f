"""Per-axis sliding mode control laws.

Three variants share the sliding variable ``s = lambda e + e_dot`` and the
smooth switching law ``u = -Gamma sigm_a(s)``; they differ only in how the
gains move:

* ``C1`` - global iterative SMC: ``Gamma_dot = Gamma_bar |s|``.
* ``C2`` - adaptive SMC with a deadzone: the same rate times
  ``sign(|s| - epsilon)``, clamped at zero.
* ``C3`` - fixed gains ``Gamma = Gamma_0``.
"""

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

VARIANTS = ("C1", "C2", "C3")


@dataclass(frozen=True)
class SlidingConfig:
    lam: np.ndarray = field(default_factory=lambda: np.array([6.0, 6.0, 6.0]))
    a: float = 10.0

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(3)
        object.__setattr__(self, "lam", lam)
        if not np.all(lam > 0):
            raise ValueError("controller.lambda entries must be > 0 (Hurwitz surface)")
        if not self.a > 0:
            raise ValueError("controller.a must be > 0")


@dataclass(frozen=True)
class GainState:
    Gamma: np.ndarray
    Gamma_bar: float = 1000.0
    Gamma_0: np.ndarray = field(default_factory=lambda: np.ones(3))
    epsilon: float = 1e-3
    variant: str = "C1"

    def __post_init__(self):
        object.__setattr__(self, "Gamma", np.asarray(self.Gamma, dtype=float).reshape(3))
        object.__setattr__(self, "Gamma_0", np.asarray(self.Gamma_0, dtype=float).reshape(3))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown controller variant {self.variant!r}")
        if np.any(self.Gamma < 0) or np.any(self.Gamma_0 < 0):
            raise ValueError("gains must be non-negative")
        if not self.Gamma_bar > 0:
            raise ValueError("controller.gamma_bar must be > 0")
        if not self.epsilon >= 0:
            raise ValueError("controller.epsilon must be >= 0")

    @classmethod
    def initial(cls, variant="C1", Gamma_0=(1.0, 1.0, 1.0), Gamma_bar=1000.0, epsilon=1e-3):
        g0 = np.asarray(Gamma_0, dtype=float)
        return cls(g0.copy(), Gamma_bar, g0.copy(), epsilon, variant)


def sliding_variable(e, e_dot, cfg: SlidingConfig) -> np.ndarray:
    return cfg.lam * np.asarray(e, dtype=float) + np.asarray(e_dot, dtype=float)


def sigmoid(s, a):
    """(1 - exp(-a s)) / (1 + exp(-a s)), evaluated as tanh(a s / 2)."""
    return np.tanh(0.5 * a * np.asarray(s, dtype=float))


def sigmoid_derivative(s, a):
    # d/ds tanh(a s / 2) = (a / 2)(1 - sigm^2)
    sg = sigmoid(s, a)
    return 0.5 * a * (1.0 - sg * sg)


def control_law(s, Gamma, a) -> np.ndarray:
    return -np.asarray(Gamma, dtype=float) * sigmoid(s, a)


def adapt_gains(gs: GainState, s, dt: float) -> GainState:
    """One forward-Euler step of the variant's gain law."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    abs_s = np.abs(np.asarray(s, dtype=float))
    if gs.variant == "C1":
        G = gs.Gamma + gs.Gamma_bar * abs_s * dt
    elif gs.variant == "C2":
        G = gs.Gamma + gs.Gamma_bar * abs_s * np.sign(abs_s - gs.epsilon) * dt
        G = np.maximum(G, 0.0)
    else:
        G = gs.Gamma.copy()
    return replace(gs, Gamma=G)


def controller_step(y, y_r, y_r_dot, velocity_estimate, gs: GainState, cfg: SlidingConfig,
                    dt: float, adapt_first: bool = True) -> Tuple[np.ndarray, np.ndarray, GainState]:
    """One control tick: error, sliding variable, gain update, control volts.

    With ``adapt_first`` (default) the freshly adapted gains are used for ``u``;
    otherwise the gains from the previous tick are.
    """
    e = np.asarray(y, dtype=float) - np.asarray(y_r, dtype=float)
    e_dot = np.asarray(velocity_estimate, dtype=float) - np.asarray(y_r_dot, dtype=float)
    s = sliding_variable(e, e_dot, cfg)
    new = adapt_gains(gs, s, dt)
    u = control_law(s, new.Gamma if adapt_first else gs.Gamma, cfg.a)
    return u, s, new

"""Iteration-domain learning of the reference correction.

The corrected reference is ``y_r = r + w`` and the profile is updated with
``w_{i+1} = w_i + l e_{i+1}``.  Because ``e_{i+1}`` is measured against
``r + w_{i+1}``, the update is implicit; per sample it resolves to

    e = (y - r - w_i) / (1 + l),   w_{i+1} = w_i + l e.

``mode="previous"`` gives the explicit variant ``w_{i+1} = w_i + l e_i``.
Between iterations the profile goes through a zero-phase low-pass filter;
``r`` itself is never filtered.
"""

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Tuple

import numpy as np
from scipy.signal import lfilter

MODES = ("current", "previous")


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    enabled: bool = True
    cutoff: float = 50.0
    order: int = 2

    def __post_init__(self):
        if self.enabled:
            if not self.cutoff > 0:
                raise ValueError("ilc.filter.cutoff must be > 0")
            if int(self.order) != self.order or self.order < 1:
                raise ValueError("ilc.filter.order must be a positive integer")


@dataclass(frozen=True)
class IlcMemory:
    w: np.ndarray                      # (N, 3) metres
    iteration_index: int = 0
    l: float = 1.0
    filter: FilterConfig = field(default_factory=FilterConfig)
    mode: str = "current"
    enabled: bool = True

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[1] != 3:
            raise ValueError("ILC profile must have shape (N, 3)")
        object.__setattr__(self, "w", w)
        if not self.l > 0:
            raise ValueError("ilc.learning_rate must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"ilc.mode must be one of {MODES}")
        if self.iteration_index == 0 and np.any(w != 0):
            raise ValueError("ILC profile must be all-zero at iteration 0")

    @classmethod
    def empty(cls, n_samples: int, **kw) -> "IlcMemory":
        return cls(np.zeros((n_samples, 3)), **kw)

    @property
    def n_samples(self) -> int:
        return self.w.shape[0]


class CorrectedReference(NamedTuple):
    y_r: np.ndarray
    y_r_dot: np.ndarray


def resolve_online_update(y_t, r_t, w_prev_t, l: float) -> Tuple[np.ndarray, np.ndarray]:
    """Solve ``e = y - r - w_new``, ``w_new = w_prev + l e`` in closed form."""
    if l == -1:
        raise ValueError("learning rate l = -1 makes the implicit update degenerate")
    e = (np.asarray(y_t, float) - np.asarray(r_t, float) - np.asarray(w_prev_t, float)) / (1.0 + l)
    return e, np.asarray(w_prev_t, float) + l * e


def batch_update(w_prev, y, r, l: float) -> np.ndarray:
    """Whole-profile form of the implicit update: ``(w_prev + l (y - r)) / (1 + l)``."""
    w_prev = np.asarray(w_prev, float)
    return (w_prev + l * (np.asarray(y, float) - np.asarray(r, float))) / (1.0 + l)


def _lowpass_pass(x, alpha):
    # y[k] = alpha y[k-1] + (1 - alpha) x[k], started at steady state on x[0]
    zi = alpha * x[:1]
    out, _ = lfilter([1.0 - alpha], [1.0, -alpha], x, axis=0, zi=zi)
    return out


def filter_profile(w, cfg: FilterConfig, sample_rate: float) -> np.ndarray:
    """Zero-phase low-pass: forward-backward single-pole passes, ``order`` times.

    Each pass starts from the edge sample so constant profiles pass unchanged.
    """
    w = np.asarray(w, dtype=float)
    if not cfg.enabled:
        return w.copy()
    if cfg.cutoff >= 0.5 * sample_rate:
        raise ValueError(f"ilc.filter.cutoff {cfg.cutoff} Hz must be below Nyquist {0.5 * sample_rate} Hz")
    alpha = float(np.exp(-2.0 * np.pi * cfg.cutoff / sample_rate))
    out = w
    for _ in range(int(cfg.order)):
        out = _lowpass_pass(out, alpha)
        out = _lowpass_pass(out[::-1], alpha)[::-1]
    return np.ascontiguousarray(out)


def profile_derivative(w, dt: float) -> np.ndarray:
    """Central differences, one-sided at the ends (``numpy.gradient``)."""
    w = np.asarray(w, dtype=float)
    if w.shape[0] < 2:
        return np.zeros_like(w)
    return np.gradient(w, dt, axis=0)


def corrected_reference(memory: IlcMemory, r, r_dot, dt: float) -> CorrectedReference:
    r = np.asarray(r, dtype=float)
    r_dot = np.asarray(r_dot, dtype=float)
    if r.shape != memory.w.shape or r_dot.shape != memory.w.shape:
        raise GridMismatchError(f"reference grid {r.shape} does not match ILC profile {memory.w.shape}")
    return CorrectedReference(r + memory.w, r_dot + profile_derivative(memory.w, dt))


def finalize_iteration(memory: IlcMemory, w_new, sample_rate: float) -> IlcMemory:
    """Store the profile accumulated during an iteration (filtered) and advance.

    ``w_new`` is the per-sample ``w_{i+1}`` produced online by the closed loop
    (an ``IterationTrace`` is accepted as well).
    """
    w_new = getattr(w_new, "w_new", w_new)
    w_new = np.asarray(w_new, dtype=float)
    if w_new.shape != memory.w.shape:
        raise GridMismatchError(f"trace grid {w_new.shape} does not match ILC profile {memory.w.shape}")
    if memory.enabled:
        w = filter_profile(w_new, memory.filter, sample_rate)
    else:
        w = np.zeros_like(memory.w)
    return replace(memory, w=w, iteration_index=memory.iteration_index + 1)

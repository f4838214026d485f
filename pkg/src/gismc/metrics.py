"""Performance indexes of one iteration and their evolution across iterations.

Errors are reported in micrometres; sliding variables at a x1e-4 display
scale, so ``RMSSV = 39.3`` means ``3.93e-3``.  All time integrals use the
trapezoidal rule normalized by the trace duration.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

AXES = ("x1", "x2", "xy")
UM = 1e6
SV_SCALE = 1e4


def _as_series(series) -> np.ndarray:
    a = np.asarray(series, dtype=float)
    if a.shape[0] == 0:
        raise ValueError("empty series")
    return a


def _trapz(a, dt, axis=0):
    return np.trapezoid(a, dx=dt, axis=axis) if hasattr(np, "trapezoid") else np.trapz(a, dx=dt, axis=axis)


def rms(series, dt: float):
    """sqrt((1/T) int |x|^2 dt) with the trapezoidal rule; column-wise for 2-D input.

    A single sample has no duration and returns ``|x[0]|``.
    """
    a = _as_series(series)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if a.shape[0] == 1:
        return np.abs(a[0])
    T = dt * (a.shape[0] - 1)
    return np.sqrt(_trapz(a * a, dt) / T)


def max_abs(series):
    a = _as_series(series)
    return np.max(np.abs(a), axis=0)


@dataclass
class MetricsRecord:
    iteration_index: int
    variant: str
    task: str
    rmse: Dict[str, float]          # um
    maxae: Dict[str, float]         # um
    rmssv: Dict[str, float]         # x1e-4
    maxasv: Dict[str, float]        # x1e-4
    contour_rmse: float             # um
    contour_max: float              # um
    V1: float
    fallback_samples: int = 0
    final_gains: Dict[str, float] = field(default_factory=dict)
    max_du: Dict[str, float] = field(default_factory=dict)   # V/s, chattering proxy

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRecord":
        return cls(**d)


def _axes(v) -> Dict[str, float]:
    return {k: float(x) for k, x in zip(AXES, np.asarray(v, dtype=float))}


def lyapunov_v1(s, dt: float) -> float:
    """int_0^T (1/2) s^T s dt."""
    s = _as_series(s)
    return float(0.5 * _trapz(np.sum(s * s, axis=1), dt))


def chattering(u, dt: float) -> np.ndarray:
    u = _as_series(u)
    if u.shape[0] < 2:
        return np.zeros(u.shape[1])
    return np.max(np.abs(np.diff(u, axis=0)), axis=0) / dt


def summarize_iteration(trace, spec=None) -> MetricsRecord:
    """Tables-style indexes for one trace.

    Contour-error samples that are NaN (aborted tail) are excluded; samples
    that went through the closest-point fallback are counted.
    """
    dt = trace.dt if len(trace) > 1 else 1.0
    ec = np.asarray(trace.e_c, dtype=float)
    ok = np.isfinite(ec)
    if not np.any(ok):
        raise ValueError("trace has no finite contour-error samples")
    ec_ok = ec[ok]
    fb = trace.e_c_fallback
    meta = getattr(trace, "meta", {}) or {}
    task = meta.get("task", getattr(spec, "kind", ""))
    return MetricsRecord(
        iteration_index=int(meta.get("iteration_index", 0)),
        variant=str(meta.get("variant", "")),
        task=str(task),
        rmse=_axes(rms(trace.e, dt) * UM),
        maxae=_axes(max_abs(trace.e) * UM),
        rmssv=_axes(rms(trace.s, dt) * SV_SCALE),
        maxasv=_axes(max_abs(trace.s) * SV_SCALE),
        contour_rmse=float(rms(ec_ok, dt) * UM),
        contour_max=float(max_abs(ec_ok) * UM),
        V1=lyapunov_v1(trace.s, dt),
        fallback_samples=int(np.count_nonzero(fb)) if fb is not None else 0,
        final_gains=_axes(trace.Gamma[-1]),
        max_du=_axes(chattering(trace.u, dt)),
    )


@dataclass
class ConvergenceReport:
    iterations: List[int]
    contour_rmse: List[float]
    rmssv: Dict[str, List[float]]
    V1: List[float]
    # None when fewer than two iterations were run
    first_step_decrease: Optional[bool] = None
    overall_decrease: Optional[bool] = None
    first_step_ratio: Optional[float] = None
    rmssv_first_step_decrease: Optional[Dict[str, bool]] = None

    def __len__(self):
        return len(self.iterations)


def _first_step(series: Sequence[float]):
    if len(series) < 2:
        return None, None, None
    a = np.asarray(series, dtype=float)
    ratio = float(a[1] / a[0]) if a[0] != 0 else None
    return bool(a[1] < a[0]), bool(a[-1] < a[0]), ratio


def convergence_report(records: Sequence[MetricsRecord]) -> ConvergenceReport:
    if not records:
        raise ValueError("no records")
    tasks = {r.task for r in records}
    variants = {r.variant for r in records}
    if len(tasks) > 1 or len(variants) > 1:
        raise ValueError(f"records mix tasks {sorted(tasks)} / controllers {sorted(variants)}")
    recs = sorted(records, key=lambda r: r.iteration_index)
    ec = [r.contour_rmse for r in recs]
    sv = {ax: [r.rmssv[ax] for r in recs] for ax in AXES}
    first, overall, ratio = _first_step(ec)
    sv_first = None
    if len(recs) > 1:
        sv_first = {ax: bool(v[1] < v[0]) for ax, v in sv.items()}
    return ConvergenceReport([r.iteration_index for r in recs], ec, sv, [r.V1 for r in recs],
                             first, overall, ratio, sv_first)


def series_report(values: Sequence[float]) -> dict:
    """Flags and first-step ratio for a bare series."""
    first, overall, ratio = _first_step(values)
    return {"first_step_decrease": first, "overall_decrease": overall, "first_step_ratio": ratio}


def non_increasing(values: Sequence[float], slack: float = 1.0) -> bool:
    a = np.asarray(values, dtype=float)
    return bool(np.all(a[1:] <= slack * a[:-1]))


@dataclass
class TheoremDiagnostics:
    V1: List[float]
    V2: List[float]
    dV12: List[float]               # per step (V1 + V2)[i+1] - (V1 + V2)[i]
    V3: Optional[float] = None
    V3_note: str = "not computable: requires the existence-only bound Gamma*"


def theorem_diagnostics(traces, w_truth, profiles, lam, l: float = 1.0) -> TheoremDiagnostics:
    """Lyapunov-like learning performance terms per iteration.

    ``V1 = int (1/2) s^T s``; ``V2 = (1/(2l)) int varpi^T varpi`` with
    ``varpi = phi - phi_i`` and ``phi = lambda w + w_dot`` built from the
    injected output disturbance ``w_truth`` and the learned profile ``w_i``
    used in each trace.
    """
    if w_truth is None:
        raise ValueError("V2 needs the injected disturbance ground truth")
    if len(profiles) != len(traces):
        raise ValueError("one ILC profile per trace is required")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (3,))
    V1, V2 = [], []
    for tr, wi in zip(traces, profiles):
        dt = tr.dt
        wt = np.asarray(w_truth(tr) if callable(w_truth) else w_truth, dtype=float)
        wi = np.asarray(wi, dtype=float)
        phi = lam * wt + np.gradient(wt, dt, axis=0)
        phi_i = lam * wi + np.gradient(wi, dt, axis=0)
        varpi = phi - phi_i
        V1.append(lyapunov_v1(tr.s, dt))
        V2.append(float(0.5 / l * _trapz(np.sum(varpi * varpi, axis=1), dt)))
    total = np.add(V1, V2)
    return TheoremDiagnostics(V1, V2, list(np.diff(total)))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gismc.metrics import (AXES, MetricsRecord, chattering, convergence_report, lyapunov_v1,
                           max_abs, non_increasing, rms, series_report, summarize_iteration,
                           theorem_diagnostics)
from gismc.sim import IterationTrace

from conftest import simulate

series = arrays(float, st.integers(2, 200), elements=st.floats(-1e3, 1e3, allow_nan=False))


def synthetic(n=101, dt=1e-3, e=None, s=None, meta=None):
    t = np.arange(n) * dt
    z = np.zeros((n, 3))
    e = z if e is None else e
    s = z if s is None else s
    return IterationTrace(t, z.copy(), z.copy(), e, s, np.ones((n, 3)), z.copy(), np.zeros(n),
                          meta=meta or {"iteration_index": 0, "variant": "C1", "task": "circle_t1"})


def test_rms_examples():
    assert rms(np.full(50, -0.3), 0.01) == pytest.approx(0.3, rel=1e-15)
    t = np.linspace(0, 3, 30001)
    assert rms(2.5 * np.sin(2 * np.pi * t), t[1]) == pytest.approx(2.5 / np.sqrt(2), rel=1e-6)
    assert rms([4.0], 1.0) == 4.0
    with pytest.raises(ValueError):
        rms([], 1.0)
    with pytest.raises(ValueError):
        rms([1.0, 2.0], 0.0)


@given(series)
def test_rms_half_window_additivity(x):
    dt = 0.01
    if len(x) % 2 == 0:
        x = x[:-1]
    if len(x) < 3:
        return
    m = len(x) // 2
    a, b = x[: m + 1], x[m:]
    T1, T2 = dt * m, dt * (len(x) - 1 - m)
    whole = (rms(a, dt) ** 2 * T1 + rms(b, dt) ** 2 * T2) / (T1 + T2)
    assert np.sqrt(whole) == pytest.approx(rms(x, dt), rel=1e-9, abs=1e-12)


@given(series)
def test_rms_time_reversal(x):
    assert rms(x[::-1], 0.1) == pytest.approx(rms(x, 0.1), rel=1e-12, abs=1e-14)


@given(series)
def test_max_dominates_rms(x):
    assert max_abs(x) >= rms(x, 0.1) * (1 - 1e-12)


def test_max_abs_examples():
    assert max_abs(np.zeros(5)) == 0.0
    assert max_abs([1.0, -3.0, 2.0]) == 3.0
    with pytest.raises(ValueError):
        max_abs([])


def test_perfect_trace_is_all_zero():
    rec = summarize_iteration(synthetic())
    for idx in ("rmse", "maxae", "rmssv", "maxasv"):
        assert all(v == 0 for v in getattr(rec, idx).values())
    assert rec.contour_rmse == 0 and rec.V1 == 0


def test_single_spike():
    n, dt, h = 1001, 1e-3, 2e-6
    e = np.zeros((n, 3))
    e[500, 0] = h
    rec = summarize_iteration(synthetic(n, dt, e=e))
    T = dt * (n - 1)
    assert rec.maxae["x1"] == pytest.approx(h * 1e6, rel=1e-12)
    assert rec.rmse["x1"] == pytest.approx(h * np.sqrt(dt / T) * 1e6, rel=1e-12)


def test_v1_identity_with_rmssv():
    rng = np.random.default_rng(5)
    n, dt = 2001, 5e-5
    s = rng.normal(scale=1e-3, size=(n, 3))
    rec = summarize_iteration(synthetic(n, dt, s=s))
    T = dt * (n - 1)
    ident = 0.5 * T * sum((v / 1e4) ** 2 for v in rec.rmssv.values())
    assert rec.V1 == pytest.approx(ident, rel=1e-10)
    assert lyapunov_v1(s, dt) == rec.V1


def test_metrics_invariant_to_sample_rate(cfg):
    tr = simulate(cfg, duration=0.2)
    half = IterationTrace(tr.t[::2], tr.y[::2], tr.r[::2], tr.e[::2], tr.s[::2], tr.Gamma[::2],
                          tr.u[::2], tr.e_c[::2], meta=tr.meta)
    a, b = summarize_iteration(tr), summarize_iteration(half)
    for idx in ("rmse", "maxae", "rmssv", "maxasv"):
        for ax in AXES:
            assert getattr(b, idx)[ax] == pytest.approx(getattr(a, idx)[ax], rel=0.01)
    assert b.contour_rmse == pytest.approx(a.contour_rmse, rel=0.01)


def test_record_invariants_on_simulated_trace(cfg):
    rec = summarize_iteration(simulate(cfg, duration=0.1))
    for ax in AXES:
        assert rec.maxae[ax] >= rec.rmse[ax] >= 0
        assert rec.maxasv[ax] >= rec.rmssv[ax] >= 0
    assert MetricsRecord.from_dict(rec.to_dict()) == rec


def test_chattering():
    u = np.array([[0, 0, 0], [1, -2, 0], [1, 0, 0.5]], float)
    np.testing.assert_allclose(chattering(u, 0.5), [2, 4, 1])
    assert np.all(chattering(u[:1], 0.5) == 0)


def _records(values, variant="C1", task="circle_t1"):
    out = []
    for i, v in enumerate(values):
        ax = dict.fromkeys(AXES, v)
        out.append(MetricsRecord(i, variant, task, ax, ax, ax, ax, v, v, v))
    return out


def test_convergence_report_examples():
    rep = convergence_report(_records([10, 4, 3.5, 3.4, 3.3, 3.2]))
    assert len(rep) == 6
    assert rep.first_step_decrease and rep.overall_decrease
    assert rep.first_step_ratio == pytest.approx(0.4)
    assert all(rep.rmssv_first_step_decrease.values())
    one = convergence_report(_records([5.0]))
    assert one.first_step_decrease is None and one.first_step_ratio is None
    assert series_report([10, 4])["first_step_ratio"] == pytest.approx(0.4)


def test_convergence_report_rejects_mixed():
    recs = _records([1, 2]) + _records([1], variant="C2")
    with pytest.raises(ValueError):
        convergence_report(recs)
    with pytest.raises(ValueError):
        convergence_report([])


def test_non_increasing_slack():
    assert non_increasing([3, 2, 2.05], slack=1.05)
    assert not non_increasing([3, 2, 2.2], slack=1.05)


def test_theorem_diagnostics_zero_case():
    n = 201
    traces = [synthetic(n, 5e-5) for _ in range(3)]
    zero = np.zeros((n, 3))
    d = theorem_diagnostics(traces, zero, [zero] * 3, lam=6.0)
    assert d.V2 == [0.0, 0.0, 0.0] and d.V1 == [0.0, 0.0, 0.0]
    assert d.V3 is None and "not computable" in d.V3_note
    with pytest.raises(ValueError):
        theorem_diagnostics(traces, None, [zero] * 3, lam=6.0)


def test_theorem_diagnostics_perfect_learning():
    n, dt = 201, 5e-5
    t = np.arange(n) * dt
    w = np.column_stack([1e-5 * np.sin(40 * t)] * 3)
    traces = [synthetic(n, dt)] * 2
    d = theorem_diagnostics(traces, w, [np.zeros_like(w), w], lam=6.0)
    assert d.V2[0] > 0 and d.V2[1] == 0.0
    assert d.dV12[0] < 0

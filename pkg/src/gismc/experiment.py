"""Multi-iteration experiments and the three-controller comparison."""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from . import io as gio
from ._accel import backend_name
from .config import ExperimentConfig
from .ilc import IlcMemory, finalize_iteration
from .metrics import AXES, MetricsRecord, convergence_report, summarize_iteration
from .sim import SimulationAbort, run_iteration


class ConfigMismatchError(ValueError):
    pass


@dataclass
class RunManifest:
    config_hash: str
    version: str
    backend: str
    seed: int
    variant: str
    task: str
    iterations: List[dict]          # per iteration: file paths relative to the run dir
    files: Dict[str, str]           # relative path -> sha256
    timings: Dict[str, float]

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash, "version": self.version, "backend": self.backend,
            "seed": self.seed, "variant": self.variant, "task": self.task,
            "iterations": self.iterations, "files": self.files, "timings": self.timings,
        }

    def without_timings(self) -> dict:
        d = self.to_dict()
        d.pop("timings")
        return d


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: List[MetricsRecord]
    profiles: List[np.ndarray]      # w used in each iteration
    final_trace: object
    traces: Optional[list] = None
    manifest: Optional[RunManifest] = None
    out_dir: Optional[Path] = None

    @property
    def final(self) -> MetricsRecord:
        return self.records[-1]


def _new_memory(cfg: ExperimentConfig, n: int) -> IlcMemory:
    return IlcMemory.empty(n, l=cfg.learning_rate, filter=cfg.ilc_filter, mode=cfg.ilc_mode,
                           enabled=cfg.learning_active)


def run_experiment(cfg: ExperimentConfig, out_dir=None, keep_traces: bool = False) -> ExperimentResult:
    """Run ``cfg.iterations`` trials, threading the learned profile between them.

    With ``out_dir`` every trace, learned profile and metrics record is
    written together with ``convergence.csv`` and ``manifest.json``.
    """
    duration = cfg.sim.duration if cfg.sim.duration is not None else cfg.task.period
    n = cfg.sim.n_samples(duration)
    memory = _new_memory(cfg, n)
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(exc.errno, f"cannot create output directory {out}: {exc.strerror}") from exc

    records, profiles, traces, iters = [], [], [], []
    files: Dict[str, str] = {}
    timings: Dict[str, float] = {}
    gains = None
    trace = None
    t_start = time.perf_counter()
    for i in range(cfg.iterations):
        t0 = time.perf_counter()
        profiles.append(memory.w.copy())
        try:
            trace = run_iteration(cfg.plant, cfg.sim, cfg.disturbance, cfg.controller,
                                  memory if cfg.learning_active else None, cfg.task,
                                  iteration_index=i, gains0=gains)
        except SimulationAbort as exc:
            exc.args = (f"{exc.args[0]} [{cfg.controller.variant} on {cfg.task.kind}]",)
            raise
        if cfg.controller.persist_gains:
            gains = trace.Gamma[-1].copy()
        rec = summarize_iteration(trace, cfg.task)
        records.append(rec)
        if cfg.learning_active:
            memory = finalize_iteration(memory, trace.w_new, cfg.sim.control_rate)
        timings[f"iteration_{i + 1}"] = time.perf_counter() - t0
        if keep_traces:
            traces.append(trace)
        if out is not None:
            entry = {"iteration": i + 1}
            if "csv" in cfg.formats:
                p = gio.emit_trace(trace, out / f"trace_iter{i + 1:02d}.csv")
                q = gio.emit_profile(trace.t, memory.w, out / f"profile_iter{i + 1:02d}.csv")
                entry["trace"], entry["profile"] = p.name, q.name
            if "json" in cfg.formats:
                m = gio.emit_metrics(rec, out / f"metrics_iter{i + 1:02d}.json")
                entry["metrics"] = m.name
            iters.append(entry)
    timings["total"] = time.perf_counter() - t_start

    manifest = None
    if out is not None:
        conv = convergence_report(records)
        gio.emit_convergence(conv, out / "convergence.csv")
        gio.write_text(_dump_resolved(cfg), out / "config.resolved.yaml")
        for p in sorted(out.iterdir()):
            if p.is_file() and p.name != "manifest.json":
                files[p.name] = gio.sha256_file(p)
        manifest = RunManifest(cfg.config_hash(), __version__, backend_name(), cfg.sim.seed,
                               cfg.controller.variant, cfg.task.kind, iters, files, timings)
        gio.write_json(manifest.to_dict(), out / "manifest.json")
    return ExperimentResult(cfg, records, profiles, trace, traces if keep_traces else None,
                            manifest, out)


def _dump_resolved(cfg: ExperimentConfig) -> str:
    from .config import dump_config
    return dump_config(cfg)


def verify_manifest(run_dir) -> List[str]:
    """Files whose digest no longer matches the manifest (empty when intact)."""
    import json
    run_dir = Path(run_dir)
    man = json.loads((run_dir / "manifest.json").read_text())
    bad = []
    for name, digest in man["files"].items():
        p = run_dir / name
        if not p.exists() or gio.sha256_file(p) != digest:
            bad.append(name)
    return bad


# Comparison protocol

ORDER_VARIANTS = ("C1", "C2", "C3")


def ordering_verdict(final: Dict[str, MetricsRecord]) -> dict:
    """Check ``C1 <= C3 < C2`` on every (index, carriage) cell."""
    cells = {}
    for idx in gio.INDEXES:
        for ax in AXES:
            v1 = getattr(final["C1"], idx)[ax]
            v2 = getattr(final["C2"], idx)[ax]
            v3 = getattr(final["C3"], idx)[ax]
            cells[f"{idx}.{ax}"] = bool(v1 <= v3 < v2)
    k = sum(cells.values())
    return {"cells": cells, "holds": k, "total": len(cells),
            "line": f"ordering holds {k}/{len(cells)} cells"}


@dataclass
class ComparisonResult:
    task: str
    results: Dict[str, ExperimentResult]
    tables: Dict[str, Dict[str, Dict[str, float]]]
    verdict: dict
    convergence: Dict[str, object] = field(default_factory=dict)

    def final(self, variant: str) -> MetricsRecord:
        return self.results[variant].final

    def render(self) -> str:
        parts = [gio.render_table(self.tables[i], gio.INDEX_TITLES[i]) for i in gio.INDEXES]
        ec = "  ".join(f"{v}: {self.final(v).contour_rmse:.2f}" for v in ORDER_VARIANTS)
        parts.append(f"contour RMSE (um)  {ec}")
        parts.append(self.verdict["line"])
        return "\n\n".join(parts)


def _check_same(configs: Sequence[ExperimentConfig]):
    ref = configs[0]
    for c in configs[1:]:
        if c.plant != ref.plant:
            raise ConfigMismatchError("plants differ between compared configs")
        if c.task.kind != ref.task.kind or c.task.constants != ref.task.constants \
                or c.task.period != ref.task.period:
            raise ConfigMismatchError("tasks differ between compared configs")
        if c.sim.seed != ref.sim.seed:
            raise ConfigMismatchError("seeds differ between compared configs")


def variant_configs(cfg: ExperimentConfig) -> List[ExperimentConfig]:
    return [cfg.with_overrides(**{"controller.variant": v}) for v in ORDER_VARIANTS]


def compare(configs: Sequence[ExperimentConfig], out_dir=None) -> ComparisonResult:
    """Run C1, C2 and C3 on one task and tabulate the final iteration."""
    if len(configs) != 3:
        raise ValueError("compare needs exactly three configs (C1, C2, C3)")
    by_variant = {c.controller.variant: c for c in configs}
    if set(by_variant) != set(ORDER_VARIANTS):
        raise ConfigMismatchError("compare needs one config per controller C1, C2, C3")
    _check_same(configs)
    results = {}
    for v in ORDER_VARIANTS:
        sub = None if out_dir is None else Path(out_dir) / v
        results[v] = run_experiment(by_variant[v], sub)
    final = {v: results[v].final for v in ORDER_VARIANTS}
    tables = {idx: gio.table_from_records(final.values(), idx) for idx in gio.INDEXES}
    verdict = ordering_verdict(final)
    conv = {v: convergence_report(results[v].records) for v in ORDER_VARIANTS}
    res = ComparisonResult(configs[0].task.kind, results, tables, verdict, conv)
    if out_dir is not None:
        out = Path(out_dir)
        for idx in gio.INDEXES:
            gio.write_text(gio.table_csv(tables[idx]), out / f"table_{idx}.csv")
        gio.write_text(res.render() + "\n", out / "comparison.txt")
        gio.write_json({"verdict": verdict,
                        "contour_rmse": {v: final[v].contour_rmse for v in ORDER_VARIANTS},
                        "final_gains": {v: final[v].final_gains for v in ORDER_VARIANTS},
                        "max_du": {v: final[v].max_du for v in ORDER_VARIANTS}},
                       out / "comparison.json")
    return res

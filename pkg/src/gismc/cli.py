"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 simulation abort, 3 I/O error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from . import io as gio
from .config import ConfigError, default_config, parse_config
from .experiment import ConfigMismatchError, compare, run_experiment, variant_configs
from .metrics import convergence_report, summarize_iteration
from .sim import SimulationAbort

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_IO = 0, 1, 2, 3



class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for aborts here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load(args):
    cfg = parse_config(args.config) if args.config else default_config()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["sim.seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        over["ilc.iterations"] = args.iterations
    if getattr(args, "variant", None):
        over["controller.variant"] = args.variant
    if getattr(args, "task", None):
        over["task.kind"] = args.task
    return cfg.with_overrides(**over) if over else cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg.output_dir)
    res = run_experiment(cfg, out)
    for r in res.records:
        print(f"iteration {r.iteration_index + 1}: contour RMSE {r.contour_rmse:.3f} um  "
              f"RMSSV {r.rmssv['x1']:.3f} {r.rmssv['x2']:.3f} {r.rmssv['xy']:.3f} (x1e-4)")
    print(f"wrote {len(res.manifest.files) + 1} files to {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.config or []) == 3:
        cfgs = []
        for p in args.config:
            ns = argparse.Namespace(**{**vars(args), "config": p})
            cfgs.append(_load(ns))
    elif len(args.config or []) <= 1:
        ns = argparse.Namespace(**{**vars(args), "config": (args.config or [None])[0]})
        cfgs = variant_configs(_load(ns))
    else:
        raise ConfigError("compare takes one config (variants derived) or three (C1, C2, C3)")
    out = Path(args.out or cfgs[0].output_dir)
    res = compare(cfgs, out)
    print(res.render())
    return EXIT_OK


def cmd_metrics(args) -> int:
    target = Path(args.path)
    if target.is_dir():
        traces = sorted(target.glob("trace_iter*.csv"))
        if not traces:
            raise FileNotFoundError(f"no trace_iter*.csv files in {target}")
        meta = {}
        man = target / "manifest.json"
        if man.exists():
            m = json.loads(man.read_text())
            meta = {"variant": m.get("variant", ""), "task": m.get("task", "")}
    else:
        traces, meta = [target], {}
    records = []
    for i, p in enumerate(traces):
        tr = gio.read_trace(p, meta={**meta, "iteration_index": i})
        records.append(summarize_iteration(tr))
    print("iteration,contour_rmse_um,rmse_x1,rmse_x2,rmse_xy,rmssv_1,rmssv_2,rmssv_y")
    for r in records:
        vals = [r.contour_rmse, *r.rmse.values(), *r.rmssv.values()]
        print(f"{r.iteration_index + 1}," + ",".join(f"{v:.6g}" for v in vals))
    if len(records) > 1:
        rep = convergence_report(records)
        print(f"first-step decrease: {rep.first_step_decrease}  overall decrease: "
              f"{rep.overall_decrease}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        gio.write_json([r.to_dict() for r in records], out / "metrics.json")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    print(f"config OK  hash {cfg.config_hash()}")
    print(f"controller {cfg.controller.variant}, task {cfg.task.kind}, "
          f"{cfg.iterations} iterations at {cfg.sim.control_rate:g} Hz")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gismc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"gismc {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, multi_config=False):
        if multi_config:
            p.add_argument("--config", action="append",
                           help="YAML config; give once (variants derived) or three times")
        else:
            p.add_argument("--config", help="YAML config (defaults when omitted)")
        p.add_argument("--seed", type=int)
        p.add_argument("--iterations", type=int)
        p.add_argument("--task", choices=("circle_t1", "cardioid_t2", "custom"))

    p = sub.add_parser("run", help="run one multi-iteration experiment")
    common(p)
    p.add_argument("--variant", choices=("C1", "C2", "C3"))
    p.add_argument("--out", help="output directory (default: output.directory)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run C1, C2 and C3 and tabulate the final iteration")
    common(p, multi_config=True)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("metrics", help="recompute metrics from a run directory or trace CSV")
    p.add_argument("path")
    p.add_argument("--out", help="write metrics.json here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("validate-config", help="parse and validate a config file")
    common(p)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ConfigMismatchError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationAbort as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

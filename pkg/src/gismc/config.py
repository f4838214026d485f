"""Experiment configuration: YAML in, validated dataclasses out.

Every key is optional; missing keys take the documented defaults.  Unknown
keys are rejected with a suggestion when a known key lies within edit
distance 2.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml
from rapidfuzz.distance import Levenshtein

from .contours import KINDS, ContourSpec
from .control import VARIANTS, SlidingConfig
from .ilc import MODES, FilterConfig
from .plant import GantryParams
from .sim import (DISTURBANCE_KINDS, INTEGRATORS, VELOCITY_MODES, ControllerConfig,
                  DisturbanceConfig, DisturbanceProfile, SimConfig)


class ConfigError(ValueError):
    def __init__(self, message, key: Optional[str] = None, line: Optional[int] = None):
        loc = []
        if key:
            loc.append(f"key `{key}`")
        if line is not None:
            loc.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.key = key
        self.line = line


_DIST = {"kind": "zero", "amplitude": [0.0, 0.0, 0.0], "frequency": [0.0, 0.0, 0.0],
         "phase": [0.0, 0.0, 0.0], "cutoff": 100.0}

DEFAULTS = {
    "plant": {f.name: f.default for f in fields(GantryParams)},
    "sim": {
        "control_rate": 20000.0,
        "substeps_per_control_period": 1,
        "duration": None,
        "integrator": "rk4",
        "seed": 0,
        "velocity": "true_velocity",
        "velocity_cutoff": 1000.0,
        "theta_max": float(np.pi / 3),
    },
    "disturbance": {"h": dict(_DIST), "w": dict(_DIST), "quantization": 0.5e-6},
    "controller": {
        "variant": "C1",
        "lambda": [6.0, 6.0, 6.0],
        "a": 10.0,
        "gamma0": [1.0, 1.0, 1.0],
        "gamma_bar": 1000.0,
        "epsilon": 1e-3,
        "adapt_first": True,
        "persist_gains": True,
    },
    "ilc": {
        "enabled": True,
        "learning_rate": 1.0,
        "mode": "current",
        "iterations": 6,
        "filter": {"enabled": True, "cutoff": 50.0, "order": 2},
    },
    "task": {"kind": "circle_t1", "period": None, "constants": {}, "cusp_band": 2e-3,
             "table": None, "implicit": None, "allow_plugin": False},
    "output": {"directory": "runs", "formats": ["csv", "json"]},
}

# subtrees whose keys are free-form
_OPEN = {"task.constants"}


def _paths(tree, prefix=""):
    for k, v in tree.items():
        p = f"{prefix}{k}"
        yield p
        if isinstance(v, dict) and p not in _OPEN:
            yield from _paths(v, p + ".")


KNOWN_KEYS = tuple(_paths(DEFAULTS))


def suggest_key(key: str, max_distance: int = 2) -> Optional[str]:
    best = None
    for cand in KNOWN_KEYS:
        d = Levenshtein.distance(key, cand, score_cutoff=max_distance)
        if d <= max_distance and (best is None or d < best[0]):
            best = (d, cand)
    return best[1] if best else None


class _LineLoader(yaml.SafeLoader):
    """Safe loader that remembers the source line of every mapping key."""


def _construct_mapping(loader, node, deep=False):
    lines = {}
    for key_node, _ in node.value:
        lines[loader.construct_object(key_node, deep=True)] = key_node.start_mark.line + 1
    mapping = loader.construct_mapping(node, deep=deep)
    loader.key_lines.update({id(mapping): lines})
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _load_yaml(text: str):
    loader = _LineLoader(text)
    loader.key_lines = {}
    try:
        data = loader.get_single_data()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML parse error: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None
    finally:
        loader.dispose()
    return data, loader.key_lines


def _merge(defaults, user, lines, prefix=""):
    out = copy.deepcopy(defaults)
    if user is None:
        return out
    if not isinstance(user, dict):
        raise ConfigError("expected a mapping", key=prefix.rstrip(".") or None)
    user_lines = lines.get(id(user), {})
    for k, v in user.items():
        key = f"{prefix}{k}"
        if k not in defaults:
            if isinstance(v, dict) and v:
                # report the full dotted path so the hint covers the leaf as well
                key = f"{key}.{next(iter(v))}"
            hint = suggest_key(key)
            msg = f"unknown key `{key}`" + (f"; did you mean `{hint}`?" if hint else "")
            raise ConfigError(msg, line=user_lines.get(k))
        if isinstance(defaults[k], dict) and key not in _OPEN:
            out[k] = _merge(defaults[k], v, lines, key + ".")
        elif key in _OPEN:
            if not isinstance(v, dict):
                raise ConfigError("expected a mapping", key=key, line=user_lines.get(k))
            out[k] = dict(v)
        else:
            out[k] = v
    return out


def _num(v, key):
    # YAML 1.1 reads exponents without a dot (1e-3) as strings
    if isinstance(v, bool):
        raise ConfigError("expected a number", key=key)
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {v!r}", key=key) from None


def _vec3(v, key):
    try:
        a = np.broadcast_to(np.asarray(v, dtype=float), (3,))
    except (TypeError, ValueError):
        raise ConfigError("expected a number or a 3-vector", key=key) from None
    return [float(x) for x in a]


@dataclass(frozen=True)
class ExperimentConfig:
    plant: GantryParams
    sim: SimConfig
    disturbance: DisturbanceConfig
    controller: ControllerConfig
    ilc_enabled: bool
    learning_rate: float
    ilc_mode: str
    ilc_filter: FilterConfig
    iterations: int
    task: ContourSpec
    output_dir: str
    formats: tuple
    resolved: dict              # fully-defaulted tree

    @property
    def learning_active(self) -> bool:
        # C2 is the time-domain adaptive controller alone
        return self.ilc_enabled and self.controller.variant != "C2"

    def config_hash(self) -> str:
        return config_hash(self.resolved)

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        tree = copy.deepcopy(self.resolved)
        for key, value in dotted.items():
            node = tree
            parts = key.split(".")
            for p in parts[:-1]:
                node = node[p]
            node[parts[-1]] = value
        return build_config(tree)


def _canonical(o):
    # 10 and 10.0 describe the same experiment
    if isinstance(o, dict):
        return {k: _canonical(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_canonical(v) for v in o]
    if isinstance(o, np.ndarray):
        return _canonical(o.tolist())
    if isinstance(o, (int, np.integer)) and not isinstance(o, bool):
        return float(o)
    return o


def config_hash(tree: dict) -> str:
    canon = json.dumps(_canonical(tree), sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(canon.encode()).hexdigest()


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _enum(value, allowed, key):
    if value not in allowed:
        raise ConfigError(f"must be one of {tuple(allowed)}, got {value!r}", key=key)
    return value


def _wrap(key, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), key=key) from None


def build_config(tree: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Validate a fully-merged tree and construct the typed config."""
    pl = tree["plant"]
    plant = _wrap("plant", GantryParams, **{k: _num(v, f"plant.{k}") for k, v in pl.items()})

    s = tree["sim"]
    _enum(s["integrator"], INTEGRATORS, "sim.integrator")
    _enum(s["velocity"], VELOCITY_MODES, "sim.velocity")
    if not isinstance(s["seed"], int) or isinstance(s["seed"], bool) or s["seed"] < 0:
        raise ConfigError("must be a non-negative integer", key="sim.seed")
    sim = _wrap("sim", SimConfig, control_rate=_num(s["control_rate"], "sim.control_rate"),
                substeps_per_control_period=s["substeps_per_control_period"],
                duration=None if s["duration"] is None else _num(s["duration"], "sim.duration"),
                integrator=s["integrator"], seed=s["seed"], velocity=s["velocity"],
                velocity_cutoff=_num(s["velocity_cutoff"], "sim.velocity_cutoff"),
                theta_max=_num(s["theta_max"], "sim.theta_max"))

    d = tree["disturbance"]
    profiles = {}
    for ch in ("h", "w"):
        p = d[ch]
        _enum(p["kind"], DISTURBANCE_KINDS, f"disturbance.{ch}.kind")
        profiles[ch] = _wrap(f"disturbance.{ch}", DisturbanceProfile, kind=p["kind"],
                             amplitude=_vec3(p["amplitude"], f"disturbance.{ch}.amplitude"),
                             frequency=_vec3(p["frequency"], f"disturbance.{ch}.frequency"),
                             phase=_vec3(p["phase"], f"disturbance.{ch}.phase"),
                             cutoff=_num(p["cutoff"], f"disturbance.{ch}.cutoff"))
    dist = _wrap("disturbance.quantization", DisturbanceConfig, profiles["h"], profiles["w"],
                 _num(d["quantization"], "disturbance.quantization"))

    c = tree["controller"]
    _enum(c["variant"], VARIANTS, "controller.variant")
    sliding = _wrap("controller.lambda", SlidingConfig, lam=_vec3(c["lambda"], "controller.lambda"),
                    a=_num(c["a"], "controller.a"))
    if not _num(c["epsilon"], "controller.epsilon") >= 0:
        raise ConfigError("must be >= 0", key="controller.epsilon")
    if not _num(c["gamma_bar"], "controller.gamma_bar") > 0:
        raise ConfigError("must be > 0", key="controller.gamma_bar")
    g0 = _vec3(c["gamma0"], "controller.gamma0")
    if min(g0) < 0:
        raise ConfigError("gains must be non-negative", key="controller.gamma0")
    ctl = _wrap("controller", ControllerConfig, variant=c["variant"], sliding=sliding, gamma0=g0,
                gamma_bar=_num(c["gamma_bar"], "controller.gamma_bar"),
                epsilon=_num(c["epsilon"], "controller.epsilon"),
                adapt_first=bool(c["adapt_first"]), persist_gains=bool(c["persist_gains"]))

    il = tree["ilc"]
    it = il["iterations"]
    if not isinstance(it, int) or isinstance(it, bool) or it < 1:
        raise ConfigError("must be an integer >= 1", key="ilc.iterations")
    if not _num(il["learning_rate"], "ilc.learning_rate") > 0:
        raise ConfigError("must be > 0", key="ilc.learning_rate")
    _enum(il["mode"], MODES, "ilc.mode")
    f = il["filter"]
    filt = _wrap("ilc.filter", FilterConfig, enabled=bool(f["enabled"]),
                 cutoff=_num(f["cutoff"], "ilc.filter.cutoff"),
                 order=f["order"])
    if filt.enabled and filt.cutoff >= 0.5 * sim.control_rate:
        raise ConfigError(f"cutoff must be below Nyquist ({0.5 * sim.control_rate} Hz)",
                          key="ilc.filter.cutoff")

    t = tree["task"]
    _enum(t["kind"], KINDS, "task.kind")
    table = t["table"]
    if isinstance(table, str):
        path = Path(table)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            table = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
        except OSError as exc:
            raise ConfigError(f"cannot read contour table: {exc}", key="task.table") from None
    task = _wrap("task", ContourSpec, kind=t["kind"],
                 period=None if t["period"] is None else _num(t["period"], "task.period"),
                 constants=dict(t["constants"]), cusp_band=_num(t["cusp_band"], "task.cusp_band"),
                 table=None if table is None else np.asarray(table, dtype=float),
                 implicit=t["implicit"], allow_plugin=bool(t["allow_plugin"]))

    o = tree["output"]
    formats = tuple(o["formats"]) if isinstance(o["formats"], (list, tuple)) else (o["formats"],)
    for fm in formats:
        _enum(fm, ("csv", "json"), "output.formats")

    return ExperimentConfig(plant, sim, dist, ctl, bool(il["enabled"]), _num(il["learning_rate"], "ilc.learning_rate"),
                            il["mode"], filt, it, task, str(o["directory"]), formats, tree)


def parse_config_text(text: str, base_dir: Optional[Path] = None) -> ExperimentConfig:
    data, lines = _load_yaml(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1)
    tree = _merge(DEFAULTS, data, lines)
    table = tree["task"]["table"]
    if isinstance(table, str) and base_dir is not None and not Path(table).is_absolute():
        tree["task"]["table"] = str(Path(base_dir) / table)
    return build_config(tree, base_dir)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text, base_dir=path.parent)


def default_config() -> ExperimentConfig:
    return build_config(copy.deepcopy(DEFAULTS))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(json.loads(json.dumps(cfg.resolved, default=_jsonable)), sort_keys=True)


def get_key(tree: dict, dotted: str) -> Any:
    node = tree
    for p in dotted.split("."):
        node = node[p]
    return node

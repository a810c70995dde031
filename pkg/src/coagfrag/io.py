"""Config parsing and deterministic output writers."""
from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .dislocation import DislocationMeasure
from .errors import DomainError
from .kernels import CoagKernel, FragKernel
from .particles import ParticleState
from .solver import AtomicMeasure, GridPolicy, SolveConfig
from .stochastic import RECORD_MODES, SimConfig

MANIFEST_VERSION = 1
SEED_ENV = "COAGFRAG_SEED"


class ConfigError(DomainError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _num(x):
    if isinstance(x, str) and x.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise TypeError(f"expected a number, got {x!r}")
    return float(x)


def _section(cfg: Mapping, name: str, required: bool = True) -> Mapping:
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(name, "missing section")
        return {}
    if not isinstance(sec, Mapping):
        raise ConfigError(name, "must be an object")
    return sec


def _wrap(field, fn, *args):
    try:
        return fn(*args)
    except ConfigError:
        raise
    except (DomainError, TypeError, ValueError, KeyError) as exc:
        raise ConfigError(field, str(exc)) from None


# ------------------------------------------------------------------ loading

def load_config(path: str | os.PathLike) -> tuple[dict, bytes]:
    """Return (config, raw bytes). A run manifest is accepted in place of a
    config; its config echo and seed are used."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {p}: {exc.strerror}") from None
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("--config", "top level must be an object")
    if "manifest_version" in obj:
        cfg = obj.get("config")
        if not isinstance(cfg, dict):
            raise ConfigError("config", "manifest has no config echo")
        cfg = json.loads(json.dumps(cfg))
        if isinstance(cfg.get("run"), dict):
            cfg["run"]["seed"] = obj.get("seed", 0)
        cfg["_seed"] = obj.get("seed", 0)
        obj = cfg
    obj["_base_dir"] = str(p.parent.resolve())
    return obj, raw


def resolve_seed(cli_seed: int | None, cfg: Mapping) -> int:
    """--seed, then run.seed (or a replayed manifest seed), then $COAGFRAG_SEED, then 0."""
    if cli_seed is not None:
        seed = cli_seed
        field = "--seed"
    elif "seed" in (cfg.get("run") or {}):
        seed = cfg["run"]["seed"]
        field = "run.seed"
    elif "_seed" in cfg:
        seed = cfg["_seed"]
        field = "seed"
    elif os.environ.get(SEED_ENV, "").strip():
        seed = os.environ[SEED_ENV].strip()
        field = SEED_ENV
    else:
        return 0
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise ConfigError(field, f"seed must be an integer, got {seed!r}") from None
    if not 0 <= seed < 2 ** 64:
        raise ConfigError(field, "seed must be an unsigned 64-bit integer")
    return seed


def parse_kernels(cfg: Mapping) -> tuple[CoagKernel, FragKernel]:
    sec = _section(cfg, "kernels")
    if "coag" not in sec:
        raise ConfigError("kernels.coag", "missing")
    if "frag" not in sec:
        raise ConfigError("kernels.frag", "missing")
    K = _wrap("kernels.coag", CoagKernel.from_json, sec["coag"])
    F = _wrap("kernels.frag", FragKernel.from_json, sec["frag"])
    return K, F


def parse_beta(cfg: Mapping) -> DislocationMeasure:
    if "beta" not in cfg:
        return DislocationMeasure(())
    return _wrap("beta", DislocationMeasure.from_json, cfg["beta"])


def parse_state(cfg: Mapping, key: str = "masses") -> ParticleState:
    sec = _section(cfg, "initial")
    field = f"initial.{key}"
    vals = sec.get(key)
    if not isinstance(vals, list):
        raise ConfigError(field, "must be a list of positive numbers")
    return _wrap(field, lambda v: ParticleState.from_masses(_num(x) for x in v), vals)


def parse_measure(cfg: Mapping) -> AtomicMeasure:
    sec = _section(cfg, "initial")
    if "csv" in sec:
        path = Path(cfg.get("_base_dir", ".")) / sec["csv"]
        return _wrap("initial.csv", read_measure_csv, path)
    if "support" not in sec or "weights" not in sec:
        raise ConfigError("initial", "needs 'support' and 'weights' (or 'csv')")

    def build():
        return AtomicMeasure(np.array([_num(x) for x in sec["support"]]),
                             np.array([_num(x) for x in sec["weights"]]))
    return _wrap("initial", build)


def input_files(cfg: Mapping) -> list:
    sec = cfg.get("initial") or {}
    if isinstance(sec, Mapping) and "csv" in sec:
        return [Path(cfg.get("_base_dir", ".")) / sec["csv"]]
    return []


_RUN_FIELDS = {"t_max": "t_max", "lambda": "lam", "tau_cap": "tau_cap",
               "max_events": "max_events", "record_mode": "record_mode",
               "snapshot_dt": "snapshot_dt", "engine": "engine"}


def parse_run(cfg: Mapping, seed: int) -> SimConfig:
    sec = _section(cfg, "run")
    kw = {"seed": seed}
    for key, attr in _RUN_FIELDS.items():
        if key not in sec:
            continue
        v = sec[key]
        field = f"run.{key}"
        try:
            if key in ("record_mode", "engine"):
                if not isinstance(v, str):
                    raise TypeError("expected a string")
            elif key == "max_events":
                v = int(_num(v))
            elif key == "snapshot_dt" and v is None:
                pass
            else:
                v = _num(v)
        except (TypeError, ValueError, OverflowError) as exc:
            raise ConfigError(field, str(exc)) from None
        kw[attr] = v
    if "t_max" not in kw:
        raise ConfigError("run.t_max", "missing")
    # field-level checks first so the error names the offending key
    if "lam" in kw and not 0 < kw["lam"] <= 1:
        raise ConfigError("run.lambda", f"{kw['lam']} outside (0, 1]")
    if not kw["t_max"] > 0:
        raise ConfigError("run.t_max", "must be > 0")
    if "max_events" in kw and kw["max_events"] < 1:
        raise ConfigError("run.max_events", "must be >= 1")
    if "record_mode" in kw and kw["record_mode"] not in RECORD_MODES:
        raise ConfigError("run.record_mode", f"must be one of {RECORD_MODES}")
    return _wrap("run", lambda: SimConfig(**kw))


_SOLVE_FIELDS = {"dt": "dt", "t_max": "t_max", "lambda": "lam", "scheme": "scheme",
                 "picard_tol": "picard_tol", "picard_max_iters": "picard_max_iters",
                 "snapshot_every": "snapshot_every"}


def parse_solve(cfg: Mapping) -> SolveConfig:
    sec = _section(cfg, "solve")
    kw = {}
    for key, attr in _SOLVE_FIELDS.items():
        if key not in sec:
            continue
        v = sec[key]
        try:
            if key == "scheme":
                if not isinstance(v, str):
                    raise TypeError("expected a string")
            elif key in ("picard_max_iters", "snapshot_every"):
                v = int(_num(v))
            else:
                v = _num(v)
        except (TypeError, ValueError, OverflowError) as exc:
            raise ConfigError(f"solve.{key}", str(exc)) from None
        kw[attr] = v
    for req in ("dt", "t_max"):
        if req not in kw:
            raise ConfigError(f"solve.{req}", "missing")
    if "lam" in kw and not 0 < kw["lam"] <= 1:
        raise ConfigError("solve.lambda", f"{kw['lam']} outside (0, 1]")
    for key in ("dt", "t_max"):
        if not kw[key] > 0:
            raise ConfigError(f"solve.{key}", "must be > 0")
    return _wrap("solve", lambda: SolveConfig(**kw))


def parse_grid(cfg: Mapping) -> GridPolicy:
    sec = dict(_section(cfg, "grid", required=False))
    kw = {}
    for key in ("kind", "overflow"):
        if key in sec:
            kw[key] = sec[key]
    for key in ("ratio", "x_min", "x_max", "cap"):
        if key in sec:
            kw[key] = _wrap(f"grid.{key}", _num, sec[key])
    if "max_points" in sec:
        kw["max_points"] = _wrap("grid.max_points", lambda v: int(_num(v)), sec["max_points"])
    return _wrap("grid", lambda: GridPolicy(**kw))


def public_config(cfg: Mapping) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


# ------------------------------------------------------------------ writing

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path: Path, header: Sequence[str], columns: Sequence[Sequence[Any]]) -> Path:
    n = len(columns[0]) if columns else 0
    lines = [",".join(header)]
    for r in range(n):
        lines.append(",".join(fmt(c[r]) for c in columns))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    return Path(path)


def jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path: Path, obj) -> Path:
    text = json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_bytes((text + "\n").encode("utf-8"))
    return Path(path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_measure_csv(path) -> AtomicMeasure:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0].strip().replace(" ", "") != "x,w":
        raise DomainError(f"{path}: expected header 'x,w'")
    xs, ws = [], []
    for ln in lines[1:]:
        a, b = ln.split(",")
        xs.append(float(a))
        ws.append(float(b))
    return AtomicMeasure(np.array(xs), np.array(ws))


def write_measure_csv(path, c: AtomicMeasure) -> Path:
    return write_csv(path, ("x", "w"), (c.support, c.weights))


def plot_spec(csv_name: str, x: str, ys: Sequence[str], title: str, logy: bool = False) -> dict:
    return {"data": csv_name, "x": x, "y": list(ys), "title": title,
            "x_label": x, "y_scale": "log" if logy else "linear"}


def write_manifest(out_dir: Path, command: str, version: str, config: Mapping, seed: int,
                   inputs: Mapping[str, str], outputs: Sequence[Path], wall_clock: float,
                   event_counts: Mapping | None = None) -> Path:
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "tool": "coagfrag",
        "version": version,
        "command": command,
        "config": public_config(config),
        "seed": seed,
        "inputs": dict(inputs),
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        "wall_clock_s": round(wall_clock, 6),
        "event_counts": dict(event_counts or {}),
    }
    return write_json(Path(out_dir) / "manifest.json", manifest)

"""Command-line experiment runner.

Config file (JSON)::

    {
      "mode": "run",                      # run | oracle | validate-thm5 | validate-thm6 | front-scatter
      "instance": "instance.json",        # path (relative to the config) or inline object
      "cone": "cone.json",                # path or inline object
      "deltas": [0.1, 0.01],
      "replications": 100,
      "seed": 0,
      "max_steps": 1000000,
      "out": "results",
      "z": [0.7071, 0.7071],              # validators; default: normalized sum of generators
      "rho_grid": [10, 15, 20], "t": 100, # validate-thm5
      "horizon": 1000,                    # validate-thm6
      "num_arms": 200, "angles": [1.5708, 1.0472]   # front-scatter
    }

Command-line flags override the corresponding config fields. ``results.csv``
has the frozen column order ``delta, seed, tau, correct, budget_exhausted,
error``; summaries go to ``summary.json``.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .concentration import as_preference, coverage_check_thm6, tail_bound_check_thm5
from .errors import InputError, PrepexError
from .geometry import angle_cone, cone_from_dict, orthant
from .oracle import Instance, characteristic_time, gaussian_closed_form_inverse_time
from .pareto import pareto_set, write_front_csv
from .prets import DEFAULT_MAX_STEPS, Environment, run_prets
from .seeding import derive_seed

log = logging.getLogger("prepex")

MODES = ("run", "oracle", "validate-thm5", "validate-thm6", "front-scatter")
RESULT_COLUMNS = ("delta", "seed", "tau", "correct", "budget_exhausted", "error")
FAILURE_LIMIT = 0.10


class ConfigError(InputError):
    def __init__(self, message, field_name=None, line=None):
        where = ""
        if field_name is not None:
            where += f"field '{field_name}'"
        if line is not None:
            where += f"{' ' if where else ''}(line {line})"
        super().__init__(f"{where}: {message}" if where else message)
        self.field_name = field_name
        self.line = line


@dataclass
class ExperimentConfig:
    mode: str = "run"
    instance: Instance = None
    cone: object = None
    deltas: tuple = (0.1,)
    replications: int = 1
    seed: int = 0
    max_steps: int = DEFAULT_MAX_STEPS
    out: Path = Path("results")
    jobs: int = None            # None: one worker per CPU
    trace: bool = False
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}", "mode")
        if any(not 0 < d < 1 for d in self.deltas) or not self.deltas:
            raise ConfigError("every delta must lie in (0, 1)", "deltas")
        if self.replications < 1:
            raise ConfigError("must be at least 1", "replications")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("must be a 64-bit unsigned integer", "seed")
        if self.max_steps < 1:
            raise ConfigError("must be positive", "max_steps")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("must be positive", "jobs")
        if self.mode != "front-scatter":
            if self.instance is None:
                raise ConfigError("required for this mode", "instance")
            if self.cone is None:
                raise ConfigError("required for this mode", "cone")
            if self.cone.dimension != self.instance.num_objectives:
                raise ConfigError("cone dimension differs from the instance's objectives",
                                  "cone")
        return self


def _line_of(text: str, key: str):
    for n, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return n
    return None


def _load_json_file(path: Path, what: str):
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", what) from exc
    try:
        return json.loads(text), text
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc.msg}", what, exc.lineno) from exc


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file; errors name the field and line."""
    path = Path(path)
    data, text = _load_json_file(path, "config")
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", "config", 1)
    base = path.parent

    def fail(key, msg):
        raise ConfigError(msg, key, _line_of(text, key))

    def sub(key, loader):
        if key not in data:
            return None
        val = data[key]
        try:
            if isinstance(val, str):
                obj, _ = _load_json_file(base / val, key)
            else:
                obj = val
            return loader(obj)
        except ConfigError:
            raise
        except (PrepexError, TypeError, ValueError, KeyError) as exc:
            fail(key, str(exc))

    known = {"mode", "instance", "cone", "deltas", "replications", "seed", "max_steps",
             "out", "jobs", "trace"}
    cfg = ExperimentConfig()
    try:
        cfg.mode = str(data.get("mode", cfg.mode))
        deltas = data.get("deltas", data.get("delta", list(cfg.deltas)))
        cfg.deltas = tuple(float(d) for d in np.atleast_1d(deltas))
        cfg.replications = _as_int(data.get("replications", cfg.replications))
        cfg.seed = _as_int(data.get("seed", cfg.seed))
        cfg.max_steps = _as_int(data.get("max_steps", cfg.max_steps))
        cfg.jobs = _as_int(data["jobs"]) if "jobs" in data else None
        cfg.trace = bool(data.get("trace", False))
    except (TypeError, ValueError) as exc:
        key = next((k for k in ("deltas", "delta", "replications", "seed", "max_steps",
                                "jobs") if k in data and _bad(k, data[k])), None)
        fail(key or "config", str(exc))
    cfg.out = base / data["out"] if "out" in data else cfg.out
    cfg.instance = sub("instance", Instance.from_dict)
    cfg.cone = sub("cone", cone_from_dict)
    cfg.extra = {k: v for k, v in data.items() if k not in known}
    try:
        return cfg.validate()
    except ConfigError as exc:
        key = exc.field_name
        if key == "deltas" and "deltas" not in data and "delta" in data:
            key = "delta"
        raise ConfigError(str(exc).split(": ", 1)[-1], key, _line_of(text, key)) from None


def _as_int(v):
    if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(v)


def _bad(key, value):
    try:
        if key in ("deltas", "delta"):
            [float(d) for d in np.atleast_1d(value)]
        else:
            _as_int(value)
        return False
    except (TypeError, ValueError):
        return True


# ---------------------------------------------------------------------------
# modes


def _replicate(args):
    """Worker: one PreTS run. Returns a results row."""
    instance, cone, delta, seed, max_steps, trace_path = args
    try:
        res = run_prets(Environment(instance, seed), cone, delta, max_steps,
                        trace=trace_path)
        return {"delta": delta, "seed": seed, "tau": res.stopping_time,
                "correct": int(res.correct), "budget_exhausted": int(res.budget_exhausted),
                "error": ""}
    except PrepexError as exc:
        return {"delta": delta, "seed": seed, "tau": "", "correct": "",
                "budget_exhausted": "", "error": f"{type(exc).__name__}: {exc}"}


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))        # preserves submission order
    return [fn(t) for t in tasks]


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _metadata(cfg):
    return {"version": __version__, "mode": cfg.mode, "seed": cfg.seed,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat()}


def _oracle_summary(cfg):
    try:
        sol = characteristic_time(cfg.instance, cfg.cone)
    except PrepexError as exc:
        log.error("characteristic time unavailable: %s", exc)
        return None, {"error": str(exc)}
    d = sol.to_dict()
    if cfg.instance.family.is_gaussian:
        d["gaussian_closed_form_inverse_time"] = gaussian_closed_form_inverse_time(
            cfg.instance, cfg.cone)
    d["pareto_front"] = list(pareto_set(cfg.instance.means, cfg.cone).arm_indices)
    return sol, d


def mode_run(cfg: ExperimentConfig) -> int:
    sol, oracle = _oracle_summary(cfg)
    T = sol.characteristic_time if sol else None
    trace_dir = cfg.out / "traces"
    if cfg.trace:
        trace_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for delta in cfg.deltas:
        for r in range(cfg.replications):
            seed = derive_seed(cfg.seed, r)
            tp = str(trace_dir / f"delta_{delta!r}_rep_{r}.jsonl") if cfg.trace else None
            tasks.append((cfg.instance, cfg.cone, delta, seed, cfg.max_steps, tp))
    rows = _map(_replicate, tasks, cfg.jobs)
    _write_csv(cfg.out / "results.csv", rows, RESULT_COLUMNS)
    per_delta = []
    for delta in cfg.deltas:
        sel = [r for r in rows if r["delta"] == delta]
        ok = [r for r in sel if not r["error"]]
        taus = np.array([r["tau"] for r in ok], dtype=float)
        entry = {"delta": delta, "replications": len(sel), "failures": len(sel) - len(ok),
                 "budget_exhausted": sum(r["budget_exhausted"] for r in ok)}
        if ok:
            mean_tau = float(taus.mean())
            entry.update(mean_tau=mean_tau, median_tau=float(np.median(taus)),
                         error_rate=float(np.mean([1 - r["correct"] for r in ok])),
                         ratio=(mean_tau / (T * math.log(1 / delta)) if T else None))
        per_delta.append(entry)
    summary = {"metadata": _metadata(cfg), "characteristic_time": T, "oracle": oracle,
               "per_delta": per_delta}
    _dump(cfg.out / "summary.json", summary)
    failed = sum(1 for r in rows if r["error"])
    if failed > FAILURE_LIMIT * len(rows):
        log.error("%d of %d replications failed", failed, len(rows))
        return 1
    return 0


def mode_oracle(cfg: ExperimentConfig) -> int:
    sol, oracle = _oracle_summary(cfg)
    _dump(cfg.out / "summary.json", {"metadata": _metadata(cfg),
                                     "characteristic_time": sol.characteristic_time
                                     if sol else None, "oracle": oracle})
    return 0 if sol else 1


def _preference(cfg):
    z = cfg.extra.get("z")
    if z is None:
        z = cfg.cone.generators.sum(axis=0)
    z = np.asarray(z, dtype=float)
    return as_preference(z / np.linalg.norm(z), cfg.cone)


def mode_thm5(cfg: ExperimentConfig) -> int:
    rows = tail_bound_check_thm5(cfg.instance, _preference(cfg),
                                 cfg.extra.get("rho_grid", [10, 15, 20]),
                                 int(cfg.extra.get("t", 100)), cfg.replications,
                                 seed=cfg.seed, jobs=cfg.jobs)
    _write_csv(cfg.out / "thm5.csv", rows, list(rows[0].keys()))
    _dump(cfg.out / "summary.json", {"metadata": _metadata(cfg), "rows": rows})
    return 1 if any(r["verdict"] == "violation" for r in rows) else 0


def mode_thm6(cfg: ExperimentConfig) -> int:
    reports = coverage_check_thm6(cfg.instance, _preference(cfg), list(cfg.deltas),
                                  int(cfg.extra.get("horizon", 1000)), cfg.replications,
                                  seed=cfg.seed, jobs=cfg.jobs)
    _write_csv(cfg.out / "thm6.csv", reports, list(reports[0].keys()))
    _dump(cfg.out / "summary.json", {"metadata": _metadata(cfg), "rows": reports})
    return 1 if any(r["verdict"] == "violation" for r in reports) else 0


def mode_front_scatter(cfg: ExperimentConfig) -> int:
    """Uniform random arms in the unit square, one front CSV per cone."""
    n = int(cfg.extra.get("num_arms", 200))
    angles = cfg.extra.get("angles", [math.pi / 2, math.pi / 3])
    rng = np.random.default_rng(derive_seed(cfg.seed, 0))
    M = rng.random((2, n))
    fronts = {}
    for theta in angles:
        cone = orthant(2) if abs(theta - math.pi / 2) < 1e-12 else angle_cone(theta)
        front = pareto_set(M, cone)
        name = f"front_scatter_theta_{theta:.4f}.csv"
        write_front_csv(cfg.out / name, M, front)
        fronts[name] = list(front.arm_indices)
    _dump(cfg.out / "summary.json", {"metadata": _metadata(cfg), "num_arms": n,
                                     "angles": list(angles), "fronts": fronts})
    return 0


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


RUNNERS = {"run": mode_run, "oracle": mode_oracle, "validate-thm5": mode_thm5,
           "validate-thm6": mode_thm6, "front-scatter": mode_front_scatter}


def run_experiment(cfg: ExperimentConfig) -> int:
    cfg.validate()
    if cfg.jobs is None:
        cfg = replace(cfg, jobs=os.cpu_count() or 1)
    cfg.out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[cfg.mode](cfg)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prepex",
                                description="Preference-cone Pareto front identification "
                                            "experiments.")
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int, help="master seed (u64)")
    p.add_argument("--delta", help="comma-separated confidence levels")
    p.add_argument("--reps", type=int, help="replications per delta")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    p.add_argument("--trace", action="store_true", help="write JSON-lines run traces")
    return p


def _configure_logging():
    level = os.environ.get("PREPEX_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = load_config(args.config)
        elif args.mode == "front-scatter":
            cfg = ExperimentConfig(mode="front-scatter")
        else:
            raise ConfigError("--config is required for this mode", "config")
        updates = {}
        if args.mode:
            updates["mode"] = args.mode
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.delta:
            try:
                updates["deltas"] = tuple(float(x) for x in args.delta.split(","))
            except ValueError:
                raise ConfigError(f"cannot parse {args.delta!r}", "delta") from None
        if args.reps is not None:
            updates["replications"] = args.reps
        if args.out is not None:
            updates["out"] = args.out
        if args.jobs is not None:
            updates["jobs"] = args.jobs
        if args.trace:
            updates["trace"] = True
        cfg = replace(cfg, **updates)
        return run_experiment(cfg)
    except ConfigError as exc:
        print(f"prepex: config error: {exc}", file=sys.stderr)
        return 2
    except PrepexError as exc:
        print(f"prepex: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

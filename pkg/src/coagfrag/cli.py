"""Command-line front end."""
from __future__ import annotations

import argparse
import hashlib
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io as cio
from .dislocation import c_beta_lambda
from .errors import DomainError, GridOverflow, NoConvergence, RateOverflow, StabilityViolation
from .kernels import SampleGrid, verify_coag_hypothesis, verify_frag_hypothesis, verify_holder_hypothesis
from .particles import INEQUALITIES, AuditSummary, InequalityStats, audit_inequalities, random_audit
from .solver import moment_bound_check, solve, truncation_cauchy_check
from .stochastic import (KIND_NAMES, WHO_NAMES, coupling_bound, ensemble, moment_growth_bound,
                         simulate, simulate_coupled)

log = logging.getLogger("coagfrag")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BUDGET = 2
EXIT_CONFIG = 3
EXIT_STABILITY = 4
EXIT_VIOLATION = 5


class _Run:
    """Per-command bookkeeping for outputs and the manifest."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.t0 = time.perf_counter()
        self.cfg = {}
        self.raw_digest = None
        self.inputs = {}
        self.seed = 0
        self.events = {}

    def load(self, required=True):
        if self.args.config is None:
            if required:
                raise cio.ConfigError("--config", "a config file is required")
            self.cfg = {}
        else:
            self.cfg, raw = cio.load_config(self.args.config)
            self.inputs[Path(self.args.config).name] = hashlib.sha256(raw).hexdigest()
            for p in cio.input_files(self.cfg):
                if p.exists():
                    self.inputs[p.name] = cio.sha256_file(p)
                    self.cfg["initial"]["csv"] = str(p.resolve())
        self.seed = cio.resolve_seed(self.args.seed, self.cfg)
        return self.cfg

    def path(self, name):
        p = self.out / name
        self.outputs.append(p)
        return p

    def finish(self):
        echo = cio.public_config(self.cfg)
        if "run" in echo:
            echo = dict(echo)
            echo["run"] = {**echo["run"], "seed": self.seed}
        cio.write_manifest(self.out, self.command, __version__, echo, self.seed, self.inputs,
                           self.outputs, time.perf_counter() - self.t0, self.events)


def _replicas(args, cfg):
    if args.replicas is not None:
        n = args.replicas
        field = "--replicas"
    else:
        n = (cfg.get("run") or {}).get("replicas", 1)
        field = "run.replicas"
    if not isinstance(n, int) or n < 1:
        raise cio.ConfigError(field, "must be an integer >= 1")
    if "run" in cfg:
        cfg["run"]["replicas"] = n
    return n


# ----------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    run = _Run(args, "simulate")
    cfg = run.load()
    K, F = cio.parse_kernels(cfg)
    beta = cio.parse_beta(cfg)
    m0 = cio.parse_state(cfg)
    sim = cio.parse_run(cfg, run.seed)
    reps = _replicas(args, cfg)
    summary = {"command": "simulate", "seed": run.seed, "config": cio.public_config(cfg),
               "initial_state": list(m0.masses), "replicas": reps}
    if reps > 1:
        res = ensemble(m0, K, F, beta, sim, reps)
        cols = list(res.per_replica)
        cio.write_csv(run.path("replicas.csv"), ["replica"] + cols,
                      [np.arange(reps)] + [res.per_replica[c] for c in cols])
        summary["ensemble"] = res.to_json()
        summary["moment_bound"] = moment_growth_bound(m0, F, beta, sim.lam, sim.t_max) \
            if math.isfinite(sim.t_max) else None
        summary["plot_spec"] = cio.plot_spec("replicas.csv", "replica", ["sup_norm_lambda"],
                                             "per-replica supremum of the lambda-norm")
        run.events = {"total": int(res.per_replica["events"].sum())}
        budget = res.statuses.get("budget", 0) > 0
    else:
        tr = simulate(m0, K, F, beta, sim)
        if sim.record_mode == "snapshots":
            s = tr.snapshots()
            cio.write_csv(run.path("snapshots.csv"),
                          ["time", "mass_total", "norm_lambda", "n_particles"],
                          [s["time"], s["mass_total"], s["norm_lambda"], s["n_particles"]])
            data, x = "snapshots.csv", "time"
        elif sim.record_mode == "full":
            cio.write_csv(run.path("trajectory.csv"),
                          ["time", "event_kind", "i", "j_or_atom", "n_particles", "mass_total",
                           "norm_lambda"],
                          [tr.times, [KIND_NAMES[int(k)] for k in tr.kinds], tr.i, tr.j_or_atom,
                           tr.n_particles, tr.mass_total, tr.norm_lambda])
            data, x = "trajectory.csv", "time"
        else:
            data = x = None
        summary.update({
            "status": tr.status, "n_events": tr.n_events, "final_time": tr.final_time,
            "final_state": list(tr.final_state.masses),
            "sup_norm_lambda": tr.sup_norm_lambda,
        })
        if data:
            summary["plot_spec"] = cio.plot_spec(data, x, ["mass_total", "norm_lambda", "n_particles"],
                                                 "trajectory observables")
        run.events = {"total": tr.n_events}
        budget = tr.budget_exceeded
    cio.write_json(run.path("summary.json"), summary)
    run.finish()
    if budget:
        log.warning("event budget exceeded; partial results written")
        return EXIT_BUDGET
    return EXIT_OK


def cmd_couple(args) -> int:
    run = _Run(args, "couple")
    cfg = run.load()
    K, F = cio.parse_kernels(cfg)
    beta = cio.parse_beta(cfg)
    m0 = cio.parse_state(cfg, "masses")
    mt0 = cio.parse_state(cfg, "masses_tilde")
    sim = cio.parse_run(cfg, run.seed)
    reps = _replicas(args, cfg)
    summary = {"command": "couple", "seed": run.seed, "config": cio.public_config(cfg),
               "replicas": reps}
    try:
        x = sim.tau_cap
        if math.isfinite(x) and math.isfinite(sim.t_max):
            b = coupling_bound(m0, mt0, K, F, beta, sim.lam, x, sim.t_max)
            summary["coupling_bound"] = b.__dict__
    except DomainError as exc:
        summary["coupling_bound"] = None
        log.info("no coupling bound: %s", exc)
    if reps > 1:
        res = ensemble(m0, K, F, beta, sim, reps, mt0=mt0)
        cols = list(res.per_replica)
        cio.write_csv(run.path("replicas.csv"), ["replica"] + cols,
                      [np.arange(reps)] + [res.per_replica[c] for c in cols])
        summary["ensemble"] = res.to_json()
        run.events = {"total": int(res.per_replica["events"].sum())}
        budget = res.statuses.get("budget", 0) > 0
    else:
        ct = simulate_coupled(m0, mt0, K, F, beta, sim)
        cio.write_csv(run.path("coupled.csv"),
                      ["time", "event_kind", "i", "j_or_atom", "jumped", "n_particles",
                       "n_particles_tilde", "mass_total", "mass_total_tilde", "norm_lambda",
                       "norm_lambda_tilde", "dist_lambda"],
                      [ct.times, [KIND_NAMES[int(k)] for k in ct.kinds], ct.i, ct.j_or_atom,
                       [WHO_NAMES[int(w)] for w in ct.who], ct.n_particles[0], ct.n_particles[1],
                       ct.mass_total[0], ct.mass_total[1], ct.norm_lambda[0], ct.norm_lambda[1],
                       ct.distance])
        summary.update({"status": ct.status, "n_events": ct.n_events, "final_time": ct.final_time,
                        "final_states": [list(s.masses) for s in ct.final_states],
                        "sup_distance": ct.sup_distance,
                        "plot_spec": cio.plot_spec("coupled.csv", "time", ["dist_lambda"],
                                                   "coupled distance")})
        run.events = {"total": ct.n_events}
        budget = ct.status == "budget"
    cio.write_json(run.path("summary.json"), summary)
    run.finish()
    return EXIT_BUDGET if budget else EXIT_OK


def cmd_solve(args) -> int:
    run = _Run(args, "solve")
    cfg = run.load()
    K, F = cio.parse_kernels(cfg)
    beta = cio.parse_beta(cfg)
    c0 = cio.parse_measure(cfg)
    scfg = cio.parse_solve(cfg)
    grid = cio.parse_grid(cfg)
    if not F.deterministic_track:
        raise cio.ConfigError("kernels.frag", "unbounded fragmentation kernel on the deterministic solver")
    tr = solve(c0, K, F, beta, scfg, grid)
    cio.write_csv(run.path("moments.csv"), ["t", "M0", "M_lambda", "M1", "overflow_mass"],
                  [tr.times, tr.M0, tr.M_lambda, tr.M1, tr.overflow_mass])
    cio.write_measure_csv(run.path("final_measure.csv"), tr.final)
    summary = {"command": "solve", "config": cio.public_config(cfg), "scheme": tr.scheme,
               "grid_points": len(tr.support), "final_M0": tr.M0[-1], "final_M1": tr.M1[-1],
               "final_M_lambda": tr.M_lambda[-1], "overflow_mass": tr.overflow_mass[-1],
               "min_weight": tr.min_weight, "picard_iterations": tr.iterations,
               "picard_gaps": tr.gaps,
               "plot_spec": cio.plot_spec("moments.csv", "t", ["M0", "M_lambda", "M1"], "moments")}
    if F.kappa2 is not None:
        rep = moment_bound_check(tr, scfg.lam, F.kappa2, c_beta_lambda(beta, scfg.lam))
        summary["moment_bound_ok"] = rep.ok
    cio.write_json(run.path("summary.json"), summary)
    run.finish()
    return EXIT_OK


def _fixed_audit(instances) -> AuditSummary:
    stats = {k: InequalityStats() for k in INEQUALITIES}
    for k, inst in enumerate(instances):
        field = f"audit.instances[{k}]"
        if not isinstance(inst, dict):
            raise cio.ConfigError(field, "must be an object")
        try:
            res = audit_inequalities(inst["m"], inst.get("mt", inst["m"]), int(inst["i"]),
                                     int(inst["j"]), inst["theta"], float(inst.get("lambda", 1.0)),
                                     u=int(inst.get("u", 1)), v=inst.get("v"),
                                     n=int(inst.get("n", 1)))
        except (KeyError, TypeError, ValueError, DomainError, IndexError) as exc:
            raise cio.ConfigError(field, str(exc)) from None
        for name, e in res.items():
            st = stats[name]
            st.cases += 1
            st.worst_slack = min(st.worst_slack, e.slack)
            if not e.holds:
                st.violations += 1
                st.examples.append({**inst, "lhs": e.lhs, "rhs": e.rhs})
    return AuditSummary(len(instances), 0, stats)


def cmd_audit(args) -> int:
    run = _Run(args, "audit")
    cfg = run.load(required=False)
    sec = cfg.get("audit") or {}
    if sec.get("instances"):
        rep = _fixed_audit(sec["instances"])
    else:
        cases = args.cases if args.cases is not None else sec.get("cases", 10_000)
        if not isinstance(cases, int) or cases < 1:
            raise cio.ConfigError("--cases", "must be an integer >= 1")
        cfg.setdefault("audit", {})["cases"] = cases
        rep = random_audit(cases, run.seed)
    report = rep.to_dict()
    cio.write_json(run.path("audit_report.json"), report)
    run.finish()
    for name, st in report["inequalities"].items():
        log.info("%-10s violations=%d worst_slack=%.3e", name, st["violations"], st["worst_slack"])
    if not rep.ok:
        log.error("inequality violations: %s", ", ".join(rep.violated))
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_verify_kernels(args) -> int:
    run = _Run(args, "verify-kernels")
    cfg = run.load()
    K, F = cio.parse_kernels(cfg)
    sec = cfg.get("verify") or {}
    grid = cio._wrap("verify", lambda: SampleGrid(eps=float(sec.get("eps", 1e-3)),
                                                  n=int(sec.get("n", 61)),
                                                  extra=tuple(sec.get("extra", ()))))
    out = {"coag": verify_coag_hypothesis(K, grid).to_dict(),
           "frag": verify_frag_hypothesis(F, grid).to_dict()}
    if "holder_a" in sec:
        out["holder"] = verify_holder_hypothesis(K, F, float(sec["holder_a"]), seed=run.seed).to_dict()
    ok = all(v["ok"] for v in out.values())
    out["ok"] = ok
    cio.write_json(run.path("kernel_report.json"), out)
    run.finish()
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_truncation_study(args) -> int:
    run = _Run(args, "truncation-study")
    cfg = run.load()
    K, F = cio.parse_kernels(cfg)
    beta = cio.parse_beta(cfg)
    c0 = cio.parse_measure(cfg)
    scfg = cio.parse_solve(cfg)
    grid = cio.parse_grid(cfg)
    levels = (cfg.get("truncation") or {}).get("levels")
    if not isinstance(levels, list) or not levels:
        raise cio.ConfigError("truncation.levels", "must be a nonempty list")
    tab = cio._wrap("truncation.levels", truncation_cauchy_check, c0, K, F, beta, scfg, grid, levels)
    rows = tab.rows()
    cio.write_csv(run.path("truncation.csv"), ["level_lo", "level_hi", "distance"],
                  [[r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows]])
    cio.write_json(run.path("summary.json"), {
        "command": "truncation-study", "config": cio.public_config(cfg), "levels": levels,
        "distances": tab.distances, "strictly_decreasing": tab.strictly_decreasing(),
        "strictly_decreasing_after_first": tab.strictly_decreasing(1),
        "plot_spec": cio.plot_spec("truncation.csv", "level_hi", ["distance"],
                                   "distance between consecutive truncation levels", logy=True)})
    run.finish()
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "couple": cmd_couple,
    "solve": cmd_solve,
    "audit": cmd_audit,
    "verify-kernels": cmd_verify_kernels,
    "truncation-study": cmd_truncation_study,
}


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coagfrag", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config (or a run manifest to replay)")
        s.add_argument("--seed", type=_u64, help="master seed; overrides the config and $COAGFRAG_SEED")
        s.add_argument("--out", default="coagfrag-out", help="output directory")
        s.add_argument("--replicas", type=int, help="number of Monte Carlo replicas")
        s.add_argument("--quiet", action="store_true", help="only warnings and errors")
        if name == "audit":
            s.add_argument("--cases", type=int, help="number of random instances")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except cio.ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except StabilityViolation as exc:
        log.error("%s", exc)
        return EXIT_STABILITY
    except NoConvergence as exc:
        log.error("%s", exc)
        return EXIT_STABILITY
    except (DomainError, GridOverflow, RateOverflow) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

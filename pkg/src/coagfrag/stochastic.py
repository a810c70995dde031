"""Exact simulation of the finite coalescence / multiple-fragmentation jump
process, and of two processes coupled through shared randomness."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _jit
from .dislocation import DislocationMeasure, c_beta_lambda
from .errors import DomainError, EventBudgetExceeded, RateOverflow
from .kernels import CoagKernel, FragKernel, ineq_constant
from .particles import ParticleState, _coalesce, _fragment, dist_dlambda, norm_lambda

STATUS = {
    _jit.ST_TMAX: "t_max",
    _jit.ST_BUDGET: "budget",
    _jit.ST_ABSORBED: "absorbed",
    _jit.ST_TAU: "tau",
    _jit.ST_OVERFLOW: "overflow",
}
KIND_NAMES = {_jit.KIND_INIT: "init", _jit.KIND_COALESCE: "coalesce", _jit.KIND_FRAGMENT: "fragment"}
WHO_NAMES = {_jit.WHO_BOTH: "both", _jit.WHO_FIRST: "first", _jit.WHO_SECOND: "second"}
RECORD_MODES = ("full", "snapshots", "none")
MAX_RECORDED_EVENTS = 50_000_000


def make_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Counter-based stream for (master seed, replica index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(replica),))))


@dataclass(frozen=True)
class SimConfig:
    t_max: float
    seed: int = 0
    lam: float = 1.0
    tau_cap: float = math.inf
    max_events: int = 1_000_000
    record_mode: str = "full"
    snapshot_dt: float | None = None
    engine: str = "auto"

    def __post_init__(self):
        if not self.t_max > 0:
            raise DomainError("t_max must be > 0")
        if not 0 < self.lam <= 1:
            raise DomainError(f"lambda={self.lam} outside (0, 1]")
        if int(self.max_events) < 1:
            raise DomainError("max_events must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if self.record_mode not in RECORD_MODES:
            raise DomainError(f"record_mode must be one of {RECORD_MODES}")
        if self.record_mode != "none" and int(self.max_events) > MAX_RECORDED_EVENTS:
            raise DomainError("max_events too large for a recorded run; use record_mode='none'")
        if self.snapshot_dt is not None and not self.snapshot_dt > 0:
            raise DomainError("snapshot_dt must be > 0")
        if not self.tau_cap > 0:
            raise DomainError("tau_cap must be > 0")
        if self.engine not in ("auto", "jit", "python"):
            raise DomainError("engine must be auto, jit or python")
        if math.isinf(self.t_max) and self.record_mode == "snapshots" and self.snapshot_dt is None:
            raise DomainError("snapshots of an unbounded horizon need snapshot_dt")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "max_events", int(self.max_events))

    def to_json(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        for k in ("t_max", "tau_cap"):
            if math.isinf(d[k]):
                d[k] = "inf"
        return d


@dataclass
class Event:
    kind: str
    i: int
    j_or_atom: int


@dataclass
class Trajectory:
    """Event log with post-event observables; row 0 is the initial state."""

    times: np.ndarray
    kinds: np.ndarray
    i: np.ndarray
    j_or_atom: np.ndarray
    n_particles: np.ndarray
    mass_total: np.ndarray
    norm_lambda: np.ndarray
    final_state: ParticleState
    final_time: float
    status: str
    n_events: int
    sup_norm_lambda: float
    initial_state: ParticleState
    config: SimConfig

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def budget_exceeded(self) -> bool:
        return self.status == "budget"

    def raise_for_status(self):
        if self.status == "budget":
            raise EventBudgetExceeded(f"stopped after {self.n_events} events at t={self.final_time}")

    def snapshots(self, dt: float | None = None) -> dict:
        """Observables on the fixed grid 0, dt, 2dt, ... <= final_time."""
        dt = dt or self.config.snapshot_dt
        if dt is None:
            horizon = self.final_time if math.isfinite(self.final_time) else self.times[-1]
            dt = horizon / 100 if horizon > 0 else 1.0
        if len(self.times) == 0:
            raise DomainError("trajectory was run without recording")
        end = self.final_time
        k = int(math.floor(end / dt + 1e-9))
        grid = np.arange(k + 1) * dt
        idx = np.searchsorted(self.times, grid, side="right") - 1
        return {
            "time": grid,
            "mass_total": self.mass_total[idx],
            "norm_lambda": self.norm_lambda[idx],
            "n_particles": self.n_particles[idx],
        }

    def events(self) -> list:
        return [Event(KIND_NAMES[int(k)], int(a), int(b))
                for k, a, b in zip(self.kinds[1:], self.i[1:], self.j_or_atom[1:])]


@dataclass
class CoupledTrajectory:
    times: np.ndarray
    kinds: np.ndarray
    i: np.ndarray
    j_or_atom: np.ndarray
    who: np.ndarray
    n_particles: tuple
    mass_total: tuple
    norm_lambda: tuple
    distance: np.ndarray
    final_states: tuple
    final_time: float
    status: str
    n_events: int
    sup_distance: float
    initial_states: tuple
    config: SimConfig

    def process_log(self, which: int) -> dict:
        """Event rows in which process ``which`` (0 or 1) jumped, plus row 0."""
        other = _jit.WHO_SECOND if which == 0 else _jit.WHO_FIRST
        sel = self.who != other
        sel[0] = True
        return {
            "time": self.times[sel],
            "kind": self.kinds[sel],
            "i": self.i[sel],
            "j_or_atom": self.j_or_atom[sel],
            "n_particles": self.n_particles[which][sel],
            "mass_total": self.mass_total[which][sel],
            "norm_lambda": self.norm_lambda[which][sel],
        }


# ------------------------------------------------------------------- rates

def total_rates(m, K: CoagKernel, F: FragKernel, beta: DislocationMeasure) -> tuple:
    """(rho_c, rho_f) = (sum_{i<j} K(m_i, m_j), beta(Theta) sum_i F(m_i))."""
    ms = m.masses if isinstance(m, ParticleState) else tuple(m)
    rows, coag, fv, frag = _rate_table(ms, K, F, beta)
    return coag, frag


def _rate_table(ms, K, F, beta):
    n = len(ms)
    rows = []
    coag = 0.0
    if not K.is_zero:
        for i in range(n):
            acc = 0.0
            for j in range(i + 1, n):
                acc += K(ms[j], ms[i])
            rows.append(acc)
            coag += acc
    else:
        rows = [0.0] * n
    fv = [F(x) for x in ms]
    fsum = 0.0
    for v in fv:
        fsum += v
    return rows, coag, fv, beta.total_mass * fsum


def _select(ms, K, beta, rows, coag, fv, target):
    """Mirror of the compiled selection: returns (kind, i0, j0-or-atom)."""
    n = len(ms)
    if target < coag:
        acc = 0.0
        for i in range(n):
            base = acc
            acc += rows[i]
            if target < acc:
                for j in range(i + 1, n):
                    base += K(ms[j], ms[i])
                    if target < base:
                        return _jit.KIND_COALESCE, i, j
                for j in range(n - 1, i, -1):
                    if K(ms[j], ms[i]) > 0.0:
                        return _jit.KIND_COALESCE, i, j
    btot = beta.total_mass
    target = target - coag
    na = len(beta.atoms)
    acc = 0.0
    last = -1
    for i in range(n):
        ri = fv[i] * btot
        if ri > 0.0:
            last = i
        base = acc
        acc += ri
        if target < acc:
            for a in range(na):
                base += fv[i] * beta.atoms[a].weight
                if target < base:
                    return _jit.KIND_FRAGMENT, i, a
            return _jit.KIND_FRAGMENT, i, na - 1
    return _jit.KIND_FRAGMENT, last, na - 1


def _apply(ms, beta, kind, i0, j0):
    if kind == _jit.KIND_COALESCE:
        return _coalesce(ms, i0, j0)
    return _fragment(ms, i0, beta.atoms[j0].theta.ratios)


def step(state, K: CoagKernel, F: FragKernel, beta: DislocationMeasure,
         rng: np.random.Generator) -> tuple:
    """One jump: (waiting time, Event or None, new state).

    Returns (inf, None, state) in an absorbing state.
    """
    ms = state.masses if isinstance(state, ParticleState) else tuple(state)
    rows, coag, fv, frag = _rate_table(ms, K, F, beta)
    total = coag + frag
    if not math.isfinite(total):
        raise RateOverflow(f"total rate {total} on state of {len(ms)} particles")
    if total == 0.0:
        return math.inf, None, ParticleState(ms)
    dt = -math.log1p(-rng.random()) / total
    kind, i0, j0 = _select(ms, K, beta, rows, coag, fv, rng.random() * total)
    new = _apply(ms, beta, kind, i0, j0)
    ev = Event(KIND_NAMES[kind], i0 + 1, j0 + 1 if kind == _jit.KIND_COALESCE else j0)
    return dt, ev, ParticleState(tuple(new))


# ------------------------------------------------------------------ engines

def _pack_beta(beta: DislocationMeasure):
    na = len(beta.atoms)
    width = max(1, beta.max_length)
    weights = np.array([a.weight for a in beta.atoms], dtype=float)
    thetas = np.zeros((na, width))
    tlens = np.zeros(na, dtype=np.int64)
    for k, a in enumerate(beta.atoms):
        thetas[k, :len(a.theta)] = a.theta.ratios
        tlens[k] = len(a.theta)
    return weights, thetas, tlens


def _use_jit(K, F, cfg):
    if cfg.engine == "python":
        return False
    ok = K.jittable and F.jittable
    if cfg.engine == "jit" and not ok:
        raise DomainError("expression kernels cannot run on the compiled engine")
    if cfg.engine == "auto" and not _jit.HAVE_NUMBA:
        return False
    return ok


def _initial(m0) -> ParticleState:
    return m0 if isinstance(m0, ParticleState) else ParticleState.from_masses(m0)


def _check_status(code):
    if code == _jit.ST_OVERFLOW:
        raise RateOverflow("total jump rate became non-finite")
    return STATUS[code]


def _buffers(cfg, record, ncols, int_cols):
    size = cfg.max_events + 1 if record else 1
    out = []
    for c in range(ncols):
        out.append(np.zeros(size, dtype=np.int64 if c in int_cols else float))
    return out


def simulate(m0, K: CoagKernel, F: FragKernel, beta: DislocationMeasure, cfg: SimConfig,
             rng: np.random.Generator | None = None) -> Trajectory:
    """Run the jump chain until t_max, the tau cap, the event budget or absorption.

    A run stopped by the budget returns its partial trajectory with
    ``status == 'budget'``; call ``raise_for_status`` to turn it into an error.
    """
    m0 = _initial(m0)
    rng = rng if rng is not None else make_rng(cfg.seed)
    record = cfg.record_mode != "none"
    if _use_jit(K, F, cfg):
        return _simulate_jit(m0, K, F, beta, cfg, rng, record)
    return _simulate_python(m0, K, F, beta, cfg, rng, record)


def _simulate_jit(m0, K, F, beta, cfg, rng, record):
    weights, thetas, tlens = _pack_beta(beta)
    ot, okind, oi, oj, on, omass, onorm = _buffers(cfg, record, 7, {1, 2, 3, 4})
    code, m_fin, nev, t, sup = _jit.run_single(
        np.array(m0.masses, dtype=float), K.code, K.vector, K.cap, not K.is_zero,
        F.code, F.vector, weights, thetas, tlens, float(cfg.t_max), float(cfg.lam),
        float(cfg.tau_cap), cfg.max_events, rng, record, ot, okind, oi, oj, on, omass, onorm)
    status = _check_status(code)
    k = nev + 1 if record else 0
    return Trajectory(ot[:k].copy(), okind[:k].copy(), oi[:k].copy(), oj[:k].copy(),
                      on[:k].copy(), omass[:k].copy(), onorm[:k].copy(),
                      ParticleState(tuple(float(x) for x in m_fin)), float(t), status,
                      int(nev), float(sup), m0, cfg)


def _obs(ms, lam):
    arr = np.array(ms, dtype=float)
    return _jit.mass_and_norm(arr, len(ms), lam)


def _simulate_python(m0, K, F, beta, cfg, rng, record):
    ms = list(m0.masses)
    lam = cfg.lam
    cols = {k: [] for k in ("t", "kind", "i", "j", "n", "mass", "norm")}

    def push(t, kind, i, j, ms, mass, norm):
        if record:
            for k, v in zip(cols, (t, kind, i, j, len(ms), mass, norm)):
                cols[k].append(v)

    t = 0.0
    events = 0
    mass, norm = _obs(ms, lam)
    sup = norm
    push(0.0, _jit.KIND_INIT, 0, 0, ms, mass, norm)
    status = _jit.ST_TMAX
    if norm >= cfg.tau_cap:
        status = _jit.ST_TAU
    while status != _jit.ST_TAU:
        rows, coag, fv, frag = _rate_table(ms, K, F, beta)
        total = coag + frag
        if not math.isfinite(total):
            status = _jit.ST_OVERFLOW
            break
        if total == 0.0:
            status = _jit.ST_ABSORBED
            t = cfg.t_max
            break
        if events >= cfg.max_events:
            status = _jit.ST_BUDGET
            break
        dt = -math.log1p(-rng.random()) / total
        if t + dt > cfg.t_max:
            t = cfg.t_max
            status = _jit.ST_TMAX
            break
        t = t + dt
        kind, i0, j0 = _select(ms, K, beta, rows, coag, fv, rng.random() * total)
        ms = _apply(ms, beta, kind, i0, j0)
        events += 1
        mass, norm = _obs(ms, lam)
        sup = max(sup, norm)
        push(t, kind, i0 + 1, j0 + 1 if kind == _jit.KIND_COALESCE else j0, ms, mass, norm)
        if norm >= cfg.tau_cap:
            status = _jit.ST_TAU
    status = _check_status(status)
    ints = {"kind", "i", "j", "n"}
    arr = {k: np.array(v, dtype=np.int64 if k in ints else float) for k, v in cols.items()}
    return Trajectory(arr["t"], arr["kind"], arr["i"], arr["j"], arr["n"], arr["mass"],
                      arr["norm"], ParticleState(tuple(ms)), float(t), status, events,
                      float(sup), m0, cfg)


def simulate_coupled(m0, mt0, K: CoagKernel, F: FragKernel, beta: DislocationMeasure,
                     cfg: SimConfig, rng: np.random.Generator | None = None) -> CoupledTrajectory:
    """Two processes driven by shared marks.

    Each channel (ranked pair, or rank and atom) fires at the larger of the
    two rates; both processes jump when the shared uniform mark falls below
    the smaller rate, otherwise only the process with the larger rate jumps.
    Ranks beyond a process's length carry rate 0.
    """
    m0, mt0 = _initial(m0), _initial(mt0)
    rng = rng if rng is not None else make_rng(cfg.seed)
    record = cfg.record_mode != "none"
    if _use_jit(K, F, cfg):
        weights, thetas, tlens = _pack_beta(beta)
        bufs = _buffers(cfg, record, 12, {1, 2, 3, 4, 5, 6})
        code, a, b, nev, t, sup = _jit.run_coupled(
            np.array(m0.masses, dtype=float), np.array(mt0.masses, dtype=float),
            K.code, K.vector, K.cap, not K.is_zero, F.code, F.vector, weights, thetas, tlens,
            float(cfg.t_max), float(cfg.lam), float(cfg.tau_cap), cfg.max_events, rng, record,
            *bufs)
        status = _check_status(code)
        k = nev + 1 if record else 0
        ot, okind, oi, oj, owho, on1, on2, om1, om2, onr1, onr2, od = (x[:k].copy() for x in bufs)
        return CoupledTrajectory(ot, okind, oi, oj, owho, (on1, on2), (om1, om2), (onr1, onr2),
                                 od, (ParticleState(tuple(map(float, a))),
                                      ParticleState(tuple(map(float, b)))),
                                 float(t), status, int(nev), float(sup), (m0, mt0), cfg)
    return _coupled_python(m0, mt0, K, F, beta, cfg, rng, record)


def _coupled_python(m0, mt0, K, F, beta, cfg, rng, record):
    lam = cfg.lam
    a, b = list(m0.masses), list(mt0.masses)
    atoms = beta.atoms
    na = len(atoms)
    rows = []

    def push(*vals):
        if record:
            rows.append(vals)

    def observe(t, kind, i, j, who):
        m1, n1 = _obs(a, lam)
        m2, n2 = _obs(b, lam)
        d = dist_dlambda(a, b, lam)
        push(t, kind, i, j, who, len(a), len(b), m1, m2, n1, n2, d)
        return n1, n2, d

    t = 0.0
    events = 0
    n1, n2, d = observe(0.0, _jit.KIND_INIT, 0, 0, _jit.WHO_BOTH)
    sup = d
    status = _jit.ST_TAU if (n1 >= cfg.tau_cap or n2 >= cfg.tau_cap) else _jit.ST_TMAX
    while status != _jit.ST_TAU:
        L = max(len(a), len(b))
        chans = []
        if not K.is_zero:
            for i in range(L):
                for j in range(i + 1, L):
                    ra = K(a[j], a[i]) if j < len(a) else 0.0
                    rb = K(b[j], b[i]) if j < len(b) else 0.0
                    chans.append((_jit.KIND_COALESCE, i, j, ra, rb))
        for i in range(L):
            fa = F(a[i]) if i < len(a) else 0.0
            fb = F(b[i]) if i < len(b) else 0.0
            for q in range(na):
                w = atoms[q].weight
                chans.append((_jit.KIND_FRAGMENT, i, q, fa * w, fb * w))
        total = 0.0
        for c in chans:
            total += c[3] if c[3] > c[4] else c[4]
        if not math.isfinite(total):
            status = _jit.ST_OVERFLOW
            break
        if total == 0.0:
            status = _jit.ST_ABSORBED
            t = cfg.t_max
            break
        if events >= cfg.max_events:
            status = _jit.ST_BUDGET
            break
        dt = -math.log1p(-rng.random()) / total
        if t + dt > cfg.t_max:
            t = cfg.t_max
            status = _jit.ST_TMAX
            break
        t = t + dt
        target = rng.random() * total
        acc = 0.0
        sel = last = None
        for c in chans:
            mx = c[3] if c[3] > c[4] else c[4]
            if mx > 0.0:
                last = c
            acc += mx
            if target < acc:
                sel = c
                break
        if sel is None:
            sel = last
        kind, i0, j0, ra, rb = sel
        mx = ra if ra > rb else rb
        mn = rb if ra > rb else ra
        z = rng.random() * mx
        if z < mn:
            who = _jit.WHO_BOTH
        elif ra > rb:
            who = _jit.WHO_FIRST
        else:
            who = _jit.WHO_SECOND
        if who != _jit.WHO_SECOND:
            a = _apply(a, beta, kind, i0, j0)
        if who != _jit.WHO_FIRST:
            b = _apply(b, beta, kind, i0, j0)
        events += 1
        n1, n2, d = observe(t, kind, i0 + 1, j0 + 1 if kind == _jit.KIND_COALESCE else j0, who)
        sup = max(sup, d)
        if n1 >= cfg.tau_cap or n2 >= cfg.tau_cap:
            status = _jit.ST_TAU
    status = _check_status(status)
    cols = list(zip(*rows)) if rows else [()] * 12
    ints = {1, 2, 3, 4, 5, 6}
    arr = [np.array(c, dtype=np.int64 if k in ints else float) for k, c in enumerate(cols)]
    ot, okind, oi, oj, owho, on1, on2, om1, om2, onr1, onr2, od = arr
    return CoupledTrajectory(ot, okind, oi, oj, owho, (on1, on2), (om1, om2), (onr1, onr2), od,
                             (ParticleState(tuple(a)), ParticleState(tuple(b))), float(t),
                             status, events, float(sup), (m0, mt0), cfg)


# ---------------------------------------------------------------- ensembles

Z95 = 1.959963984540054


@dataclass
class Stat:
    mean: float
    var: float
    stderr: float
    ci_low: float
    ci_high: float
    n: int

    @classmethod
    def of(cls, x) -> "Stat":
        x = np.asarray(x, dtype=float)
        n = len(x)
        mean = float(math.fsum(x) / n)
        var = float(math.fsum((x - mean) ** 2) / (n - 1)) if n > 1 else 0.0
        se = math.sqrt(var / n)
        return cls(mean, var, se, mean - Z95 * se, mean + Z95 * se, n)


@dataclass
class EnsembleResult:
    replicas: int
    seed: int
    per_replica: dict
    stats: dict = field(default_factory=dict)
    statuses: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"replicas": self.replicas, "seed": self.seed,
                "statuses": self.statuses,
                "stats": {k: asdict(v) for k, v in self.stats.items()}}


def _replica(args):
    k, m0, mt0, K, F, beta, cfg = args
    rng = make_rng(cfg.seed, k)
    if mt0 is None:
        tr = simulate(m0, K, F, beta, cfg, rng=rng)
        return {"sup_norm_lambda": tr.sup_norm_lambda,
                "final_n_particles": float(len(tr.final_state)),
                "final_mass": tr.final_state.total_mass,
                "final_norm_lambda": norm_lambda(tr.final_state, cfg.lam),
                "events": float(tr.n_events)}, tr.status
    ct = simulate_coupled(m0, mt0, K, F, beta, cfg, rng=rng)
    a, b = ct.final_states
    return {"sup_distance": ct.sup_distance,
            "final_distance": dist_dlambda(a, b, cfg.lam),
            "final_n_particles": float(len(a)),
            "final_n_particles_tilde": float(len(b)),
            "events": float(ct.n_events)}, ct.status


def ensemble(m0, K: CoagKernel, F: FragKernel, beta: DislocationMeasure, cfg: SimConfig,
             replicas: int, mt0=None, workers: int = 1) -> EnsembleResult:
    """Independent replicas; replica k uses stream (cfg.seed, k).

    With ``mt0`` each replica is a coupled pair and distance statistics are
    reported. Results do not depend on ``workers``.
    """
    if replicas < 1:
        raise DomainError("replicas must be >= 1")
    m0 = _initial(m0)
    mt0 = None if mt0 is None else _initial(mt0)
    jobs = [(k, m0, mt0, K, F, beta, cfg) for k in range(replicas)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_replica, jobs, chunksize=max(1, replicas // (8 * workers))))
    else:
        results = [_replica(j) for j in jobs]
    keys = list(results[0][0])
    per = {k: np.array([r[0][k] for r in results]) for k in keys}
    statuses = {}
    for _, s in results:
        statuses[s] = statuses.get(s, 0) + 1
    return EnsembleResult(replicas, cfg.seed, per, {k: Stat.of(v) for k, v in per.items()},
                          dict(sorted(statuses.items())))


# ------------------------------------------------------------ explicit bounds

def moment_growth_bound(m0, F: FragKernel, beta: DislocationMeasure, lam: float, t: float) -> float:
    """|m|_lam exp(Fbar C_beta^lam t) with Fbar = sup of F on (0, |m|_1]."""
    m0 = _initial(m0)
    fbar = F.sup_on(m0.total_mass)
    return norm_lambda(m0, lam) * math.exp(fbar * c_beta_lambda(beta, lam) * t)


@dataclass
class CouplingBound:
    rate: float
    bound: float
    kappa_a: float
    mu_a: float
    fbar: float
    c_beta: float
    c_ineq: float
    a: float
    x: float


def coupling_bound(m0, mt0, K: CoagKernel, F: FragKernel, beta: DislocationMeasure,
                   lam: float, x: float, t: float) -> CouplingBound:
    """Gronwall bound on E sup_{[0, t ^ tau_x]} d_lam for the coupled pair:
    d_lam(m, mt) exp(r t) with
    r = 8 kappa_a x + 8 mu_a C_beta^lam C (|m|_1^alpha v |mt|_1^alpha) + Fbar C_beta^lam,
    a = |m|_1 v |mt|_1 and C the two-sided power-difference constant."""
    m0, mt0 = _initial(m0), _initial(mt0)
    a = max(m0.total_mass, mt0.total_mass)
    ka = K.kappa_a(a)
    mu = F.mu_a(a)
    al = F.holder_alpha
    cb = c_beta_lambda(beta, lam)
    fbar = F.sup_on(a)
    c = ineq_constant(al, lam) if mu > 0 else 0.0
    rate = 8 * ka * x + 8 * mu * cb * c * max(m0.total_mass ** al, mt0.total_mass ** al) + fbar * cb
    bound = dist_dlambda(m0, mt0, lam) * math.exp(rate * t)
    return CouplingBound(rate, bound, ka, mu, fbar, cb, c, a, x)


def jit_warmup():
    """Compile the engines once (cached on disk afterwards)."""
    K = CoagKernel.constant(1.0)
    F = FragKernel.constant(1.0)
    beta = DislocationMeasure.single((0.5, 0.5))
    cfg = SimConfig(t_max=0.1, max_events=10)
    simulate((1.0, 1.0), K, F, beta, cfg)
    simulate_coupled((1.0, 1.0), (1.0,), K, F, beta, cfg)


__all__: Sequence[str] = (
    "SimConfig", "Trajectory", "CoupledTrajectory", "Event", "EnsembleResult", "Stat",
    "make_rng", "total_rates", "step", "simulate", "simulate_coupled", "ensemble",
    "moment_growth_bound", "coupling_bound", "CouplingBound",
)

"""Sectional solver for the coagulation / multiple-fragmentation equation on
atomic measures: explicit Euler, Picard iteration with an integrating
factor, truncation cascade and the primitive-based distance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dislocation import DislocationMeasure, c_beta_lambda, truncate_beta
from .errors import DomainError, GridOverflow, NoConvergence, StabilityViolation
from .kernels import CoagKernel, FragKernel

STABILITY_FACTOR = 0.5


# ----------------------------------------------------------------- measures

@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Point masses with nonnegative weights on a strictly increasing support."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.array(self.support, dtype=float).reshape(-1)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if x.shape != w.shape:
            raise DomainError("support and weights differ in length")
        if np.any(~np.isfinite(x)) or np.any(x <= 0):
            raise DomainError("support points must be positive and finite")
        if np.any(np.diff(x) <= 0):
            raise DomainError("support must be strictly increasing")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise DomainError("weights must be finite and >= 0")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "support", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_dict(cls, d: Mapping[float, float]) -> "AtomicMeasure":
        items = sorted((float(k), float(v)) for k, v in d.items())
        return cls(np.array([k for k, _ in items]), np.array([v for _, v in items]))

    @classmethod
    def empty(cls) -> "AtomicMeasure":
        return cls(np.zeros(0), np.zeros(0))

    def as_dict(self) -> dict:
        return {float(x): float(w) for x, w in zip(self.support, self.weights)}

    def __len__(self):
        return len(self.support)

    def moment(self, lam: float) -> float:
        return moment(self, lam)

    def primitive(self, x: float) -> float:
        return primitive(self, x)

    def restrict(self, lo: float, hi: float) -> "AtomicMeasure":
        """Keep atoms in the closed interval [lo, hi]."""
        keep = (self.support >= lo) & (self.support <= hi)
        return AtomicMeasure(self.support[keep], self.weights[keep])


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    support: np.ndarray
    weights: np.ndarray
    overflow_mass_rate: float = 0.0
    overflow_number_rate: float = 0.0

    def as_dict(self, drop_zero: bool = True) -> dict:
        return {float(x): float(w) for x, w in zip(self.support, self.weights)
                if w != 0 or not drop_zero}

    def moment(self, lam: float) -> float:
        return float(np.dot(self.weights, self.support ** lam))


def moment(c: AtomicMeasure, lam: float) -> float:
    """sum_g w_g x_g^lam."""
    if len(c.support) == 0:
        return 0.0
    return float(np.dot(c.weights, c.support ** lam))


def primitive(c: AtomicMeasure, x: float) -> float:
    """Total weight strictly above x."""
    return float(c.weights[c.support > x].sum())


def pairing(phi: Callable[[float], float], c: AtomicMeasure) -> float:
    """<phi, c> = sum_g phi(x_g) w_g."""
    return math.fsum(float(phi(x)) * w for x, w in zip(c.support, c.weights))


def uniqueness_distance(c: AtomicMeasure, d: AtomicMeasure, lam: float) -> float:
    """int_0^inf x^(lam-1) |F^c(x) - F^d(x)| dx in closed form, where F^c is
    the weight strictly above x. Both primitives are step functions with
    jumps at the support points."""
    if not 0 < lam <= 1:
        raise DomainError("lambda must lie in (0, 1]")
    b = np.union1d(c.support, d.support)
    if len(b) == 0:
        return 0.0

    def prim(m):
        cum = np.concatenate([[0.0], np.cumsum(m.weights)])
        idx = np.searchsorted(m.support, b, side="right")
        return m.weights.sum() - cum[idx]

    # E on [0, b_0) is the difference of total weights; on [b_k, b_{k+1}) it
    # is the difference of primitives at b_k; zero beyond the last point.
    e = np.concatenate([[c.weights.sum() - d.weights.sum()], prim(c) - prim(d)])[:-1]
    bl = b ** lam
    seg = np.diff(np.concatenate([[0.0], bl]))
    return float(np.abs(e) @ seg / lam)


def total_variation(w: np.ndarray, v: np.ndarray) -> float:
    return float(np.abs(np.asarray(w) - np.asarray(v)).sum())


# --------------------------------------------------------------------- grid

@dataclass(frozen=True)
class GridPolicy:
    """Where off-grid masses are placed.

    ``geometric``: points x_min * ratio^k up to x_max.
    ``fixed``: the initial support closed under pairwise sums up to ``cap``.
    ``overflow`` is "bucket" (mass beyond the largest point is removed and
    accounted) or "error".
    """

    kind: str = "geometric"
    ratio: float = 2 ** 0.25
    x_min: float = 2.0 ** -20
    x_max: float = 2.0 ** 10
    cap: float | None = None
    max_points: int = 2048
    overflow: str = "bucket"

    def __post_init__(self):
        if self.kind not in ("geometric", "fixed"):
            raise DomainError("grid kind must be 'geometric' or 'fixed'")
        if self.overflow not in ("bucket", "error"):
            raise DomainError("overflow policy must be 'bucket' or 'error'")
        if self.kind == "geometric":
            if not self.ratio > 1:
                raise DomainError("geometric ratio must be > 1")
            if not 0 < self.x_min < self.x_max:
                raise DomainError("need 0 < x_min < x_max")
        if self.cap is not None and not self.cap > 0:
            raise DomainError("cap must be positive")

    def build(self, c0: AtomicMeasure | None = None) -> np.ndarray:
        if self.kind == "geometric":
            n = int(math.floor(math.log(self.x_max / self.x_min) / math.log(self.ratio) + 1e-9))
            pts = self.x_min * self.ratio ** np.arange(n + 1)
            if n + 1 > self.max_points:
                raise DomainError(f"geometric grid has {n + 1} points > max_points")
            return pts
        if c0 is None or len(c0) == 0:
            raise DomainError("fixed-support grid needs a nonempty initial measure")
        cap = self.cap if self.cap is not None else 64 * float(c0.support[-1])
        pts = {float(x) for x in c0.support if x <= cap}
        frontier = set(pts)
        while frontier:
            new = set()
            base = sorted(pts)
            for a in frontier:
                for b in base:
                    s = a + b
                    if s <= cap and s not in pts:
                        new.add(s)
            pts |= new
            frontier = new
            if len(pts) > self.max_points:
                raise DomainError("fixed-support closure exceeds max_points; use a geometric grid")
        return np.array(sorted(pts))

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _alloc(points: np.ndarray, z: np.ndarray):
    """Two-point allocation of masses z: (lo, hi, fa, fb, over).

    Inside the grid the split fa, fb = (x_hi - z, z - x_lo) / (x_hi - x_lo)
    keeps both number and mass. Below the first point everything goes to it
    with factor z / x_0 (mass kept). Above the last point ``over`` is set.
    """
    z = np.asarray(z, dtype=float)
    G = len(points)
    k = np.searchsorted(points, z, side="right") - 1
    over = z > points[-1]
    under = k < 0
    kk = np.clip(k, 0, G - 1)
    hi = np.minimum(kk + 1, G - 1)
    xl = points[kk]
    xh = points[hi]
    span = np.where(hi > kk, xh - xl, 1.0)
    fb = np.where(hi > kk, (z - xl) / span, 0.0)
    fa = np.where(hi > kk, (xh - z) / span, 1.0)
    fa = np.where(under, z / points[0], fa)
    fb = np.where(under, 0.0, fb)
    fa = np.where(over, 0.0, fa)
    fb = np.where(over, 0.0, fb)
    return kk, hi, fa, fb, over


def rebin(c: AtomicMeasure, points: np.ndarray) -> np.ndarray:
    """Weights of c placed on ``points``; mass beyond the grid is an error."""
    points = np.asarray(points, dtype=float)
    if len(c) == 0:
        return np.zeros(len(points))
    lo, hi, fa, fb, over = _alloc(points, c.support)
    if np.any(over & (c.weights > 0)):
        raise GridOverflow("initial measure extends beyond the grid")
    G = len(points)
    return (np.bincount(lo, c.weights * fa, minlength=G)
            + np.bincount(hi, c.weights * fb, minlength=G))


class _Operator:
    """Precomputed kernel values and allocation maps on a fixed grid."""

    def __init__(self, points, K: CoagKernel, F: FragKernel, beta: DislocationMeasure,
                 overflow: str = "bucket"):
        if not F.deterministic_track:
            raise DomainError("the deterministic solver needs a bounded fragmentation kernel")
        self.points = np.asarray(points, dtype=float)
        self.G = G = len(self.points)
        self.overflow = overflow
        self.has_coag = not K.is_zero
        self.Kmat = K.matrix(self.points) if self.has_coag else np.zeros((G, G))
        self.Fv = F.values(self.points)
        self.btot = beta.total_mass

        z = (self.points[:, None] + self.points[None, :]).ravel()
        lo, hi, fa, fb, over = _alloc(self.points, z)
        self.c_lo, self.c_hi, self.c_fa, self.c_fb = lo, hi, fa, fb
        self.c_over = over
        self.c_z = z

        src, coef, flo, fhi, ffa, ffb = [], [], [], [], [], []
        g = np.arange(G)
        for atom in beta.atoms:
            for t in atom.theta.ratios:
                zz = t * self.points
                l, h, a, b, o = _alloc(self.points, zz)
                src.append(g)
                coef.append(np.full(G, atom.weight))
                flo.append(l)
                fhi.append(h)
                ffa.append(a)
                ffb.append(b)
        cat = (lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dtype=dt))
        self.f_src = cat(src, np.int64)
        self.f_w = cat(coef, float)
        self.f_lo = cat(flo, np.int64)
        self.f_hi = cat(fhi, np.int64)
        self.f_fa = cat(ffa, float)
        self.f_fb = cat(ffb, float)

    def loss_rate(self, nu: np.ndarray) -> np.ndarray:
        """Per-unit removal rate sum_h K(x_g, x_h) nu_h + F(x_g) beta(Theta)."""
        return nu @ self.Kmat + self.Fv * self.btot

    def gain(self, mu: np.ndarray, nu: np.ndarray):
        """Gain terms linear in mu with nu frozen; also overflow mass/number rates."""
        G = self.G
        out = np.zeros(G)
        om = on = 0.0
        if self.has_coag:
            coef = (0.5 * self.Kmat * np.outer(mu, nu)).ravel()
            out += np.bincount(self.c_lo, coef * self.c_fa, minlength=G)
            out += np.bincount(self.c_hi, coef * self.c_fb, minlength=G)
            if self.c_over.any():
                oc = coef[self.c_over]
                om = float(oc @ self.c_z[self.c_over])
                on = float(oc.sum())
        if len(self.f_src):
            r = self.Fv[self.f_src] * self.f_w * mu[self.f_src]
            out += np.bincount(self.f_lo, r * self.f_fa, minlength=G)
            out += np.bincount(self.f_hi, r * self.f_fb, minlength=G)
        if om > 0 and self.overflow == "error":
            raise GridOverflow("coagulation flux leaves the grid")
        return out, om, on

    def derivative(self, w: np.ndarray):
        g, om, on = self.gain(w, w)
        return g - w * self.loss_rate(w), om, on


@dataclass(frozen=True, eq=False)
class _Points:
    points: np.ndarray
    overflow: str


def _points(grid, c0):
    if isinstance(grid, GridPolicy):
        return grid.build(c0), grid.overflow
    if isinstance(grid, _Points):
        return grid.points, grid.overflow
    pts = np.asarray(grid, dtype=float)
    if pts.ndim != 1 or len(pts) == 0 or np.any(np.diff(pts) <= 0) or pts[0] <= 0:
        raise DomainError("grid points must be positive and strictly increasing")
    return pts, "bucket"


def apply_generator(c: AtomicMeasure, K: CoagKernel, F: FragKernel, beta: DislocationMeasure,
                    grid) -> SignedMeasure:
    """Time derivative of c under the equation, as a signed measure on the grid."""
    pts, overflow = _points(grid, c)
    op = _Operator(pts, K, F, beta, overflow)
    w = rebin(c, pts)
    dw, om, on = op.derivative(w)
    return SignedMeasure(pts, dw, om, on)


# ------------------------------------------------------------------ solving

@dataclass(frozen=True)
class SolveConfig:
    dt: float
    t_max: float
    lam: float = 1.0
    scheme: str = "euler"
    picard_tol: float = 1e-10
    picard_max_iters: int = 60
    snapshot_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt must be > 0")
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise DomainError("t_max must be positive and finite")
        if not 0 < self.lam <= 1:
            raise DomainError(f"lambda={self.lam} outside (0, 1]")
        if self.scheme not in ("euler", "picard"):
            raise DomainError("scheme must be 'euler' or 'picard'")
        if not self.picard_tol > 0:
            raise DomainError("picard_tol must be > 0")
        if int(self.picard_max_iters) < 1 or int(self.snapshot_every) < 1:
            raise DomainError("picard_max_iters and snapshot_every must be >= 1")

    def steps(self):
        n = max(1, int(math.ceil(self.t_max / self.dt - 1e-9)))
        return [min(self.dt, self.t_max - k * self.dt) for k in range(n)]

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["lambda"] = d.pop("lam")
        return d


@dataclass
class MeasureTrajectory:
    support: np.ndarray
    times: np.ndarray
    weights: np.ndarray
    overflow_mass: np.ndarray
    overflow_number: np.ndarray
    scheme: str
    lam: float
    iterations: int = 0
    gaps: list = field(default_factory=list)
    min_weight: float = 0.0

    def moments(self, lam: float) -> np.ndarray:
        return self.weights @ self.support ** lam

    @property
    def M0(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    @property
    def M1(self) -> np.ndarray:
        return self.weights @ self.support

    @property
    def M_lambda(self) -> np.ndarray:
        return self.moments(self.lam)

    def at(self, k: int) -> AtomicMeasure:
        """Snapshot k with empty grid cells dropped."""
        w = self.weights[k]
        keep = w > 0
        return AtomicMeasure(self.support[keep], w[keep])

    @property
    def final(self) -> AtomicMeasure:
        return self.at(len(self.times) - 1)


def _snap_index(n_steps, every):
    idx = list(range(0, n_steps + 1, every))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return idx


def solve_euler(c0: AtomicMeasure, K: CoagKernel, F: FragKernel, beta: DislocationMeasure,
                cfg: SolveConfig, grid) -> MeasureTrajectory:
    """Forward Euler with the positivity guard dt * max removal rate <= 1/2."""
    pts, overflow = _points(grid, c0)
    op = _Operator(pts, K, F, beta, overflow)
    w = rebin(c0, pts)
    steps = cfg.steps()
    keep = set(_snap_index(len(steps), cfg.snapshot_every))
    times, snaps, ovm, ovn = [0.0], [w.copy()], [0.0], [0.0]
    t = 0.0
    om_tot = on_tot = 0.0
    wmin = float(w.min()) if len(w) else 0.0
    for k, h in enumerate(steps, start=1):
        loss = op.loss_rate(w)
        peak = float(loss.max()) if len(loss) else 0.0
        if h * peak > STABILITY_FACTOR:
            sugg = STABILITY_FACTOR / peak
            raise StabilityViolation(
                f"dt={h} exceeds the stability limit at t={t}; use dt <= {sugg:.6g}",
                suggested_dt=sugg)
        g, om, on = op.gain(w, w)
        w = w + h * (g - w * loss)
        om_tot += h * om
        on_tot += h * on
        t = k * cfg.dt if k < len(steps) else cfg.t_max
        wmin = min(wmin, float(w.min()))
        if k in keep:
            times.append(t)
            snaps.append(w.copy())
            ovm.append(om_tot)
            ovn.append(on_tot)
    return MeasureTrajectory(pts, np.array(times), np.array(snaps), np.array(ovm), np.array(ovn),
                             "euler", cfg.lam, min_weight=wmin)


def solve_picard(c0: AtomicMeasure, K: CoagKernel, F: FragKernel, beta: DislocationMeasure,
                 cfg: SolveConfig, grid) -> MeasureTrajectory:
    """Fixed point of mu -> solution of the linear equation with nu = mu frozen.

    The inner step is mu_{k+1} = (mu_k + h gain(mu_k, nu_k)) * exp(-int loss),
    the exponent by the trapezoid rule. Every factor is nonnegative, so all
    iterates stay nonnegative.
    """
    pts, overflow = _points(grid, c0)
    op = _Operator(pts, K, F, beta, overflow)
    w0 = rebin(c0, pts)
    steps = cfg.steps()
    N = len(steps)
    h = np.array(steps)
    nu = np.tile(w0, (N + 1, 1))
    gaps = []
    wmin = float(w0.min()) if len(w0) else 0.0
    for it in range(1, int(cfg.picard_max_iters) + 1):
        L = nu @ op.Kmat + op.Fv * op.btot
        mu = np.empty_like(nu)
        mu[0] = w0
        ovm = np.zeros(N + 1)
        ovn = np.zeros(N + 1)
        for k in range(N):
            g, om, on = op.gain(mu[k], nu[k])
            mu[k + 1] = (mu[k] + h[k] * g) * np.exp(-0.5 * h[k] * (L[k] + L[k + 1]))
            ovm[k + 1] = ovm[k] + h[k] * om
            ovn[k + 1] = ovn[k] + h[k] * on
        wmin = min(wmin, float(mu.min()))
        gap = float(np.abs(mu - nu).sum(axis=1).max())
        gaps.append(gap)
        nu = mu
        if gap < cfg.picard_tol:
            break
    else:
        raise NoConvergence(f"Picard iteration did not reach tol {cfg.picard_tol}; last gap {gaps[-1]:.3e}",
                            last_gap=gaps[-1])
    idx = _snap_index(N, cfg.snapshot_every)
    times = np.concatenate([[0.0], np.cumsum(h)])
    times[-1] = cfg.t_max
    return MeasureTrajectory(pts, times[idx], nu[idx], ovm[idx], ovn[idx], "picard", cfg.lam,
                             iterations=it, gaps=gaps, min_weight=wmin)


def solve(c0, K, F, beta, cfg: SolveConfig, grid) -> MeasureTrajectory:
    fn = solve_picard if cfg.scheme == "picard" else solve_euler
    return fn(c0, K, F, beta, cfg, grid)


def sup_tv(a: MeasureTrajectory, b: MeasureTrajectory) -> float:
    """sup over common snapshot times of sum_g |w_g - w'_g| (same grid)."""
    if a.weights.shape != b.weights.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise DomainError("trajectories are not on the same grid and times")
    return float(np.abs(a.weights - b.weights).sum(axis=1).max())


# ------------------------------------------------------- truncation, checks

def truncate_kernel(K: CoagKernel, n: float) -> CoagKernel:
    """K ^ n."""
    return K.truncated(n)


@dataclass
class TruncationTable:
    levels: list
    distances: list
    trajectories: dict = field(default_factory=dict, repr=False)

    def rows(self) -> list:
        return [(a, b, d) for a, b, d in zip(self.levels, self.levels[1:], self.distances)]

    def strictly_decreasing(self, start: int = 0) -> bool:
        d = self.distances[start:]
        return all(x > y for x, y in zip(d, d[1:]))


def truncation_cauchy_check(c0: AtomicMeasure, K: CoagKernel, F: FragKernel,
                            beta: DislocationMeasure, cfg: SolveConfig, grid,
                            levels: Sequence[float], keep: bool = False) -> TruncationTable:
    """Solve with (K ^ n, beta_n, c0 restricted to [1/n, n]) for each level and
    return the distance between consecutive levels at t_max. All levels share
    the grid built from the unrestricted c0."""
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise DomainError("levels must be increasing")
    pts, overflow = _points(grid, c0)
    pts_grid = _Points(pts, overflow)
    finals = []
    trajs = {}
    for n in levels:
        cn = c0.restrict(1.0 / n, n)
        tr = solve(cn, truncate_kernel(K, n), F, truncate_beta(beta, int(math.ceil(n))), cfg, pts_grid)
        finals.append(tr.final)
        if keep:
            trajs[n] = tr
    dists = [uniqueness_distance(a, b, cfg.lam) for a, b in zip(finals, finals[1:])]
    return TruncationTable(levels, dists, trajs)


@dataclass
class MomentBoundReport:
    times: np.ndarray
    values: np.ndarray
    bounds: np.ndarray
    holds: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(self.holds.all())


def moment_bound_check(traj: MeasureTrajectory, lam: float, kappa2: float, c_beta: float,
                       rtol: float = 1e-6) -> MomentBoundReport:
    """M_lam(c_t) <= M_lam(c_0) exp(kappa2 C_beta^lam t) at every snapshot."""
    vals = traj.moments(lam)
    bounds = vals[0] * np.exp(kappa2 * c_beta * traj.times)
    holds = vals <= bounds * (1 + rtol)
    return MomentBoundReport(traj.times, vals, bounds, holds)


def gronwall_constants(K: CoagKernel, F: FragKernel, beta: DislocationMeasure, lam: float) -> tuple:
    """(C1, C2) in d(t) <= d(0) exp((C1 sup M_lam(c+d) + C2) t) for the
    primitive-based distance d, assembled from kappa0..kappa3 and C_beta^lam."""
    if None in (K.kappa0, K.kappa1, F.kappa2, F.kappa3):
        raise DomainError("kappa0..kappa3 must be declared")
    cb = c_beta_lambda(beta, lam)
    c1 = 2 ** (lam - 1) * K.kappa0 + K.kappa1 / lam
    c2 = cb * (F.kappa2 + 2 * F.kappa3 / lam)
    return c1, c2

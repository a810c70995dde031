"""Ranked finite mass configurations, jump maps, norms and distances.

Ranks are 1-based throughout the public API: rank 1 is the largest mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .dislocation import RatioSequence, psi_n, validate_theta
from .errors import DomainError, IndexOrder, IndexOutOfRange
from .kernels import ineq_constant


@dataclass(frozen=True)
class ParticleState:
    """Non-increasing tuple of positive masses; implicitly padded with zeros."""

    masses: tuple = ()

    def __post_init__(self):
        ms = tuple(float(x) for x in self.masses)
        for x in ms:
            if not (x > 0 and math.isfinite(x)):
                raise DomainError(f"masses must be positive and finite, got {x}")
        for a, b in zip(ms, ms[1:]):
            if b > a:
                raise DomainError("masses must be sorted non-increasing")
        object.__setattr__(self, "masses", ms)

    @classmethod
    def from_masses(cls, masses: Iterable[float]) -> "ParticleState":
        """Sort arbitrary positive masses into ranked order."""
        return cls(tuple(sorted((float(x) for x in masses), reverse=True)))

    def __len__(self):
        return len(self.masses)

    def __iter__(self):
        return iter(self.masses)

    def __getitem__(self, k):
        return self.masses[k]

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses)

    def to_json(self) -> list:
        return list(self.masses)


def _masses(m) -> Sequence[float]:
    return m.masses if isinstance(m, ParticleState) else tuple(m)


def _merge_desc(old, new):
    """Stable merge of two descending lists; ties keep existing entries first."""
    out = []
    a = b = 0
    while a < len(old) and b < len(new):
        if old[a] >= new[b]:
            out.append(old[a])
            a += 1
        else:
            out.append(new[b])
            b += 1
    out.extend(old[a:])
    out.extend(new[b:])
    return out


def _coalesce(ms, i0, j0):
    s = ms[i0] + ms[j0]
    rest = [x for k, x in enumerate(ms) if k != i0 and k != j0]
    return _merge_desc(rest, [s])


def _fragment(ms, i0, ratios):
    x = ms[i0]
    pieces = [t * x for t in ratios]
    pieces = [p for p in pieces if p > 0.0]
    rest = [y for k, y in enumerate(ms) if k != i0]
    return _merge_desc(rest, pieces)


def coalesce(m: ParticleState, i: int, j: int) -> ParticleState:
    """Merge ranks i < j into one particle of mass m_i + m_j."""
    ms = _masses(m)
    if i >= j:
        raise IndexOrder(f"need i < j, got i={i}, j={j}")
    if i < 1 or j > len(ms):
        raise IndexOutOfRange(f"ranks ({i}, {j}) outside 1..{len(ms)}")
    return ParticleState(tuple(_coalesce(ms, i - 1, j - 1)))


def fragment(m: ParticleState, i: int, theta) -> ParticleState:
    """Replace rank i by the pieces theta_k * m_i."""
    ms = _masses(m)
    if i < 1 or i > len(ms):
        raise IndexOutOfRange(f"rank {i} outside 1..{len(ms)}")
    th = validate_theta(theta)
    return ParticleState(tuple(_fragment(ms, i - 1, th.ratios)))


def norm_lambda(m, lam: float) -> float:
    s = 0.0
    for x in _masses(m):
        s += x ** lam
    return s


def norm_one(m) -> float:
    return math.fsum(_masses(m))


def dist_d(m, mt) -> float:
    """sum_k 2^-k |m_k - mt_k| with zero padding."""
    a, b = _masses(m), _masses(mt)
    n = max(len(a), len(b))
    s = 0.0
    w = 1.0
    for k in range(n):
        w *= 0.5
        x = a[k] if k < len(a) else 0.0
        y = b[k] if k < len(b) else 0.0
        s += w * abs(x - y)
    return s


def dist_dlambda(m, mt, lam: float) -> float:
    """sum_k |m_k^lam - mt_k^lam| with zero padding."""
    a, b = _masses(m), _masses(mt)
    n = max(len(a), len(b))
    s = 0.0
    for k in range(n):
        x = a[k] ** lam if k < len(a) else 0.0
        y = b[k] ** lam if k < len(b) else 0.0
        s += abs(x - y)
    return s


@lru_cache(maxsize=64)
def d_dlambda_constant(lam: float) -> float:
    """Constant C with d <= C (|m|_1^(1-lam) v |mt|_1^(1-lam)) d_lam."""
    if lam == 1.0:
        return 1.0
    return ineq_constant(1.0 - lam, lam)


# -------------------------------------------------------------------- audit

INEQUALITIES = ("C1_01", "F1_01", "C2_01", "F2_01", "C3_01", "F3_01", "dln",
                "d1c", "d2c", "d1f", "d2f", "d3f", "d_dlambda")
AUDIT_RTOL = 1e-12


@dataclass
class AuditEntry:
    lhs: float
    rhs: float
    holds: bool
    slack: float
    """(rhs - lhs) / scale; negative beyond tolerance means a violation."""


def _entry(lhs, rhs, scale, equality=False, rtol=AUDIT_RTOL):
    scale = max(abs(lhs), abs(rhs), scale, 1e-300)
    tol = rtol * scale
    if equality:
        holds = abs(lhs - rhs) <= tol
        slack = -abs(lhs - rhs) / scale
    else:
        holds = lhs <= rhs + tol
        slack = (rhs - lhs) / scale
    return AuditEntry(float(lhs), float(rhs), bool(holds), float(slack))


def audit_inequalities(m, mt, i: int, j: int, theta, lam: float,
                       u: int = 1, v: int | None = None, n: int = 1,
                       include_sum: bool = False, diagnostics: bool = False,
                       rtol: float = AUDIT_RTOL) -> dict:
    """Evaluate both sides of the jump-map estimates for one instance.

    Returns name -> AuditEntry. The comparison tolerance is relative to the
    magnitude of the instance (norms of the states involved), since several
    sides are differences of nearly equal sums.
    ``u < v`` select the two projections compared in ``dln``; ``n`` is the
    projection level in ``d3f``.

    With ``diagnostics`` two weaker companion bounds are added:
    ``d1c_unweighted`` (d(c_ij(m), m) <= 3/2 m_j) and ``d2f_l1``
    (d(f(m), f(mt)) <= sum_k |m_k - mt_k|). See the README for why.
    """
    a, b = _masses(m), _masses(mt)
    if not 0 < lam <= 1:
        raise DomainError("lambda must lie in (0, 1]")
    if i >= j:
        raise IndexOrder(f"need i < j, got i={i}, j={j}")
    if i < 1 or j > min(len(a), len(b)):
        raise IndexOutOfRange(f"ranks ({i}, {j}) outside both states")
    th = validate_theta(theta)
    if v is None:
        v = max(len(th), u + 1)
    if not 1 <= u < v:
        raise IndexOrder("need 1 <= u < v")
    if n < 1:
        raise DomainError("n must be >= 1")
    i0, j0 = i - 1, j - 1
    r = th.ratios

    cm, cmt = _coalesce(a, i0, j0), _coalesce(b, i0, j0)
    fm, fmt = _fragment(a, i0, r), _fragment(b, i0, r)
    nm, nmt = norm_lambda(a, lam), norm_lambda(b, lam)
    n1m, n1mt = norm_one(a), norm_one(b)
    sl = nm + nmt
    s1 = n1m + n1mt
    mi_l, mti_l, mj_l = a[i0] ** lam, b[i0] ** lam, a[j0] ** lam
    sum_all = th.power_sum(lam)
    sum_tail = th.power_sum(lam, start=1)
    dl = dist_dlambda(a, b, lam)
    dd = dist_d(a, b)
    w_i = 2.0 ** -i

    out = {}
    out["C1_01"] = _entry(norm_lambda(cm, lam), nm, nm, rtol=rtol)
    out["F1_01"] = _entry(norm_lambda(fm, lam), nm + mi_l * (sum_all - 1.0), nm,
                          equality=True, rtol=rtol)
    out["C2_01"] = _entry(dist_dlambda(cm, a, lam), 2.0 * mj_l, nm, rtol=rtol)
    out["F2_01"] = _entry(dist_dlambda(fm, a, lam),
                          mi_l * (1.0 - th.first ** lam) + mi_l * sum_tail, nm, rtol=rtol)
    out["C3_01"] = _entry(dist_dlambda(cm, cmt, lam), dl, sl, rtol=rtol)
    out["F3_01"] = _entry(dist_dlambda(fm, fmt, lam),
                          dl + abs(mi_l - mti_l) * (sum_all - 1.0), sl, rtol=rtol)
    fu = _fragment(a, i0, psi_n(th, u).ratios)
    fv = _fragment(a, i0, psi_n(th, v).ratios)
    out["dln"] = _entry(dist_dlambda(fu, fv, lam),
                        RatioSequence(r[u:v]).power_sum(lam) * mi_l, nm, rtol=rtol)

    out["d1c"] = _entry(dist_d(cm, a), 1.5 * w_i * a[j0], n1m, rtol=rtol)
    out["d2c"] = _entry(dist_d(cm, cmt), (2.0 ** i + 2.0 ** j) * dd, s1, rtol=rtol)
    out["d1f"] = _entry(dist_d(fm, a), 2.0 * (1.0 - th.first) * w_i * a[i0], n1m, rtol=rtol)
    out["d2f"] = _entry(dist_d(fm, fmt), dd, s1, rtol=rtol)
    fn = _fragment(a, i0, psi_n(th, n).ratios)
    out["d3f"] = _entry(dist_d(fm, fn), w_i * a[i0] * math.fsum(r[n:]), n1m, rtol=rtol)
    C = d_dlambda_constant(float(lam))
    out["d_dlambda"] = _entry(dd, C * max(n1m ** (1 - lam), n1mt ** (1 - lam)) * dl, s1, rtol=rtol)
    if include_sum:
        tot = 0.0
        for k in range(len(a)):
            for l in range(k + 1, len(a)):
                tot += dist_d(_coalesce(a, k, l), a)
        out["d1c_sum"] = _entry(tot, 1.5 * n1m, n1m, rtol=rtol)
    if diagnostics:
        out["d1c_unweighted"] = _entry(dist_d(cm, a), 1.5 * a[j0], n1m, rtol=rtol)
        l1 = 0.0
        for k in range(max(len(a), len(b))):
            l1 += abs((a[k] if k < len(a) else 0.0) - (b[k] if k < len(b) else 0.0))
        out["d2f_l1"] = _entry(dist_d(fm, fmt), l1, s1, rtol=rtol)
    return out


@dataclass
class InequalityStats:
    cases: int = 0
    violations: int = 0
    worst_slack: float = math.inf
    examples: list = field(default_factory=list)


@dataclass
class AuditSummary:
    cases: int
    seed: int
    stats: dict
    diagnostics: dict = field(default_factory=dict)

    @property
    def violated(self) -> list:
        return [k for k, s in self.stats.items() if s.violations]

    @property
    def ok(self) -> bool:
        return not self.violated

    def to_dict(self) -> dict:
        return {
            "cases": self.cases,
            "seed": self.seed,
            "ok": self.ok,
            "violated": self.violated,
            "inequalities": {
                k: {"cases": s.cases, "violations": s.violations,
                    "worst_slack": s.worst_slack, "examples": s.examples}
                for k, s in self.stats.items()
            },
            "diagnostics": {
                k: {"cases": s.cases, "violations": s.violations, "worst_slack": s.worst_slack}
                for k, s in self.diagnostics.items()
            },
        }


def random_instance(rng: np.random.Generator, lambdas=(0.3, 0.5, 1.0), max_len: int = 20) -> dict:
    """Draw one audit instance: masses log-uniform in [1e-3, 1e3]."""
    lam = float(lambdas[rng.integers(len(lambdas))])

    def draw(n):
        return sorted((float(x) for x in np.exp(rng.uniform(math.log(1e-3), math.log(1e3), n))),
                      reverse=True)

    m = draw(int(rng.integers(2, max_len + 1)))
    if rng.random() < 0.5:
        mt = draw(int(rng.integers(2, max_len + 1)))
    else:
        eps = math.exp(rng.uniform(math.log(1e-8), math.log(1e-1)))
        mt = [x * math.exp(eps * rng.standard_normal()) for x in m]
        if rng.random() < 0.25 and len(mt) > 2:
            mt.pop()
        mt = sorted(mt, reverse=True)
    L = min(len(m), len(mt))
    i = int(rng.integers(1, L))
    j = int(rng.integers(i + 1, L + 1))

    k = int(rng.integers(1, 9))
    raw = sorted(rng.uniform(0.0, 1.0, k), reverse=True)
    total = 1.0 if (rng.random() < 0.5 and k > 1) else float(rng.uniform(0.05, 0.999))
    s = math.fsum(raw)
    theta = [x / s * total for x in raw]
    while math.fsum(theta) > 1.0:
        theta = [x * (1 - 1e-15) for x in theta]
    u = int(rng.integers(1, max(k - 1, 1) + 1))
    v = int(rng.integers(u + 1, max(k, u + 1) + 1))
    n = int(rng.integers(1, k + 1))
    return {"m": m, "mt": mt, "i": i, "j": j, "theta": theta, "lam": lam, "u": u, "v": v, "n": n}


def random_audit(cases: int = 10_000, seed: int = 0, lambdas=(0.3, 0.5, 1.0),
                 max_len: int = 20, max_examples: int = 3, rtol: float = AUDIT_RTOL,
                 diagnostics: bool = True) -> AuditSummary:
    """Run the inequality audit on ``cases`` random instances.

    Only the thirteen named inequalities decide ``ok``; diagnostic companion
    bounds are tallied separately.
    """
    if cases < 1:
        raise DomainError("cases must be >= 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    stats = {k: InequalityStats() for k in INEQUALITIES}
    diag = {}
    for _ in range(cases):
        inst = random_instance(rng, lambdas, max_len)
        res = audit_inequalities(inst["m"], inst["mt"], inst["i"], inst["j"], inst["theta"],
                                 inst["lam"], u=inst["u"], v=inst["v"], n=inst["n"], rtol=rtol,
                                 diagnostics=diagnostics)
        for name, e in res.items():
            st = stats[name] if name in stats else diag.setdefault(name, InequalityStats())
            st.cases += 1
            st.worst_slack = min(st.worst_slack, e.slack)
            if not e.holds:
                st.violations += 1
                if len(st.examples) < max_examples:
                    st.examples.append({**inst, "lhs": e.lhs, "rhs": e.rhs})
    return AuditSummary(cases, seed, stats, diag)

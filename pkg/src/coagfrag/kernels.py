"""Coagulation and fragmentation rate functions with regularity metadata."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import _jit
from ._expr import compile_expression
from .errors import DomainError

COAG_FAMILIES = {
    "constant": (_jit.COAG_CONSTANT, ("value",)),
    "sum_power": (_jit.COAG_SUM_POWER, ("alpha", "beta")),
    "product_sum": (_jit.COAG_PRODUCT_SUM, ("alpha", "beta")),
    "geometric": (_jit.COAG_GEOMETRIC, ("alpha", "beta")),
    "difference": (_jit.COAG_DIFFERENCE, ("alpha", "beta", "gamma")),
    "exp_cutoff": (_jit.COAG_EXP_CUTOFF, ("alpha", "beta")),
    "expression": (_jit.EXPRESSION, ()),
}

FRAG_FAMILIES = {
    "constant": (_jit.FRAG_CONSTANT, ("value",)),
    "inverse_linear": (_jit.FRAG_INVERSE_LINEAR, ("value",)),
    "power": (_jit.FRAG_POWER, ("value", "alpha")),
    "expression": (_jit.EXPRESSION, ()),
}

_DEFAULTS = {"value": 1.0}


def _table(pairs):
    """Normalise a threshold table to a sorted tuple of (a_max, constant)."""
    if pairs is None:
        return ()
    if isinstance(pairs, Mapping):
        pairs = list(pairs.items())
    out = []
    for a, k in pairs:
        a, k = float(a), float(k)
        if not a > 0 or k < 0 or math.isnan(k):
            raise DomainError(f"bad Hoelder table entry ({a}, {k})")
        out.append((a, k))
    return tuple(sorted(out))


def _lookup(table, a, what):
    for a_max, k in table:
        if a <= a_max:
            return k
    raise DomainError(f"no declared {what} covers a={a}")


def _table_json(table):
    return [[("inf" if math.isinf(a) else a), k] for a, k in table]


def _table_from_json(raw):
    if raw is None:
        return ()
    return _table([(float(a), k) for a, k in raw])


def _params(family, families, params):
    if family not in families:
        raise DomainError(f"unknown kernel family {family!r}")
    names = families[family][1]
    params = dict(params or {})
    out = {}
    for name in names:
        if name in params:
            out[name] = float(params.pop(name))
        elif name in _DEFAULTS:
            out[name] = _DEFAULTS[name]
        else:
            raise DomainError(f"family {family!r} requires parameter {name!r}")
    if family == "expression":
        out = {k: float(v) for k, v in params.items()}
    elif params:
        raise DomainError(f"unexpected parameters for {family!r}: {sorted(params)}")
    for k, v in out.items():
        if math.isnan(v):
            raise DomainError(f"parameter {k!r} is NaN")
    return out


# ---------------------------------------------------------------- coagulation

@dataclass(frozen=True, eq=False)
class CoagKernel:
    """Symmetric coagulation kernel K(x, y).

    ``lam`` is the homogeneity exponent used by the growth bound
    K <= kappa0 (x+y)^lam. For parametric families it is derived from the
    parameters; declaring an inconsistent value is an error.
    ``holder_kappa`` maps an upper bound a to the local constant kappa_a of
    |K(x,y) - K(x',y')| <= kappa_a (|x^lam - x'^lam| + |y^lam - y'^lam|).
    """

    family: str
    params: Mapping[str, float] = field(default_factory=dict)
    lam: float | None = None
    kappa0: float | None = None
    kappa1: float | None = None
    holder_kappa: tuple = ()
    deterministic_track: bool = True
    cap: float = math.inf
    expression: str | None = None

    def __post_init__(self):
        p = _params(self.family, COAG_FAMILIES, self.params)
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "holder_kappa", _table(self.holder_kappa))
        object.__setattr__(self, "cap", float(self.cap))
        if not self.cap > 0:
            raise DomainError("cap must be positive")

        fam = self.family
        derived = None
        if fam == "constant":
            if p["value"] < 0:
                raise DomainError("constant kernel value must be >= 0")
        elif fam == "sum_power":
            if not (p["alpha"] > 0 and p["beta"] > 0):
                raise DomainError("sum_power needs alpha > 0 and beta > 0")
            derived = p["alpha"] * p["beta"]
        elif fam == "product_sum":
            if not (0 <= p["alpha"] <= p["beta"] <= 1):
                raise DomainError("product_sum needs 0 <= alpha <= beta <= 1")
            derived = p["alpha"] + p["beta"]
        elif fam == "geometric":
            if not (p["alpha"] > 0 and p["beta"] >= 0):
                raise DomainError("geometric needs alpha > 0 and beta >= 0")
            derived = p["alpha"] - p["beta"]
        elif fam == "difference":
            if not (p["alpha"] > 0 and p["beta"] > 0 and 0 < p["gamma"] <= 1):
                raise DomainError("difference needs alpha, beta > 0 and 0 < gamma <= 1")
            derived = p["alpha"] * p["beta"] + p["gamma"]
        elif fam == "exp_cutoff":
            if not (p["alpha"] > 0 and p["beta"] >= 0):
                raise DomainError("exp_cutoff needs alpha > 0 and beta >= 0")
            if self.lam is None:
                raise DomainError("exp_cutoff requires an explicit lam")
        elif fam == "expression":
            if not self.expression:
                raise DomainError("expression family requires an expression string")
            if self.lam is None:
                raise DomainError("expression kernels require an explicit lam")

        lam = self.lam
        if derived is not None:
            if lam is not None and abs(float(lam) - derived) > 1e-12:
                raise DomainError(f"declared lam={lam} inconsistent with parameters (lam={derived})")
            lam = derived
        if lam is None:
            lam = 1.0
        lam = float(lam)
        object.__setattr__(self, "lam", lam)
        if self.deterministic_track and not (0 < lam <= 1):
            raise DomainError(f"lam={lam} outside (0, 1] for a deterministic-track kernel")
        for name in ("kappa0", "kappa1"):
            v = getattr(self, name)
            if v is not None:
                v = float(v)
                if v < 0:
                    raise DomainError(f"{name} must be >= 0")
                object.__setattr__(self, name, v)

        code = COAG_FAMILIES[fam][0]
        vec = np.zeros(4)
        if fam == "exp_cutoff":
            vec[:3] = (lam, p["alpha"], p["beta"])
        else:
            for k, name in enumerate(COAG_FAMILIES[fam][1]):
                vec[k] = p[name]
        vec.setflags(write=False)
        object.__setattr__(self, "_code", code)
        object.__setattr__(self, "_vec", vec)
        if code == _jit.EXPRESSION:
            object.__setattr__(self, "_fn", compile_expression(self.expression, ("x", "y"), p))

    # constructors for the catalogue
    @classmethod
    def constant(cls, value=1.0, **meta):
        return cls("constant", {"value": value}, **meta)

    @classmethod
    def sum_power(cls, alpha, beta, **meta):
        """(x^alpha + y^alpha)^beta; (x+y)^lam is alpha=1, beta=lam."""
        return cls("sum_power", {"alpha": alpha, "beta": beta}, **meta)

    @classmethod
    def product_sum(cls, alpha, beta, **meta):
        return cls("product_sum", {"alpha": alpha, "beta": beta}, **meta)

    @classmethod
    def geometric(cls, alpha, beta, **meta):
        return cls("geometric", {"alpha": alpha, "beta": beta}, **meta)

    @classmethod
    def difference(cls, alpha, beta, gamma, **meta):
        return cls("difference", {"alpha": alpha, "beta": beta, "gamma": gamma}, **meta)

    @classmethod
    def exp_cutoff(cls, lam, alpha, beta, **meta):
        return cls("exp_cutoff", {"alpha": alpha, "beta": beta}, lam=lam, **meta)

    @classmethod
    def from_expression(cls, text, lam, params=None, **meta):
        return cls("expression", params or {}, lam=lam, expression=text, **meta)

    @property
    def code(self) -> int:
        return self._code

    @property
    def vector(self) -> np.ndarray:
        return self._vec

    @property
    def jittable(self) -> bool:
        return self._code != _jit.EXPRESSION

    @property
    def is_zero(self) -> bool:
        return self.family == "constant" and self.params["value"] == 0.0

    def __call__(self, x, y) -> float:
        x = float(x)
        y = float(y)
        if x < 0 or y < 0:
            raise DomainError("masses must be >= 0")
        if self._code != _jit.EXPRESSION:
            return _jit.coag_value(self._code, self._vec, self.cap, x, y)
        if x == 0.0 or y == 0.0:
            return 0.0
        if x > y:
            x, y = y, x
        v = self._fn(x, y)
        if not v >= 0:
            raise DomainError(f"expression kernel returned {v} at ({x}, {y})")
        return min(v, self.cap)

    def matrix(self, xs) -> np.ndarray:
        """Symmetric matrix K(xs[a], xs[b])."""
        xs = np.ascontiguousarray(xs, dtype=float)
        if self.jittable:
            return _jit.coag_matrix(self._code, self._vec, self.cap, xs)
        n = len(xs)
        out = np.empty((n, n))
        for a in range(n):
            for b in range(a, n):
                out[a, b] = out[b, a] = self(xs[b], xs[a])
        return out

    def truncated(self, n) -> "CoagKernel":
        """Pointwise minimum with the level n."""
        if not n > 0:
            raise DomainError("truncation level must be positive")
        return replace(self, params=dict(self.params), cap=min(self.cap, float(n)))

    def kappa_a(self, a) -> float:
        if self.family == "constant" and not self.holder_kappa:
            return 0.0
        return _lookup(self.holder_kappa, a, "kappa_a")

    def to_json(self) -> dict:
        kappa = {"kappa0": self.kappa0, "kappa1": self.kappa1,
                 "holder": _table_json(self.holder_kappa)}
        out = {"family": self.family, "params": dict(self.params), "lambda": self.lam,
               "kappa": kappa, "deterministic_track": self.deterministic_track}
        if self.expression is not None:
            out["expression"] = self.expression
        if math.isfinite(self.cap):
            out["cap"] = self.cap
        return out

    @classmethod
    def from_json(cls, obj) -> "CoagKernel":
        if not isinstance(obj, Mapping) or "family" not in obj:
            raise DomainError("coagulation kernel must be an object with a 'family' field")
        kappa = obj.get("kappa") or {}
        return cls(
            family=obj["family"],
            params=obj.get("params") or {},
            lam=obj.get("lambda"),
            kappa0=kappa.get("kappa0"),
            kappa1=kappa.get("kappa1"),
            holder_kappa=_table_from_json(kappa.get("holder")),
            deterministic_track=bool(obj.get("deterministic_track", True)),
            cap=float(obj.get("cap", math.inf)),
            expression=obj.get("expression"),
        )


# -------------------------------------------------------------- fragmentation

@dataclass(frozen=True, eq=False)
class FragKernel:
    """Total fragmentation rate F(x).

    ``holder_alpha`` and ``mu`` describe |F(x) - F(x')| <= mu_a |x^alpha - x'^alpha|
    for x, x' <= a. Bounded families default to the deterministic track.
    """

    family: str
    params: Mapping[str, float] = field(default_factory=dict)
    kappa2: float | None = None
    kappa3: float | None = None
    holder_alpha: float = 0.0
    mu: tuple = ()
    deterministic_track: bool | None = None
    expression: str | None = None

    def __post_init__(self):
        p = _params(self.family, FRAG_FAMILIES, self.params)
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "mu", _table(self.mu))
        object.__setattr__(self, "holder_alpha", float(self.holder_alpha))
        if self.holder_alpha < 0:
            raise DomainError("holder_alpha must be >= 0")
        fam = self.family
        k2 = self.kappa2
        k3 = self.kappa3
        if fam in ("constant", "inverse_linear", "power") and p["value"] < 0:
            raise DomainError("fragmentation rate scale must be >= 0")
        if fam == "constant":
            bounded = True
            k2 = p["value"] if k2 is None else k2
            k3 = 0.0 if k3 is None else k3
        elif fam == "inverse_linear":
            bounded = True
            k2 = p["value"] if k2 is None else k2
            k3 = p["value"] if k3 is None else k3
        elif fam == "power":
            bounded = p["alpha"] == 0.0
            if bounded:
                k2 = p["value"] if k2 is None else k2
                k3 = 0.0 if k3 is None else k3
        else:
            if not self.expression:
                raise DomainError("expression family requires an expression string")
            bounded = k2 is not None and math.isfinite(float(k2))
        det = self.deterministic_track
        if det is None:
            det = bounded
        if det and not bounded:
            raise DomainError(f"{fam!r} fragmentation kernel is unbounded; "
                              "it cannot be used on the deterministic track")
        object.__setattr__(self, "deterministic_track", bool(det))
        object.__setattr__(self, "kappa2", None if k2 is None else float(k2))
        object.__setattr__(self, "kappa3", None if k3 is None else float(k3))

        code = FRAG_FAMILIES[fam][0]
        vec = np.zeros(4)
        for k, name in enumerate(FRAG_FAMILIES[fam][1]):
            vec[k] = p[name]
        vec.setflags(write=False)
        object.__setattr__(self, "_code", code)
        object.__setattr__(self, "_vec", vec)
        if code == _jit.EXPRESSION:
            object.__setattr__(self, "_fn", compile_expression(self.expression, ("x",), p))

    @classmethod
    def constant(cls, value=1.0, **meta):
        return cls("constant", {"value": value}, **meta)

    @classmethod
    def inverse_linear(cls, value=1.0, **meta):
        """value / (1 + x)."""
        return cls("inverse_linear", {"value": value}, **meta)

    @classmethod
    def power(cls, alpha, value=1.0, **meta):
        """value * x^alpha (unbounded for alpha > 0)."""
        return cls("power", {"value": value, "alpha": alpha}, **meta)

    @classmethod
    def from_expression(cls, text, params=None, **meta):
        return cls("expression", params or {}, expression=text, **meta)

    @property
    def code(self) -> int:
        return self._code

    @property
    def vector(self) -> np.ndarray:
        return self._vec

    @property
    def jittable(self) -> bool:
        return self._code != _jit.EXPRESSION

    @property
    def is_zero(self) -> bool:
        return self.family in ("constant", "inverse_linear", "power") and self.params["value"] == 0.0

    def __call__(self, x) -> float:
        x = float(x)
        if x < 0:
            raise DomainError("mass must be >= 0")
        if self._code != _jit.EXPRESSION:
            return _jit.frag_value(self._code, self._vec, x)
        if x == 0.0:
            return 0.0
        v = self._fn(x)
        if not v >= 0:
            raise DomainError(f"expression kernel returned {v} at {x}")
        return v

    def values(self, xs) -> np.ndarray:
        return np.array([self(x) for x in np.asarray(xs, dtype=float)])

    def sup_on(self, a) -> float:
        """sup of F over (0, a]."""
        a = float(a)
        if a <= 0:
            return 0.0
        fam = self.family
        if fam in ("constant", "inverse_linear"):
            return self.params["value"]
        if fam == "power":
            al = self.params["alpha"]
            return self.params["value"] * (a ** al if al >= 0 else math.inf)
        xs = np.geomspace(a * 1e-12, a, 4001)
        return float(max(self(x) for x in xs))

    def mu_a(self, a) -> float:
        if self.family == "constant" and not self.mu:
            return 0.0
        return _lookup(self.mu, a, "mu_a")

    def to_json(self) -> dict:
        kappa = {"kappa2": self.kappa2, "kappa3": self.kappa3,
                 "alpha": self.holder_alpha, "mu": _table_json(self.mu)}
        out = {"family": self.family, "params": dict(self.params), "kappa": kappa,
               "deterministic_track": self.deterministic_track}
        if self.expression is not None:
            out["expression"] = self.expression
        return out

    @classmethod
    def from_json(cls, obj) -> "FragKernel":
        if not isinstance(obj, Mapping) or "family" not in obj:
            raise DomainError("fragmentation kernel must be an object with a 'family' field")
        kappa = obj.get("kappa") or {}
        return cls(
            family=obj["family"],
            params=obj.get("params") or {},
            kappa2=kappa.get("kappa2"),
            kappa3=kappa.get("kappa3"),
            holder_alpha=kappa.get("alpha", 0.0),
            mu=_table_from_json(kappa.get("mu")),
            deterministic_track=obj.get("deterministic_track"),
            expression=obj.get("expression"),
        )


# --------------------------------------------------------------- verification

@dataclass(frozen=True)
class SampleGrid:
    """Log-spaced sample points in (eps, 1/eps), plus any extra points."""

    eps: float = 1e-3
    n: int = 61
    extra: tuple = ()

    def points(self) -> np.ndarray:
        if not (0 < self.eps < 1) or self.n < 2:
            raise DomainError("grid needs 0 < eps < 1 and n >= 2")
        pts = np.concatenate([np.geomspace(self.eps, 1 / self.eps, self.n),
                              np.asarray(self.extra, dtype=float)])
        return np.unique(pts)


@dataclass
class Violation:
    check: str
    point: tuple
    lhs: float
    rhs: float


@dataclass
class HypothesisReport:
    """Sampled falsification report. An empty violation list only means the
    hypothesis is consistent at the sampled resolution."""

    samples: dict = field(default_factory=dict)
    max_ratio: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def _record(self, check, point, lhs, rhs, rtol, atol=0.0):
        self.samples[check] = self.samples.get(check, 0) + 1
        if rhs > 0:
            ratio = lhs / rhs
        else:
            ratio = math.inf if lhs > atol else 0.0
        self.max_ratio[check] = max(self.max_ratio.get(check, 0.0), ratio)
        if not lhs <= rhs * (1 + rtol) + atol:
            self.violations.append(Violation(check, tuple(float(p) for p in point),
                                             float(lhs), float(rhs)))

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "samples": self.samples,
            "max_ratio": self.max_ratio,
            "violations": [v.__dict__ for v in self.violations],
        }


def _fd(f, x):
    h = 1e-6 * x
    return (f(x + h) - f(x - h)) / (2 * h)


def verify_coag_hypothesis(K: CoagKernel, grid: SampleGrid | None = None,
                           rtol: float = 1e-9, fd_rtol: float = 1e-5) -> HypothesisReport:
    """Check K <= kappa0 (x+y)^lam and the finite-difference proxy
    (x^lam ^ y^lam) |dK/dx| <= kappa1 x^(lam-1) y^lam on grid x grid."""
    if K.kappa0 is None or K.kappa1 is None:
        raise DomainError("kappa0 and kappa1 must be declared on the kernel")
    grid = grid or SampleGrid()
    pts = grid.points()
    lam = K.lam
    rep = HypothesisReport()
    for x in pts:
        xl = x ** lam
        for y in pts:
            k = K(x, y)
            rep._record("growth", (x, y), k, K.kappa0 * (x + y) ** lam, rtol)
            yl = y ** lam
            dk = _fd(lambda s: K(s, y), x)
            lhs = min(xl, yl) * abs(dk)
            rhs = K.kappa1 * x ** (lam - 1) * yl
            rep._record("derivative", (x, y), lhs, rhs, fd_rtol, atol=1e-12 * max(k, 1e-300))
    return rep


def verify_frag_hypothesis(F: FragKernel, grid: SampleGrid | None = None,
                           rtol: float = 1e-9, fd_rtol: float = 1e-5) -> HypothesisReport:
    """Check F <= kappa2 and the proxy |F'(x)| <= kappa3 / x."""
    if F.kappa2 is None or F.kappa3 is None:
        raise DomainError("kappa2 and kappa3 must be declared on the kernel")
    grid = grid or SampleGrid()
    rep = HypothesisReport()
    for x in grid.points():
        f = F(x)
        rep._record("bound", (x,), f, F.kappa2, rtol)
        rep._record("derivative", (x,), abs(_fd(F, x)), F.kappa3 / x, fd_rtol,
                    atol=1e-12 * max(f, 1e-300))
    return rep


def verify_holder_hypothesis(K: CoagKernel, F: FragKernel, a: float, lam: float | None = None,
                             samples: int = 2000, seed: int = 0,
                             rtol: float = 1e-9) -> HypothesisReport:
    """Random-sample check of the local Hoelder bounds on (0, a]:
    |K(x,y)-K(x',y')| <= kappa_a (|x^lam-x'^lam| + |y^lam-y'^lam|) and
    |F(x)-F(x')| <= mu_a |x^alpha - x'^alpha|."""
    lam = K.lam if lam is None else lam
    rng = np.random.Generator(np.random.Philox(seed))
    ka = K.kappa_a(a)
    mu = F.mu_a(a)
    al = F.holder_alpha
    rep = HypothesisReport()
    u = a * np.exp(rng.uniform(np.log(1e-6), 0.0, size=(samples, 4)))
    for x, y, xt, yt in u:
        lhs = abs(K(x, y) - K(xt, yt))
        rhs = ka * (abs(x ** lam - xt ** lam) + abs(y ** lam - yt ** lam))
        rep._record("holder_K", (x, y, xt, yt), lhs, rhs, rtol, atol=1e-14)
        lhs = abs(F(x) - F(xt))
        rhs = mu * abs(x ** al - xt ** al)
        rep._record("holder_F", (x, xt), lhs, rhs, rtol, atol=1e-14)
    return rep


def ineq_constant(alpha: float, beta: float) -> float:
    """Smallest C with 2|x^(a+b) - y^(a+b)| <= C (x^a + y^a)|x^b - y^b|.

    With y = r x the ratio depends on r in [0, 1) only; its endpoint values
    are 2 (r -> 0, alpha > 0) and (alpha+beta)/beta (r -> 1).
    """
    if beta <= 0 or alpha < 0:
        raise DomainError("need alpha >= 0 and beta > 0")
    if alpha == 0:
        return 1.0

    def g(r):
        return 2 * (1 - r ** (alpha + beta)) / ((1 + r ** alpha) * (1 - r ** beta))

    from scipy.optimize import minimize_scalar

    rs = np.concatenate([np.linspace(0, 1, 2001)[:-1], 1 - np.geomspace(1e-12, 1e-3, 200)])
    vals = [g(r) for r in rs]
    best = max(max(vals), 2.0, (alpha + beta) / beta)
    k = int(np.argmax(vals))
    lo = rs[max(k - 1, 0)]
    hi = min(rs[min(k + 1, len(rs) - 1)], 1 - 1e-12)
    if hi > lo:
        res = minimize_scalar(lambda r: -g(r), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14})
        best = max(best, -res.fun)
    return best * (1 + 1e-12)

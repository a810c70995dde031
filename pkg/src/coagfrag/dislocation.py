"""Fragment-ratio sequences and finite atomic dislocation measures."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import DomainError, InvalidRatio, MassGain, NotSorted, UnitFirstRatio

MASS_TOL = 1e-12


@dataclass(frozen=True)
class RatioSequence:
    """Non-increasing ratios theta_1 >= theta_2 >= ... > 0 with theta_1 < 1
    and sum <= 1. Build through :func:`validate_theta`."""

    ratios: tuple

    def __len__(self):
        return len(self.ratios)

    def __iter__(self):
        return iter(self.ratios)

    def __getitem__(self, k):
        return self.ratios[k]

    @property
    def total(self) -> float:
        return math.fsum(self.ratios)

    @property
    def first(self) -> float:
        return self.ratios[0] if self.ratios else 0.0

    def power_sum(self, lam: float, start: int = 0) -> float:
        """sum_{k > start} theta_k^lam (0-based start)."""
        s = 0.0
        for t in self.ratios[start:]:
            s += t ** lam
        return s

    def conserves_mass(self, tol: float = MASS_TOL) -> bool:
        return abs(self.total - 1.0) <= tol


def validate_theta(theta: Iterable[float]) -> RatioSequence:
    if isinstance(theta, RatioSequence):
        return theta
    vals = []
    for t in theta:
        t = float(t)
        if math.isnan(t) or t < 0:
            raise InvalidRatio(f"ratio {t} is not in [0, 1)")
        vals.append(t)
    for a, b in zip(vals, vals[1:]):
        if b > a:
            raise NotSorted(f"ratios must be non-increasing, got {a} before {b}")
    if vals and vals[0] >= 1.0:
        raise UnitFirstRatio(f"first ratio must be < 1, got {vals[0]}")
    if math.fsum(vals) > 1.0 + MASS_TOL:
        raise MassGain(f"ratios sum to {math.fsum(vals)} > 1")
    while vals and vals[-1] == 0.0:
        vals.pop()
    return RatioSequence(tuple(vals))


def psi_n(theta, n: int) -> RatioSequence:
    """Keep the first n ratios."""
    if n < 1:
        raise DomainError("n must be >= 1")
    theta = validate_theta(theta)
    return RatioSequence(theta.ratios[:n])


@dataclass(frozen=True)
class Atom:
    weight: float
    theta: RatioSequence


@dataclass(frozen=True)
class DislocationMeasure:
    """Finite sum of weighted point masses on ratio sequences."""

    atoms: tuple = ()

    def __post_init__(self):
        norm = []
        for a in self.atoms:
            if isinstance(a, Atom):
                w, th = a.weight, a.theta
            else:
                w, th = a
            w = float(w)
            if not (w > 0 and math.isfinite(w)):
                raise DomainError(f"atom weight must be positive and finite, got {w}")
            norm.append(Atom(w, validate_theta(th)))
        object.__setattr__(self, "atoms", tuple(norm))

    @classmethod
    def single(cls, theta, weight: float = 1.0) -> "DislocationMeasure":
        return cls(((weight, theta),))

    def __len__(self):
        return len(self.atoms)

    @property
    def total_mass(self) -> float:
        """beta(Theta)."""
        s = 0.0
        for a in self.atoms:
            s += a.weight
        return s

    @property
    def max_length(self) -> int:
        return max((len(a.theta) for a in self.atoms), default=0)

    def conserves_mass(self) -> bool:
        return all(a.theta.conserves_mass() for a in self.atoms)

    def to_json(self) -> dict:
        return {"atoms": [{"weight": a.weight, "theta": list(a.theta.ratios)} for a in self.atoms]}

    @classmethod
    def from_json(cls, obj) -> "DislocationMeasure":
        if not isinstance(obj, Mapping) or not isinstance(obj.get("atoms"), list):
            raise DomainError("dislocation measure must be an object with an 'atoms' list")
        atoms = []
        for k, a in enumerate(obj["atoms"]):
            if not isinstance(a, Mapping) or "weight" not in a or "theta" not in a:
                raise DomainError(f"atoms[{k}] needs 'weight' and 'theta'")
            atoms.append((a["weight"], a["theta"]))
        return cls(tuple(atoms))


def c_beta_lambda(beta: DislocationMeasure, lam: float) -> float:
    """sum over atoms of weight * sum_{k>=2} theta_k^lam."""
    if not 0 < lam <= 1:
        raise DomainError("lambda must lie in (0, 1]")
    s = 0.0
    for a in beta.atoms:
        s += a.weight * a.theta.power_sum(lam, start=1)
    return s


def truncate_beta(beta: DislocationMeasure, n: int) -> DislocationMeasure:
    """Restrict to atoms with theta_1 <= 1 - 1/n and project each with psi_n."""
    if n < 1:
        raise DomainError("n must be >= 1")
    keep = [(a.weight, psi_n(a.theta, n)) for a in beta.atoms if a.theta.first <= 1 - 1 / n]
    return DislocationMeasure(tuple(keep))


HALVING = DislocationMeasure.single((0.5, 0.5))

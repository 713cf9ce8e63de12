"""Double-well potential F, its derivative f = F', curvature f', and the
stabilization constant of the semi-implicit scheme.

The canonical choice is the quartic well F(s) = (s^2 - 1)^2, i.e.
f(s) = 4s^3 - 4s.  Arbitrary polynomial wells are accepted as long as they
keep the standing structure: f(0) = 0, even degree at most four with a
positive leading coefficient (so F is bounded below and f grows at most
cubically).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

QUARTIC_COEFFS = (1.0, 0.0, -2.0, 0.0, 1.0)  # (s^2 - 1)^2, ascending powers


@dataclass(frozen=True)
class Potential:
    """Polynomial bulk free-energy density."""

    kind: str = "quartic"
    coeffs: tuple[float, ...] = QUARTIC_COEFFS
    _F: Polynomial = field(init=False, repr=False, compare=False)
    _f: Polynomial = field(init=False, repr=False, compare=False)
    _fp: Polynomial = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        F = Polynomial(coeffs).trim(tol=0.0)
        deg = F.degree()
        if deg < 2 or deg > 4 or deg % 2 != 0:
            raise ValueError(f"potential degree must be 2 or 4, got {deg}")
        if F.coef[-1] <= 0:
            raise ValueError("potential needs a positive leading coefficient")
        if len(coeffs) > 1 and coeffs[1] != 0.0:
            raise ValueError("potential requires f(0) = F'(0) = 0")
        object.__setattr__(self, "_F", F)
        object.__setattr__(self, "_f", F.deriv())
        object.__setattr__(self, "_fp", F.deriv(2))

    @classmethod
    def quartic(cls) -> "Potential":
        return cls()

    @classmethod
    def from_coeffs(cls, coeffs) -> "Potential":
        return cls(kind="polynomial", coeffs=tuple(coeffs))

    # -- evaluation ---------------------------------------------------------

    def F(self, s):
        return self._F(s)

    def f(self, s):
        return self._f(s)

    def fprime(self, s):
        return self._fp(s)

    def eval(self, s: float) -> tuple[float, float, float]:
        """(F(s), f(s), f'(s)) at a single finite point."""
        if not math.isfinite(s):
            raise ValueError(f"non-finite argument {s!r}")
        return float(self._F(s)), float(self._f(s)), float(self._fp(s))

    def lower_bound(self, lo: float = -10.0, hi: float = 10.0) -> float:
        """min F on [lo, hi] (by the positive leading term, the global min
        for a wide enough scan)."""
        return float(min(self._poly_extrema(self._F, lo, hi)))

    # -- stabilization ------------------------------------------------------

    def stabilization(self, lo: float, hi: float, pad: float = 0.1,
                      safety: float = 1.1) -> float:
        """Stabilization S >= max f'(s)/2 over [lo-pad, hi+pad], with margin.

        Any S at least half the largest curvature of F over the values the
        phase field visits makes the linearly split semi-implicit step
        non-increasing in energy; negative curvature clamps to zero.
        """
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        top = max(self._poly_extrema(self._fp, lo - pad, hi + pad))
        return max(0.0, safety * top / 2.0)

    @staticmethod
    def _poly_extrema(p: Polynomial, lo: float, hi: float) -> list[float]:
        """Values of p at the endpoints and interior critical points of [lo, hi]."""
        pts = [lo, hi]
        if p.degree() >= 2:
            for r in p.deriv().roots():
                if abs(r.imag) < 1e-12 and lo < r.real < hi:
                    pts.append(float(r.real))
        return [float(p(x)) for x in pts]


def growth_ratio(pot: Potential, lo: float = -10.0, hi: float = 10.0,
                 samples: int = 2001) -> float:
    """sup |f(s)| / (1 + |s|^3) on a sample of [lo, hi] (cubic-growth check)."""
    s = np.linspace(lo, hi, samples)
    return float(np.max(np.abs(pot.f(s)) / (1.0 + np.abs(s) ** 3)))


def min_curvature(pot: Potential, lo: float = -10.0, hi: float = 10.0) -> float:
    """inf f' on [lo, hi]; finite for every polynomial well."""
    return float(min(pot._poly_extrema(pot._fp, lo, hi)))

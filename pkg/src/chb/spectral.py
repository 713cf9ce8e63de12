"""Fast direct solvers for constant-coefficient operators a*I + b*Lap + c*Lap^2.

On the rectangle the mirrored-ghost Neumann Laplacian is diagonalized
exactly by the type-II cosine basis (cell-centered cosines), and the
periodic one by the Fourier basis.  Any operator polynomial in the
Laplacian is therefore a per-mode division.  The discrete biharmonic is
the square of the Laplacian, which imposes d(phi)/dn = d(mu)/dn = 0
simultaneously.

These solvers back the implicit phase-field update, the pressure Poisson
solve of the Darcy projection, and the H^-1 norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .grid import NEUMANN, PERIODIC, GridSpec, ScalarField, inner, laplacian

__all__ = [
    "HelmholtzOperator",
    "poisson_neumann",
    "norm_hminus1",
    "laplacian_eigenvalues_1d",
]


def laplacian_eigenvalues_1d(n: int, h: float, bc: str) -> np.ndarray:
    """Eigenvalues of minus the 1D second-difference operator, by mode.

    Neumann (mirrored ghosts, cosine modes k=0..n-1):
        lam_k = (2/h^2) (1 - cos(pi k / n))
    Periodic (Fourier modes k=0..n-1):
        lam_k = (2/h^2) (1 - cos(2 pi k / n))
    """
    k = np.arange(n)
    if bc == NEUMANN:
        return (2.0 / h**2) * (1.0 - np.cos(np.pi * k / n))
    if bc == PERIODIC:
        return (2.0 / h**2) * (1.0 - np.cos(2.0 * np.pi * k / n))
    raise ValueError(f"unknown bc {bc!r}")


class HelmholtzOperator:
    """a*I + b*Lap + c*Lap^2 on a rectangle, diagonal in the cosine/Fourier basis.

    The per-mode symbol is sigma(k,l) = a - b*lam_{k,l} + c*lam_{k,l}^2 with
    lam the eigenvalues of -Lap.  A vanishing symbol is only tolerated in the
    (0,0) mode, in which case solves are restricted to mean-zero data and the
    solution mean is prescribed by the caller.
    """

    def __init__(self, grid: GridSpec, a: float, b: float = 0.0, c: float = 0.0,
                 bc: str = NEUMANN):
        if bc not in (NEUMANN, PERIODIC):
            raise ValueError(f"unknown bc {bc!r}")
        self.grid = grid
        self.a = float(a)
        self.b = float(b)
        self.c = float(c)
        self.bc = bc
        lx = laplacian_eigenvalues_1d(grid.nx, grid.hx, bc)
        ly = laplacian_eigenvalues_1d(grid.ny, grid.hy, bc)
        self.eigenvalues = lx[:, None] + ly[None, :]
        self.symbol = self.a - self.b * self.eigenvalues + self.c * self.eigenvalues**2
        zero = self.symbol == 0.0
        zero[0, 0] = False
        if zero.any():
            raise ValueError("operator symbol vanishes on a nonzero mode")
        self.singular = self.symbol[0, 0] == 0.0

    # -- transforms --------------------------------------------------------

    def _forward(self, values: np.ndarray) -> np.ndarray:
        if self.bc == NEUMANN:
            return scipy.fft.dctn(values, type=2, norm="ortho")
        return scipy.fft.fft2(values)

    def _inverse(self, coeffs: np.ndarray) -> np.ndarray:
        if self.bc == NEUMANN:
            return scipy.fft.idctn(coeffs, type=2, norm="ortho")
        return scipy.fft.ifft2(coeffs).real

    def _mean_coefficient(self) -> float:
        # value of the (0,0) transform coefficient for a unit-mean field
        n = self.grid.nx * self.grid.ny
        return np.sqrt(n) if self.bc == NEUMANN else float(n)

    # -- operator action ----------------------------------------------------

    def apply(self, f: ScalarField) -> ScalarField:
        """Apply the operator through the grid stencils (not the transform)."""
        if f.bc != self.bc:
            raise ValueError(f"field bc {f.bc!r} does not match operator bc {self.bc!r}")
        out = self.a * f.values
        if self.b != 0.0 or self.c != 0.0:
            lap = laplacian(f)
            if self.b != 0.0:
                out = out + self.b * lap.values
            if self.c != 0.0:
                out = out + self.c * laplacian(lap).values
        return ScalarField(f.grid, out, f.bc)

    def solve(self, rhs: ScalarField, mean_constraint: float | None = None) -> ScalarField:
        """Invert the operator mode by mode.

        For a singular operator (sigma(0,0) = 0) the right-hand side must be
        mean-zero within 1e-10 * ||rhs|| and `mean_constraint` must supply the
        solution mean; the returned field carries that mean up to rounding.
        """
        if rhs.grid != self.grid:
            raise ValueError("rhs grid does not match operator grid")
        if rhs.bc != self.bc:
            raise ValueError(f"rhs bc {rhs.bc!r} does not match operator bc {self.bc!r}")
        if not rhs.is_finite():
            raise ValueError("non-finite input")
        if self.singular:
            if mean_constraint is None:
                raise ValueError("incompatible singular system: mean_constraint required")
            scale = np.sqrt(inner(rhs, rhs)) + 1e-300
            if abs(rhs.mean()) * np.sqrt(self.grid.area) > 1e-10 * scale:
                raise ValueError("incompatible singular system: rhs is not mean-zero")
        coeffs = self._forward(rhs.values)
        if self.singular:
            coeffs[0, 0] = 0.0
            sym = self.symbol.copy()
            sym[0, 0] = 1.0
            coeffs = coeffs / sym
            coeffs[0, 0] = mean_constraint * self._mean_coefficient()
        else:
            coeffs = coeffs / self.symbol
        out = ScalarField(self.grid, self._inverse(coeffs), rhs.bc)
        target = mean_constraint if self.singular else None
        if target is not None:
            # transform rounding leaves the mean a few ulps off; pin it
            out.values += target - out.values.mean()
        return out


def poisson_neumann(grid: GridSpec, bc: str = NEUMANN) -> HelmholtzOperator:
    """The operator -Lap (a=0, b=-1), singular on constants."""
    return HelmholtzOperator(grid, a=0.0, b=-1.0, c=0.0, bc=bc)


def norm_hminus1(f: ScalarField, _cache: dict = {}) -> float:
    """H^-1 norm sqrt(<f, (-Lap)^{-1} f>) of a mean-zero field.

    The inverse Laplacian is the Neumann (or periodic) Poisson solve with
    zero-mean solution.  Raises on inputs with nonzero mean.
    """
    scale = np.sqrt(inner(f, f))
    if abs(f.mean()) * np.sqrt(f.grid.area) > 1e-10 * (scale + 1e-300):
        raise ValueError("mean-zero required")
    key = (f.grid, f.bc)
    op = _cache.get(key)
    if op is None:
        op = _cache[key] = poisson_neumann(f.grid, bc=f.bc)
    psi = op.solve(f, mean_constraint=0.0)
    return float(np.sqrt(max(inner(f, psi), 0.0)))

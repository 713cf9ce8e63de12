"""Uniform 2D MAC grid: cell-centered scalars, face-centered vectors,
discrete differential operators and norms.

Conventions
-----------
The domain is the rectangle [0, lx] x [0, ly] split into nx x ny cells.
Scalar fields live at cell centers, ``values[i, j]`` with ``i`` the x index
and ``j`` the y index.  Vector fields live on cell faces (MAC layout):
``ux[i, j]`` sits on the vertical face at (i*hx, (j+1/2)*hy), shape
(nx+1, ny); ``uy[i, j]`` on the horizontal face at ((i+1/2)*hx, j*hy),
shape (nx, ny+1).

Homogeneous Neumann conditions are realized by mirrored ghost cells, which
is equivalent to zeroing the normal boundary faces of every gradient.  The
Laplacian is defined as divergence(gradient_to_faces(.)) so the composition
identity holds bitwise and summation by parts is exact up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEUMANN = "neumann"
PERIODIC = "periodic"
NOSLIP = "noslip"
NOPENETRATION = "nopenetration"

_SCALAR_BCS = (NEUMANN, PERIODIC)
_VECTOR_BCS = (NOSLIP, NOPENETRATION, PERIODIC)


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular grid: nx x ny cells on [0, lx] x [0, ly]."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs nx, ny >= 4, got {self.nx} x {self.ny}")
        if not (self.lx > 0 and self.ly > 0 and math.isfinite(self.lx) and math.isfinite(self.ly)):
            raise ValueError(f"domain lengths must be positive finite, got {self.lx}, {self.ly}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid (X, Y) of cell-center coordinates, shape (nx, ny)."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)


@dataclass
class ScalarField:
    """Cell-centered scalar field with a boundary-condition tag."""

    grid: GridSpec
    values: np.ndarray
    bc: str = NEUMANN

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape():
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape()}"
            )
        if self.bc not in _SCALAR_BCS:
            raise ValueError(f"unknown scalar bc {self.bc!r}")

    @classmethod
    def zeros(cls, grid: GridSpec, bc: str = NEUMANN) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape()), bc)

    @classmethod
    def full(cls, grid: GridSpec, value: float, bc: str = NEUMANN) -> "ScalarField":
        return cls(grid, np.full(grid.shape(), float(value)), bc)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.bc)

    def mean(self) -> float:
        """Domain average <f> = (1/|Omega|) integral of f."""
        return float(self.values.mean())

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_area)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())


@dataclass
class MacVector:
    """Face-centered vector field on the MAC grid."""

    grid: GridSpec
    ux: np.ndarray
    uy: np.ndarray
    bc: str = NOSLIP

    def __post_init__(self):
        self.ux = np.asarray(self.ux, dtype=np.float64)
        self.uy = np.asarray(self.uy, dtype=np.float64)
        g = self.grid
        if self.ux.shape != (g.nx + 1, g.ny) or self.uy.shape != (g.nx, g.ny + 1):
            raise ValueError(
                f"face shapes {self.ux.shape}, {self.uy.shape} do not match grid "
                f"({g.nx + 1}, {g.ny}) / ({g.nx}, {g.ny + 1})"
            )
        if self.bc not in _VECTOR_BCS:
            raise ValueError(f"unknown vector bc {self.bc!r}")

    @classmethod
    def zeros(cls, grid: GridSpec, bc: str = NOSLIP) -> "MacVector":
        return cls(grid, np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)), bc)

    def copy(self) -> "MacVector":
        return MacVector(self.grid, self.ux.copy(), self.uy.copy(), self.bc)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.ux).all() and np.isfinite(self.uy).all())

    def max_abs(self) -> float:
        mx = float(np.abs(self.ux).max()) if self.ux.size else 0.0
        my = float(np.abs(self.uy).max()) if self.uy.size else 0.0
        return max(mx, my)

    def zero_normal_boundary(self) -> None:
        """Pin the normal boundary faces to zero (no-penetration)."""
        self.ux[0, :] = 0.0
        self.ux[-1, :] = 0.0
        self.uy[:, 0] = 0.0
        self.uy[:, -1] = 0.0


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

def gradient_to_faces(f: ScalarField) -> MacVector:
    """Centered difference of adjacent cells onto faces.

    Neumann: normal boundary faces are set to zero, consistent with the
    mirrored-ghost realization of d f/dn = 0.  Periodic: wraps around; the
    duplicated last face equals the first.
    """
    g = f.grid
    v = f.values
    ux = np.zeros((g.nx + 1, g.ny))
    uy = np.zeros((g.nx, g.ny + 1))
    ux[1:-1, :] = np.diff(v, axis=0) / g.hx
    uy[:, 1:-1] = np.diff(v, axis=1) / g.hy
    if f.bc == PERIODIC:
        ux[0, :] = (v[0, :] - v[-1, :]) / g.hx
        ux[-1, :] = ux[0, :]
        uy[:, 0] = (v[:, 0] - v[:, -1]) / g.hy
        uy[:, -1] = uy[:, 0]
        return MacVector(g, ux, uy, PERIODIC)
    return MacVector(g, ux, uy, NOPENETRATION)


def divergence(v: MacVector) -> ScalarField:
    """Per-cell net flux: (ux_{i+1,j} - ux_{i,j})/hx + (uy_{i,j+1} - uy_{i,j})/hy."""
    g = v.grid
    out = np.diff(v.ux, axis=0) / g.hx + np.diff(v.uy, axis=1) / g.hy
    bc = PERIODIC if v.bc == PERIODIC else NEUMANN
    return ScalarField(g, out, bc)


def laplacian(f: ScalarField) -> ScalarField:
    """Five-point Laplacian with mirrored ghosts, as divergence of the face gradient."""
    return divergence(gradient_to_faces(f))


def average_to_faces(f: ScalarField) -> MacVector:
    """Two-cell arithmetic mean onto faces.

    Boundary faces copy the adjacent cell value in the bounded case; they
    only ever multiply face quantities that vanish there (normal velocity,
    normal gradient), so the choice does not enter any flux.
    """
    g = f.grid
    v = f.values
    ux = np.empty((g.nx + 1, g.ny))
    uy = np.empty((g.nx, g.ny + 1))
    ux[1:-1, :] = 0.5 * (v[1:, :] + v[:-1, :])
    uy[:, 1:-1] = 0.5 * (v[:, 1:] + v[:, :-1])
    if f.bc == PERIODIC:
        ux[0, :] = 0.5 * (v[0, :] + v[-1, :])
        ux[-1, :] = ux[0, :]
        uy[:, 0] = 0.5 * (v[:, 0] + v[:, -1])
        uy[:, -1] = uy[:, 0]
        return MacVector(g, ux, uy, PERIODIC)
    ux[0, :] = v[0, :]
    ux[-1, :] = v[-1, :]
    uy[:, 0] = v[:, 0]
    uy[:, -1] = v[:, -1]
    return MacVector(g, ux, uy, NOPENETRATION)


# ---------------------------------------------------------------------------
# inner products and norms
# ---------------------------------------------------------------------------

def inner(f: ScalarField, g: ScalarField) -> float:
    """L2 pairing <f, g> = sum f*g*hx*hy."""
    _check_same_grid(f, g)
    return float(np.dot(f.values.ravel(), g.values.ravel()) * f.grid.cell_area)


def face_inner(u: MacVector, v: MacVector) -> float:
    """L2 pairing of face fields, counting each physical face once.

    For periodic fields the duplicated wrap-around face is skipped; in the
    bounded case boundary faces enter with full weight (their values are
    zero for all admissible fields).
    """
    _check_same_grid(u, v)
    w = u.grid.cell_area
    if u.bc == PERIODIC or v.bc == PERIODIC:
        sx = np.dot(u.ux[:-1, :].ravel(), v.ux[:-1, :].ravel())
        sy = np.dot(u.uy[:, :-1].ravel(), v.uy[:, :-1].ravel())
    else:
        sx = np.dot(u.ux.ravel(), v.ux.ravel())
        sy = np.dot(u.uy.ravel(), v.uy.ravel())
    return float((sx + sy) * w)


def norm_l2(f) -> float:
    """L2 norm of a ScalarField or MacVector."""
    if isinstance(f, ScalarField):
        return math.sqrt(max(inner(f, f), 0.0))
    if isinstance(f, MacVector):
        return math.sqrt(max(face_inner(f, f), 0.0))
    raise TypeError(f"cannot take the norm of {type(f).__name__}")


def grad_norm_sq(f: ScalarField) -> float:
    """Squared L2 norm of the face gradient (discrete H1 seminorm squared)."""
    g = gradient_to_faces(f)
    return face_inner(g, g)


def norm_h1(f: ScalarField) -> float:
    """Discrete H1 norm: sqrt(||f||^2 + ||grad f||^2)."""
    return math.sqrt(max(inner(f, f) + grad_norm_sq(f), 0.0))


def subtract_mean(f: ScalarField) -> ScalarField:
    out = f.copy()
    out.values -= out.values.mean()
    return out


def field_diff(a: ScalarField, b: ScalarField) -> ScalarField:
    _check_same_grid(a, b)
    return ScalarField(a.grid, a.values - b.values, a.bc)


def mac_diff(a: MacVector, b: MacVector) -> MacVector:
    _check_same_grid(a, b)
    bc = a.bc if a.bc == b.bc else NOPENETRATION
    return MacVector(a.grid, a.ux - b.ux, a.uy - b.uy, bc)

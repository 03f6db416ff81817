"""Spatial grid, shared finite-volume stencils and polymer transport in x.

Staggered layout used everywhere: cell (i, j) has its left face velocity
``u[i, j]`` and bottom face velocity ``v[i, j]``. In no-flux mode the wall
faces ``u[0, :]`` and ``v[:, 0]`` are held at zero and the right and top
walls are the wrap-around of those same zero faces, so periodic and walled
boxes share one set of array shapes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .qspace import _entropy_pair


class BCMode(str, Enum):
    PERIODIC = "periodic"
    NOFLUX = "noflux"


@dataclass(frozen=True)
class XGrid:
    n_x: int
    n_y: int
    L_x: float = 1.0
    L_y: float = 1.0
    bc_mode: BCMode = BCMode.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "bc_mode", BCMode(self.bc_mode))
        if self.n_x < 3 or self.n_y < 3:
            raise ValueError("need at least 3 cells per direction")

    @property
    def hx(self):
        return self.L_x / self.n_x

    @property
    def hy(self):
        return self.L_y / self.n_y

    @property
    def cell_area(self):
        return self.hx * self.hy

    @property
    def h(self):
        return max(self.hx, self.hy)

    @property
    def periodic(self) -> bool:
        return self.bc_mode is BCMode.PERIODIC

    @property
    def shape(self):
        return (self.n_x, self.n_y)

    def centers(self):
        x = (np.arange(self.n_x) + 0.5) * self.hx
        y = (np.arange(self.n_y) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def u_faces(self):
        x = np.arange(self.n_x) * self.hx
        y = (np.arange(self.n_y) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def v_faces(self):
        x = (np.arange(self.n_x) + 0.5) * self.hx
        y = np.arange(self.n_y) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def face_mask(self):
        """Boolean masks of the free (non-wall) u and v faces."""
        mu = np.ones(self.shape, bool)
        mv = np.ones(self.shape, bool)
        if not self.periodic:
            mu[0, :] = False
            mv[:, 0] = False
        return mu, mv

    def integrate(self, cell_field):
        return np.sum(cell_field, axis=(0, 1)) * self.cell_area


def face_average(grid: XGrid, c, axis: int, kind: str = "arithmetic"):
    """Average of a cell field onto the left/bottom faces along ``axis``.

    Wall faces in no-flux mode get zero.
    """
    prev = np.roll(c, 1, axis=axis)
    if kind == "arithmetic":
        out = 0.5 * (prev + c)
    elif kind == "harmonic":
        s = prev + c
        out = np.where(s > 0, 2.0 * prev * c / np.where(s > 0, s, 1.0), 0.0)
    else:
        raise ValueError(kind)
    if not grid.periodic:
        idx = [slice(None)] * out.ndim
        idx[axis] = 0
        out[tuple(idx)] = 0.0
    return out


def upwind_divergence(grid: XGrid, q, u, v):
    """Divergence of the first-order upwind flux (u q, v q) for a cell field.

    ``q`` may carry trailing axes (e.g. the q-indices of a density).
    """
    extra = (None,) * (q.ndim - 2)
    uu = u[(...,) + extra]
    vv = v[(...,) + extra]
    fx = uu * np.where(uu > 0, np.roll(q, 1, axis=0), q)
    fy = vv * np.where(vv > 0, np.roll(q, 1, axis=1), q)
    return ((np.roll(fx, -1, axis=0) - fx) / grid.hx
            + (np.roll(fy, -1, axis=1) - fy) / grid.hy)


def divergence(grid: XGrid, u, v):
    return ((np.roll(u, -1, axis=0) - u) / grid.hx
            + (np.roll(v, -1, axis=1) - v) / grid.hy)


def _cell_index(grid: XGrid):
    return np.arange(grid.n_x * grid.n_y).reshape(grid.shape)


def diffusion_matrix(grid: XGrid, cx, cy):
    """Sparse matrix of div(c grad .) on cells, with face coefficients cx, cy.

    ``cx[i, j]`` sits on the left face of cell (i, j); zero entries switch a
    face off, which is how no-flux walls are represented.
    """
    idx = _cell_index(grid)
    n = idx.size
    rows, cols, vals = [], [], []
    for coef, axis, h in ((cx, 0, grid.hx), (cy, 1, grid.hy)):
        w = (coef / h**2).ravel()
        a = idx.ravel()
        b_ = np.roll(idx, 1, axis=axis).ravel()
        keep = w != 0
        a, b_, w = a[keep], b_[keep], w[keep]
        rows += [a, a, b_, b_]
        cols += [a, b_, b_, a]
        vals += [-w, w, -w, w]
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def implicit_diffusion(grid: XGrid, field, cx, cy, dt):
    """Solve (I - dt div(c grad)) x = field for a cell field with trailing axes."""
    n = grid.n_x * grid.n_y
    A = sp.identity(n, format="csc") - dt * diffusion_matrix(grid, cx, cy)
    lu = spla.splu(A)
    rhs = field.reshape(n, -1)
    out = lu.solve(np.ascontiguousarray(rhs))
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("implicit diffusion solve failed")
    return out.reshape(field.shape)


# ---------------------------------------------------------------------------
# polymer transport


def x_transport_step(phi, u, v, theta, dt, grid: XGrid):
    """Upwind advection of every q-node followed by implicit diffusion with
    face coefficient equal to the harmonic mean of the adjacent temperatures.

    ``phi`` has shape (n_x, n_y, n_r, n_a); a fresh array is returned.
    """
    phi = np.asarray(phi, dtype=float)
    star = phi - dt * upwind_divergence(grid, phi, u, v)
    cx = face_average(grid, theta, 0, "harmonic")
    cy = face_average(grid, theta, 1, "harmonic")
    return implicit_diffusion(grid, star, cx, cy, dt)


def diffusion_entropy_rate(grid: XGrid, phi, theta, weights):
    """Per-cell share of  theta |grad_x phi|^2 / phi  (face sums, >= 0 termwise).

    ``weights`` are the q-cell measures broadcast against the trailing axes of
    ``phi``; each face value is split evenly between its two cells.
    """
    out = np.zeros(grid.shape)
    for axis, h in ((0, grid.hx), (1, grid.hy)):
        c = face_average(grid, theta, axis, "harmonic")
        pair = _entropy_pair(phi, np.roll(phi, 1, axis=axis))
        face = c * np.sum(pair * weights, axis=(-2, -1)) / h**2
        out += 0.5 * (face + np.roll(face, -1, axis=axis))
    return out


@dataclass
class BoundsCheck:
    lo: float
    hi: float
    n_min: float
    n_max: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.n_min >= self.lo - self.tol and self.n_max <= self.hi + self.tol


def number_density_bounds(nP, initial_bounds) -> BoundsCheck:
    lo, hi = initial_bounds
    tol = 1e-8 + 1e-6 * abs(hi)
    return BoundsCheck(lo, hi, float(np.min(nP)), float(np.max(nP)), tol)

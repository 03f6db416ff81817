"""Incompressible momentum balance on the staggered grid.

The viscous term is assembled from a strain operator ``B`` that maps the
face velocities to the strain components (normal strains at cell centers,
shear strain at cell corners). The viscous force is ``-B^T W B U`` with
``W`` carrying the viscosity, so the discrete kinetic energy loses exactly
the discrete dissipation that ``dissipation`` reports. The elastic stress is
differenced through the same ``B^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .transport import XGrid, divergence, face_average


class CFLError(RuntimeError):
    pass


@dataclass
class FlowState:
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray

    @classmethod
    def zeros(cls, grid: XGrid):
        z = np.zeros(grid.shape)
        return cls(z.copy(), z.copy(), z.copy())

    def copy(self):
        return FlowState(self.u.copy(), self.v.copy(), self.p.copy())


class FlowOperators:
    """Grid-dependent sparse operators, built once per grid."""

    def __init__(self, grid: XGrid):
        self.grid = grid
        nx, ny = grid.shape
        self.N = nx * ny
        mu, mv = grid.face_mask()
        self.free = np.concatenate([mu.ravel(), mv.ravel()])
        self.free_idx = np.flatnonzero(self.free)

    # corner layout: periodic -> (nx, ny); walls -> (nx + 1, ny + 1)
    @property
    def corner_shape(self):
        g = self.grid
        return (g.n_x, g.n_y) if g.periodic else (g.n_x + 1, g.n_y + 1)

    @cached_property
    def _corner_ops(self):
        """(Duy, Dvx, P_avg, P_cell) as sparse matrices.

        Duy, Dvx: corner values of du/dy and dv/dx (including mirror ghosts
        at no-slip walls). P_avg: arithmetic mean of the cells touching a
        corner. P_cell: mean over the four corners of a cell.
        """
        g = self.grid
        nx, ny = g.shape
        N = self.N
        cs = self.corner_shape
        Nc = cs[0] * cs[1]
        uid = lambda i, j: i * ny + j            # noqa: E731
        vid = lambda i, j: N + i * ny + j        # noqa: E731
        cid = lambda i, j: i * cs[1] + j         # noqa: E731
        ru, cu, vu = [], [], []
        rv, cv, vv = [], [], []
        ra, ca, va = [], [], []
        for i in range(cs[0]):
            for j in range(cs[1]):
                c = cid(i, j)
                if g.periodic:
                    ru += [c, c]; cu += [uid(i, j), uid(i, (j - 1) % ny)]; vu += [1 / g.hy, -1 / g.hy]
                    rv += [c, c]; cv += [vid(i, j), vid((i - 1) % nx, j)]; vv += [1 / g.hx, -1 / g.hx]
                    cells = [((i - 1) % nx, (j - 1) % ny), (i % nx, (j - 1) % ny),
                             ((i - 1) % nx, j % ny), (i % nx, j % ny)]
                else:
                    # du/dy at x = i hx: faces u[i, j] (above) and u[i, j-1] (below)
                    if 0 < i < nx:
                        if j < ny:
                            ru.append(c); cu.append(uid(i, j)); vu.append(1 / g.hy)
                        else:  # top wall, ghost -u[i, ny-1]
                            ru.append(c); cu.append(uid(i, ny - 1)); vu.append(-1 / g.hy)
                        if j > 0:
                            ru.append(c); cu.append(uid(i, j - 1)); vu.append(-1 / g.hy)
                        else:  # bottom wall, ghost -u[i, 0]
                            ru.append(c); cu.append(uid(i, 0)); vu.append(1 / g.hy)
                    if 0 < j < ny:
                        if i < nx:
                            rv.append(c); cv.append(vid(i, j)); vv.append(1 / g.hx)
                        else:  # right wall, ghost -v[nx-1, j]
                            rv.append(c); cv.append(vid(nx - 1, j)); vv.append(-1 / g.hx)
                        if i > 0:
                            rv.append(c); cv.append(vid(i - 1, j)); vv.append(-1 / g.hx)
                        else:  # left wall, ghost -v[0, j]
                            rv.append(c); cv.append(vid(0, j)); vv.append(1 / g.hx)
                    cells = [(a, b) for a in (i - 1, i) for b in (j - 1, j) if 0 <= a < nx and 0 <= b < ny]
                w = 1.0 / len(cells)
                for a, b in cells:
                    ra.append(c); ca.append(a * ny + b); va.append(w)
        Duy = sp.csr_matrix((vu, (ru, cu)), shape=(Nc, 2 * N))
        Dvx = sp.csr_matrix((vv, (rv, cv)), shape=(Nc, 2 * N))
        P_avg = sp.csr_matrix((va, (ra, ca)), shape=(Nc, N))
        # cell -> its four corners
        rc, cc = [], []
        for i in range(nx):
            for j in range(ny):
                for a in (i, i + 1):
                    for b in (j, j + 1):
                        if g.periodic:
                            rc.append(i * ny + j); cc.append(cid(a % nx, b % ny))
                        else:
                            rc.append(i * ny + j); cc.append(cid(a, b))
        P_cell = sp.csr_matrix((np.full(len(rc), 0.25), (rc, cc)), shape=(N, Nc))
        return Duy, Dvx, P_avg, P_cell

    @cached_property
    def B(self):
        """Strain operator: U -> [S11 (cells); S22 (cells); S12 (corners)]."""
        g = self.grid
        nx, ny = g.shape
        N = self.N
        idx = np.arange(N).reshape(nx, ny)
        rows, cols, vals = [], [], []
        # S11 = (u[i+1] - u[i]) / hx, right neighbour wraps (wall faces are zero)
        nxt = np.roll(idx, -1, axis=0)
        rows += [idx.ravel(), idx.ravel()]
        cols += [nxt.ravel(), idx.ravel()]
        vals += [np.full(N, 1 / g.hx), np.full(N, -1 / g.hx)]
        nxt = np.roll(idx, -1, axis=1)
        rows += [N + idx.ravel(), N + idx.ravel()]
        cols += [N + nxt.ravel(), N + idx.ravel()]
        vals += [np.full(N, 1 / g.hy), np.full(N, -1 / g.hy)]
        B1 = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(2 * N, 2 * N))
        Duy, Dvx, _, _ = self._corner_ops
        B = sp.vstack([B1, 0.5 * (Duy + Dvx)]).tocsr()
        # wall faces are not unknowns
        mask = sp.diags(self.free.astype(float))
        return (B @ mask).tocsr()

    def strains(self, u, v):
        U = np.concatenate([u.ravel(), v.ravel()])
        S = self.B @ U
        N = self.N
        return S[:N], S[N:2 * N], S[2 * N:]

    def corner_viscosity(self, nu_cells):
        _, _, P_avg, _ = self._corner_ops
        return P_avg @ nu_cells.ravel()

    def viscous_matrix(self, nu_cells):
        nu = nu_cells.ravel()
        w = np.concatenate([2 * nu, 2 * nu, 4 * self.corner_viscosity(nu_cells)])
        return (self.B.T @ sp.diags(w) @ self.B).tocsc()

    def viscous_solver(self, nu_cells, dt):
        """LU factors of I + dt K on the free faces; reused while nu and dt repeat."""
        key = (float(dt), nu_cells.tobytes())
        if getattr(self, "_visc_key", None) != key:
            K = self.viscous_matrix(nu_cells)
            fi = self.free_idx
            A = sp.identity(fi.size, format="csc") + dt * K[fi][:, fi]
            self._visc_lu = spla.splu(A.tocsc())
            self._visc_key = key
        return self._visc_lu

    def stress_force(self, tau):
        """Face force -B^T [tau11; tau22; 2 tau12_corner] of a cell tensor field."""
        _, _, P_avg, _ = self._corner_ops
        t12 = P_avg @ (0.5 * (tau[..., 0, 1] + tau[..., 1, 0])).ravel()
        vec = np.concatenate([tau[..., 0, 0].ravel(), tau[..., 1, 1].ravel(), 2 * t12])
        F = -(self.B.T @ vec)
        return F[:self.N].reshape(self.grid.shape), F[self.N:].reshape(self.grid.shape)

    def velocity_gradient(self, u, v):
        """Cell-centered (grad v)_{ab} = d v_a / d x_b, shape (n_x, n_y, 2, 2)."""
        Duy, Dvx, _, P_cell = self._corner_ops
        U = np.concatenate([u.ravel(), v.ravel()]) * self.free
        S11, S22, _ = self.strains(u, v)
        G = np.empty(self.grid.shape + (2, 2))
        G[..., 0, 0] = S11.reshape(self.grid.shape)
        G[..., 1, 1] = S22.reshape(self.grid.shape)
        G[..., 0, 1] = (P_cell @ (Duy @ U)).reshape(self.grid.shape)
        G[..., 1, 0] = (P_cell @ (Dvx @ U)).reshape(self.grid.shape)
        return G

    def strain_rate(self, u, v):
        S11, S22, S12c = self.strains(u, v)
        _, _, _, P_cell = self._corner_ops
        D = np.empty(self.grid.shape + (2, 2))
        D[..., 0, 0] = S11.reshape(self.grid.shape)
        D[..., 1, 1] = S22.reshape(self.grid.shape)
        D[..., 0, 1] = D[..., 1, 0] = (P_cell @ S12c).reshape(self.grid.shape)
        return D

    def dissipation(self, u, v, nu_cells):
        """Per-cell 2 nu |D|^2, with corner shear shared among touching cells.

        Sums (times the cell area) to U^T B^T W B U exactly.
        """
        S11, S22, S12c = self.strains(u, v)
        _, _, P_avg, _ = self._corner_ops
        nu = nu_cells.ravel()
        corner = 4 * self.corner_viscosity(nu_cells) * S12c**2
        cell = 2 * nu * (S11**2 + S22**2) + P_avg.T @ corner
        return cell.reshape(self.grid.shape)

    # -- projection ------------------------------------------------------
    @cached_property
    def _laplace_symbol(self):
        g = self.grid
        kx = np.arange(g.n_x)[:, None]
        ky = np.arange(g.n_y)[None, :]
        if g.periodic:
            lam = -(4 / g.hx**2) * np.sin(np.pi * kx / g.n_x) ** 2 - (4 / g.hy**2) * np.sin(np.pi * ky / g.n_y) ** 2
        else:
            lam = -(4 / g.hx**2) * np.sin(np.pi * kx / (2 * g.n_x)) ** 2 - (4 / g.hy**2) * np.sin(np.pi * ky / (2 * g.n_y)) ** 2
        lam = lam.copy()
        lam[0, 0] = 1.0
        return lam

    def solve_poisson(self, rhs):
        """Mean-free solution of the discrete Laplace equation on cells."""
        lam = self._laplace_symbol
        if self.grid.periodic:
            h = sfft.fft2(rhs) / lam
            h[0, 0] = 0.0
            return sfft.ifft2(h).real
        h = sfft.dctn(rhs, type=2, norm="ortho") / lam
        h[0, 0] = 0.0
        return sfft.idctn(h, type=2, norm="ortho")

    def gradient(self, p):
        g = self.grid
        mu, mv = g.face_mask()
        gx = (p - np.roll(p, 1, axis=0)) / g.hx * mu
        gy = (p - np.roll(p, 1, axis=1)) / g.hy * mv
        return gx, gy

    def project(self, u, v, dt=1.0):
        """Remove the gradient part; returns (u, v, p) with p scaled by 1/dt.

        Wall faces are zeroed first, so any input yields an admissible field.
        """
        mu, mv = self.grid.face_mask()
        u, v = u * mu, v * mv
        phi = self.solve_poisson(divergence(self.grid, u, v))
        gx, gy = self.gradient(phi)
        return u - gx, v - gy, phi / dt

    # -- advection -------------------------------------------------------
    def advection(self, u, v):
        """Centered conservative momentum advection on free faces."""
        g = self.grid
        uc = 0.5 * (u + np.roll(u, -1, axis=0))
        vc = 0.5 * (v + np.roll(v, -1, axis=1))
        uv = 0.5 * (u + np.roll(u, 1, axis=1)) * 0.5 * (v + np.roll(v, 1, axis=0))
        au = (uc**2 - np.roll(uc, 1, axis=0) ** 2) / g.hx + (np.roll(uv, -1, axis=1) - uv) / g.hy
        av = (np.roll(uv, -1, axis=0) - uv) / g.hx + (vc**2 - np.roll(vc, 1, axis=1) ** 2) / g.hy
        mu, mv = g.face_mask()
        return au * mu, av * mv

    def kinetic_energy(self, u, v):
        return 0.5 * self.grid.cell_area * float(np.sum(u**2) + np.sum(v**2))

    def forcing_on_faces(self, f_cells):
        fu = face_average(self.grid, f_cells[..., 0], 0)
        fv = face_average(self.grid, f_cells[..., 1], 1)
        return fu, fv

    def power(self, u, v, f_cells):
        fu, fv = self.forcing_on_faces(f_cells)
        return self.grid.cell_area * float(np.sum(fu * u) + np.sum(fv * v))

    def cfl_number(self, u, v, dt):
        g = self.grid
        return dt * (np.max(np.abs(u)) / g.hx + np.max(np.abs(v)) / g.hy)


def momentum_step(state: FlowState, ops: FlowOperators, dt, nu_cells, tau_el=None,
                  f_cells=None, cfl_max: float = 0.9) -> FlowState:
    """Advance (u, v) by one step.

    Explicit centered advection, elastic stress divergence and body force;
    implicit viscous solve with nu frozen at the given cell values; exact
    projection onto discretely divergence-free fields.
    """
    cfl = ops.cfl_number(state.u, state.v, dt)
    if cfl > cfl_max:
        raise CFLError(f"advective CFL number {cfl:.3f} exceeds {cfl_max}")
    au, av = ops.advection(state.u, state.v)
    ru = state.u - dt * au
    rv = state.v - dt * av
    if tau_el is not None:
        fu, fv = ops.stress_force(tau_el)
        ru = ru + dt * fu
        rv = rv + dt * fv
    if f_cells is not None:
        fu, fv = ops.forcing_on_faces(f_cells)
        ru = ru + dt * fu
        rv = rv + dt * fv
    rhs = np.concatenate([ru.ravel(), rv.ravel()])
    fi = ops.free_idx
    sol = np.zeros_like(rhs)
    sol[fi] = ops.viscous_solver(nu_cells, dt).solve(rhs[fi])
    N = ops.N
    u = sol[:N].reshape(ops.grid.shape)
    v = sol[N:].reshape(ops.grid.shape)
    u, v, p = ops.project(u, v, dt)
    return replace(state, u=u, v=v, p=p)


def strain_rate(state: FlowState, ops: FlowOperators):
    return ops.strain_rate(state.u, state.v)

"""Finite volumes on the configuration ball and the Fokker-Planck q-operator.

Fields carry the q-indices in their last two axes, ``(..., n_r, n_a)``, so a
whole spatial grid of densities is processed in one call. Temperatures then
have shape ``(...)``.

Diffusive face fluxes use the exponentially fitted form

    J = -4 theta M_f (phi_hat_k - phi_hat_i) / delta,  phi_hat = phi exp(ell),

with ``M_f`` the geometric mean of exp(-ell) on the two sides, so that a
density proportional to exp(-ell) is an exact discrete steady state. The
innermost ring touches the origin through a face of zero length, which
therefore carries no flux. The outer face carries none either.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .potentials import PotentialSpec, eval_potential, maxwellian  # noqa: F401  (re-export)

log = logging.getLogger(__name__)

# exp() arguments are clipped here; fluxes are invariant under the shared
# rescaling this implies for any realistic grid.
_EXP_CLIP = 350.0
_TINY = 1e-300


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class QGrid:
    n_r: int
    n_a: int
    b: float

    def __post_init__(self):
        if self.n_r < 2 or self.n_a < 3:
            raise ValueError("need n_r >= 2 and n_a >= 3")

    @property
    def dr(self) -> float:
        return np.sqrt(self.b) / self.n_r

    @property
    def da(self) -> float:
        return 2.0 * np.pi / self.n_a

    @cached_property
    def r_c(self):
        return (np.arange(self.n_r) + 0.5) * self.dr

    @cached_property
    def r_f(self):
        return np.arange(self.n_r + 1) * self.dr

    @cached_property
    def a_c(self):
        return (np.arange(self.n_a) + 0.5) * self.da

    @cached_property
    def a_f(self):
        return np.arange(self.n_a + 1) * self.da

    @cached_property
    def area(self):
        """Measure r_i dr da of a cell in ring i (exact for the annular sector)."""
        return self.r_c * self.dr * self.da

    @cached_property
    def s_c(self):
        return 0.5 * self.r_c**2

    @cached_property
    def q(self):
        """Cell-center coordinates, shape (n_r, n_a, 2)."""
        r = self.r_c[:, None]
        return np.stack([r * np.cos(self.a_c), r * np.sin(self.a_c)], axis=-1)

    @cached_property
    def qq(self):
        """q (x) q at cell centers, shape (n_r, n_a, 2, 2)."""
        q = self.q
        return q[..., :, None] * q[..., None, :]

    @cached_property
    def arc_tensor(self):
        """Integral of e_r (x) e_r over the angular span of each cell, (n_a, 2, 2)."""
        lo, hi = self.a_f[:-1], self.a_f[1:]
        half = 0.5 * (hi - lo)
        ds2 = 0.25 * (np.sin(2 * hi) - np.sin(2 * lo))
        dc2 = 0.25 * (np.cos(2 * hi) - np.cos(2 * lo))
        t = np.empty((self.n_a, 2, 2))
        t[:, 0, 0] = half + ds2
        t[:, 1, 1] = half - ds2
        t[:, 0, 1] = t[:, 1, 0] = -dc2
        return t

    def integrate(self, field, weight=None):
        """Midpoint quadrature over D of ``field * weight`` on the last two axes."""
        f = np.asarray(field, dtype=float)
        if weight is not None:
            f = f * weight
        return np.einsum("...ij,i->...", f, self.area)


def integrate_over_D(field, qgrid: QGrid, weight=None):
    """Quadrature of ``field * weight`` over the ball.

    ``weight`` may be an array broadcastable to (n_r, n_a) or a callable of
    the cell-center coordinates ``q`` with shape (n_r, n_a, 2).
    """
    if callable(weight):
        weight = weight(qgrid.q)
    return qgrid.integrate(field, weight)


@dataclass
class QFluxes:
    radial: np.ndarray   # (..., n_r + 1, n_a) mass rate through r = r_f[i], outward positive
    angular: np.ndarray  # (..., n_r, n_a) mass rate from cell j to cell j + 1

    def divergence(self):
        """Net outflow of every cell."""
        return (self.radial[..., 1:, :] - self.radial[..., :-1, :]
                + self.angular - np.roll(self.angular, 1, axis=-1))


class ConfigSpace:
    """The q-grid bound to a potential, with ring-wise potential values cached."""

    def __init__(self, spec: PotentialSpec, qgrid: QGrid):
        if not np.isclose(spec.b, qgrid.b):
            raise ValueError("grid radius and potential b disagree")
        self.spec = spec
        self.grid = qgrid
        g = qgrid
        self.Ue, self.dUe, self.d2Ue, self.Ueta, self.dUeta = eval_potential(spec, g.s_c)
        # radial interior faces i + 1/2 (between rings i and i + 1)
        self.cr = g.r_f[1:-1] * g.da / g.dr
        # angular faces inside ring i
        self.ca = g.dr / (g.r_c * g.da)
        # face tensors (integral of n (x) q over the face) for radial faces
        self.S_rad = (g.r_f[1:-1] ** 2)[:, None, None, None] * g.arc_tensor[None]
        self.S_out = g.b * g.arc_tensor

    # -- helpers ---------------------------------------------------------
    def ell(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.Ue / theta[..., None] + self.Ueta

    def _weights(self, theta):
        ell = self.ell(theta)
        half = np.clip(0.5 * np.diff(ell, axis=-1), -_EXP_CLIP, _EXP_CLIP)
        return np.exp(half), np.exp(-half)

    def maxwellian(self, theta):
        return maxwellian(self.spec, self.grid, theta)

    # -- fluxes ----------------------------------------------------------
    def fluxes(self, phi, theta) -> QFluxes:
        phi = np.asarray(phi, dtype=float)
        theta = np.asarray(theta, dtype=float)
        ep, em = self._weights(theta)
        four_theta = 4.0 * theta[..., None, None]
        inner = (phi[..., 1:, :] * ep[..., :, None] - phi[..., :-1, :] * em[..., :, None])
        jr = np.zeros(phi.shape[:-2] + (self.grid.n_r + 1, self.grid.n_a))
        jr[..., 1:-1, :] = -four_theta * self.cr[:, None] * inner
        ja = -four_theta * self.ca[:, None] * (np.roll(phi, -1, axis=-1) - phi)
        return QFluxes(jr, ja)

    def _fitted_pairs(self, phi, theta):
        """Face values (A, B) with J = -4 theta c (A - B), for all interior faces."""
        ep, em = self._weights(theta)
        A_r = phi[..., 1:, :] * ep[..., :, None]
        B_r = phi[..., :-1, :] * em[..., :, None]
        A_a = np.roll(phi, -1, axis=-1)
        return (A_r, B_r), (A_a, phi)

    # -- implicit step ---------------------------------------------------
    def _radial_drift_normals(self, grad_v):
        """Integral of w.n over each interior radial face, w = (grad v) q."""
        g = self.grid
        G = np.asarray(grad_v, dtype=float)
        return np.einsum("...ab,jab->...j", G, g.arc_tensor)[..., None, :] * (g.r_f[1:-1] ** 2)[:, None]

    def _drift_factors(self, theta):
        """Face weights turning an upwind cell value into a face value.

        Upwinding acts on phi / M; the face then carries the log-mean of the
        two Maxwellian values. Outflow from ring i uses phi_i (1 - e^-d)/d,
        inflow from ring i+1 uses phi_{i+1} (e^d - 1)/d, d = ell_{i+1} - ell_i.
        """
        d = np.diff(self.ell(theta), axis=-1)
        small = np.abs(d) < 1e-8
        safe = np.where(small, 1.0, d)
        out = np.where(small, 1.0 - 0.5 * d, -np.expm1(-safe) / safe)
        inn = np.where(small, 1.0 + 0.5 * d, np.expm1(safe) / safe)
        return out[..., :, None], inn[..., :, None]

    def drift_face_values(self, phi, theta, wn_r):
        """Radial face densities used by the drift and by the momentum stress.

        Where the face velocity vanishes the fitted value (A - B - dphi)/d is
        used, which equals both upwind choices at equilibrium.
        """
        phi = np.asarray(phi, dtype=float)
        out, inn = self._drift_factors(theta)
        lo, hi = phi[..., :-1, :], phi[..., 1:, :]
        d = np.diff(self.ell(theta), axis=-1)[..., :, None]
        small = np.abs(d) < 1e-8
        safe = np.where(small, 1.0, d)
        fa = np.where(small, 0.5 + 0.125 * d, np.expm1(0.5 * safe) / safe)
        fb = np.where(small, 0.5 - 0.125 * d, -np.expm1(-0.5 * safe) / safe)
        fitted = hi * fa + lo * fb
        return np.where(wn_r > 0, lo * out, np.where(wn_r < 0, hi * inn, fitted))

    def _drift_fluxes(self, phi, grad_v, theta):
        """Drift mass rates: M-weighted upwind radially, plain upwind in angle."""
        g = self.grid
        G = np.asarray(grad_v, dtype=float)
        wn_r = self._radial_drift_normals(G)
        jr = np.zeros(phi.shape[:-2] + (g.n_r + 1, g.n_a))
        jr[..., 1:-1, :] = wn_r * self.drift_face_values(phi, theta, wn_r)
        # angular faces at a_f[j+1]: integral of e_a^T G e_r r dr = (e_a^T G e_r) r_c dr
        af = g.a_f[1:]
        er = np.stack([np.cos(af), np.sin(af)], axis=-1)
        ea = np.stack([-np.sin(af), np.cos(af)], axis=-1)
        gaer = np.einsum("ja,...ab,jb->...j", ea, G, er)
        wn_a = gaer[..., None, :] * (g.r_c * g.dr)[:, None]
        up_a = np.where(wn_a > 0, phi, np.roll(phi, -1, axis=-1))
        ja = wn_a * up_a
        return QFluxes(jr, ja), wn_r, wn_a

    def drift_rate_bound(self, grad_v, theta):
        """Largest outflow rate (per unit mass) of the drift over all cells."""
        g = self.grid
        _, wn_r, wn_a = self._drift_fluxes(np.zeros(np.shape(grad_v)[:-2] + (g.n_r, g.n_a)), grad_v, theta)
        fo, fi = self._drift_factors(theta)
        rad_out = np.maximum(wn_r, 0) * fo
        rad_in = np.maximum(-wn_r, 0) * fi
        out = np.zeros(np.broadcast_shapes(wn_a.shape, rad_out.shape[:-2] + (g.n_r, g.n_a)))
        out[..., :-1, :] += rad_out
        out[..., 1:, :] += rad_in
        out += np.maximum(wn_a, 0)
        out += np.roll(np.maximum(-wn_a, 0), 1, axis=-1)
        return float(np.max(out / g.area[:, None])) if out.size else 0.0

    def momentum_stress(self, phi, theta, grad_v):
        """(tau, eta) built from the drift face values.

        tau = theta sum_f phi_f d_ell S_f + theta mean(phi_outer) b T and
        eta = theta sum_f phi_f d_Ueta S_f.  The outer ring enters only through
        its angular mean: that part is isotropic, so it keeps tau = theta n_P I
        at the Maxwellian but does no work on a divergence-free flow.  The
        anisotropic rest has no matching drift flux (the outer face is closed)
        and would leak energy.  G : tau then equals the elastic energy the
        drift moves plus G : eta, up to tr G.
        """
        phi = np.asarray(phi, dtype=float)
        theta = np.asarray(theta, dtype=float)
        wn_r = self._radial_drift_normals(grad_v)
        pf = self.drift_face_values(phi, theta, wn_r)
        dl = np.diff(self.ell(theta), axis=-1)
        th = theta[..., None, None]
        tau = np.einsum("...ij,...i,ijab->...ab", pf, dl, self.S_rad)
        outer = np.mean(phi[..., -1, :], axis=-1)
        tau += outer[..., None, None] * self.S_out.sum(axis=0)
        eta = np.einsum("...ij,i,ijab->...ab", pf, np.diff(self.Ueta), self.S_rad)
        return tau * th, eta * th

    def diffusion_solve(self, rhs, theta, dt):
        """Solve (A/dt + L_theta) phi = (A/dt) rhs ring-by-ring in Fourier space."""
        g = self.grid
        theta = np.asarray(theta, dtype=float)
        batch = rhs.shape[:-2]
        nb = int(np.prod(batch)) if batch else 1
        th = np.broadcast_to(theta, batch).reshape(nb)
        ep, em = self._weights(th)                  # (nb, n_r - 1)
        c = 4.0 * th[:, None] * self.cr             # (nb, n_r - 1)
        up = -c * ep                                # coefficient of phi_{i+1} in row i
        lo = -c * em                                # coefficient of phi_i in row i+1
        nk = g.n_a // 2 + 1
        lam = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(nk) / g.n_a)
        mass = g.area / dt
        diag = np.empty((g.n_r, nb, nk))
        base = np.broadcast_to(mass, (nb, g.n_r)).copy()
        base[:, :-1] += c * em
        base[:, 1:] += c * ep
        diag[:] = base.T[:, :, None] + (4.0 * th[None, :, None] * self.ca[:, None, None]) * lam[None, None, :]
        f = np.fft.rfft(rhs.reshape(nb, g.n_r, g.n_a), axis=-1)
        d = np.transpose(f, (1, 0, 2)) * mass[:, None, None]
        # Thomas sweep over rings, vectorized over cells and modes
        cp = np.empty((g.n_r - 1, nb, nk))
        dp = np.empty_like(d)
        beta = diag[0]
        cp[0] = up[:, 0, None] / beta
        dp[0] = d[0] / beta
        for i in range(1, g.n_r):
            a = lo[:, i - 1, None]
            beta = diag[i] - a * cp[i - 1]
            if i < g.n_r - 1:
                cp[i] = up[:, i, None] / beta
            dp[i] = (d[i] - a * dp[i - 1]) / beta
        x = np.empty_like(d)
        x[-1] = dp[-1]
        for i in range(g.n_r - 2, -1, -1):
            x[i] = dp[i] - cp[i] * x[i + 1]
        out = np.fft.irfft(np.transpose(x, (1, 0, 2)), n=g.n_a, axis=-1)
        if not np.all(np.isfinite(out)):
            raise SolverFailure("configuration-space diffusion solve produced non-finite values")
        return out.reshape(rhs.shape)

    def step(self, phi, grad_v, theta, dt, cfl: float = 0.9):
        """One split q-substep: explicit upwind drift, then implicit diffusion.

        Returns ``(phi_new, clipped_mass)`` where ``clipped_mass`` is the total
        mass removed by resetting negative round-off undershoots to zero.
        """
        g = self.grid
        phi = np.asarray(phi, dtype=float)
        if grad_v is not None and np.any(grad_v):
            rate = self.drift_rate_bound(grad_v, theta)
            n_sub = max(1, int(np.ceil(rate * dt / cfl)))
            h = dt / n_sub
            for _ in range(n_sub):
                fl, _, _ = self._drift_fluxes(phi, grad_v, theta)
                phi = phi - h * fl.divergence() / g.area[:, None]
        out = self.diffusion_solve(phi, theta, dt)
        neg = out < 0
        clipped = 0.0
        if neg.any():
            clipped = float(-np.sum(np.where(neg, out, 0.0) * g.area[:, None]))
            out = np.where(neg, 0.0, out)
            if clipped > 1e-12:
                log.warning("q-step clipped %.3e of mass", clipped)
        return out, clipped

    # -- integrals -------------------------------------------------------
    def number_density(self, phi):
        return self.grid.integrate(phi)

    def kramers(self, phi, theta):
        """(n_P, tau, heat_source, eta_coupling) for every leading index."""
        g = self.grid
        phi = np.asarray(phi, dtype=float)
        theta = np.asarray(theta, dtype=float)
        nP = g.integrate(phi)
        (A_r, B_r), _ = self._fitted_pairs(phi, theta)
        W = (A_r - B_r) - (phi[..., 1:, :] - phi[..., :-1, :])
        tau = np.einsum("...ij,ijab->...ab", W, self.S_rad)
        tau += np.einsum("...j,jab->...ab", phi[..., -1, :], self.S_out)
        tau *= theta[..., None, None]
        dU = np.diff(self.Ue)
        heat = 4.0 * theta * np.einsum("...ij,i->...", A_r - B_r, self.cr * dU)
        eta = theta[..., None, None] * np.einsum("...ij,i,ijab->...ab", phi, g.area * self.dUeta, g.qq)
        return nP, tau, heat, eta

    def fisher_production(self, phi, theta):
        """Discrete  4 theta int M |grad phi_hat|^2 / phi_hat  (face sum, >= 0 termwise)."""
        phi = np.asarray(phi, dtype=float)
        theta = np.asarray(theta, dtype=float)
        (A_r, B_r), (A_a, B_a) = self._fitted_pairs(phi, theta)
        tr = _entropy_pair(A_r, B_r)
        ta = _entropy_pair(A_a, B_a)
        return 4.0 * theta * (np.einsum("...ij,i->...", tr, self.cr)
                              + np.einsum("...ij,i->...", ta, self.ca))

    def flux_norm(self, phi, theta):
        """Discrete  int |j|^2 / (theta phi)  with phi at a face taken as the
        logarithmic-mean reconstruction consistent with the fitted flux."""
        phi = np.asarray(phi, dtype=float)
        theta = np.asarray(theta, dtype=float)
        fl = self.fluxes(phi, theta)
        (A_r, B_r), (A_a, B_a) = self._fitted_pairs(phi, theta)
        g = self.grid
        th = theta[..., None, None]
        # |J|^2 L delta / (theta phi_f), with J L the stored mass rate
        jr = fl.radial[..., 1:-1, :]
        lr = (g.r_f[1:-1] * g.da)[:, None]
        tot = np.sum(_safe_div(jr**2 * g.dr / lr, th * _log_mean(A_r, B_r)), axis=(-2, -1))
        la = g.dr
        da = (g.r_c * g.da)[:, None]
        tot = tot + np.sum(_safe_div(fl.angular**2 * da / la, th * _log_mean(A_a, B_a)), axis=(-2, -1))
        return tot

    def up_dissipation(self, phi, theta):
        """int theta |grad phi|^2/phi + phi |grad U_e|^2 / theta over D."""
        g = self.grid
        phi = np.asarray(phi, dtype=float)
        theta = np.asarray(theta, dtype=float)
        tr = _entropy_pair(phi[..., 1:, :], phi[..., :-1, :])
        ta = _entropy_pair(np.roll(phi, -1, axis=-1), phi)
        grad_part = theta * (np.einsum("...ij,i->...", tr, self.cr) + np.einsum("...ij,i->...", ta, self.ca))
        gradU2 = self.dUe**2 * 2.0 * g.s_c
        pot_part = np.einsum("...ij,i->...", phi, g.area * gradU2) / theta
        return grad_part + pot_part

    def boundary_trace(self, phi):
        g = self.grid
        outer = np.asarray(phi, dtype=float)[..., -1, :]
        ring = np.sqrt(g.b) * g.da
        t_phi = np.sum(outer, axis=-1) * ring
        t_phiU = np.sum(outer, axis=-1) * ring * self.dUe[-1]
        return t_phi, t_phiU

    def stress_second_form(self, phi, theta):
        """theta n_P I + theta int M (grad phi_hat) (x) q with cell-centered
        differences of phi_hat (one-sided on the first and last ring)."""
        g = self.grid
        phi = np.asarray(phi, dtype=float)
        theta = np.asarray(theta, dtype=float)
        ell = self.ell(theta)[..., :, None]
        n_r = g.n_r
        # M_i * phi_hat_k = phi_k exp(ell_k - ell_i): no overflow for moderate gaps
        def shifted(k_slice, i_slice):
            d = np.clip(ell[..., k_slice, :] - ell[..., i_slice, :], -_EXP_CLIP, _EXP_CLIP)
            return phi[..., k_slice, :] * np.exp(d)
        Mdr = np.empty_like(phi)
        Mdr[..., 1:-1, :] = (shifted(slice(2, n_r), slice(1, n_r - 1)) - shifted(slice(0, n_r - 2), slice(1, n_r - 1))) / (2 * g.dr)
        Mdr[..., :1, :] = (shifted(slice(1, 2), slice(0, 1)) - phi[..., :1, :]) / g.dr
        Mdr[..., -1:, :] = (phi[..., -1:, :] - shifted(slice(n_r - 2, n_r - 1), slice(n_r - 1, n_r))) / g.dr
        Mda = (np.roll(phi, -1, axis=-1) - np.roll(phi, 1, axis=-1)) / (2 * g.da * g.r_c[:, None])
        er = np.stack([np.cos(g.a_c), np.sin(g.a_c)], axis=-1)
        ea = np.stack([-np.sin(g.a_c), np.cos(g.a_c)], axis=-1)
        grad = Mdr[..., None] * er + Mda[..., None] * ea        # (..., n_r, n_a, 2)
        integrand = grad[..., :, None] * g.q[..., None, :]
        tens = np.einsum("...ijab,i->...ab", integrand, g.area)
        nP = g.integrate(phi)
        eye = np.eye(2)
        return theta[..., None, None] * (nP[..., None, None] * eye + tens)


def _entropy_pair(A, B):
    """(A - B)(log A - log B) >= 0, with zero densities floored."""
    A = np.maximum(A, _TINY)
    B = np.maximum(B, _TINY)
    return (A - B) * (np.log(A) - np.log(B))


def _log_mean(A, B):
    A = np.maximum(A, _TINY)
    B = np.maximum(B, _TINY)
    d = np.log(A) - np.log(B)
    small = np.abs(d) < 1e-12
    return np.where(small, 0.5 * (A + B), (A - B) / np.where(small, 1.0, d))


def _safe_div(num, den):
    return np.where(num == 0, 0.0, num / np.where(den == 0, 1.0, den))


# ---------------------------------------------------------------------------
# functional front-end


def flux_q(field, theta, spec: PotentialSpec, qgrid: QGrid) -> QFluxes:
    return ConfigSpace(spec, qgrid).fluxes(field, theta)


def q_step(field, grad_v, theta, dt, spec: PotentialSpec, qgrid: QGrid):
    phi, _ = ConfigSpace(spec, qgrid).step(field, grad_v, theta, dt)
    return phi


def kramers_integrals(field, theta, spec: PotentialSpec, qgrid: QGrid):
    return ConfigSpace(spec, qgrid).kramers(field, theta)


def stress_identity_residual(field, theta, spec: PotentialSpec, qgrid: QGrid):
    """Frobenius distance between the force-form stress and the rescaled-density form."""
    cs = ConfigSpace(spec, qgrid)
    _, tau, _, _ = cs.kramers(field, theta)
    other = cs.stress_second_form(field, theta)
    return np.sqrt(np.sum((tau - other) ** 2, axis=(-2, -1)))


def boundary_trace(field, spec: PotentialSpec, qgrid: QGrid):
    return ConfigSpace(spec, qgrid).boundary_trace(field)

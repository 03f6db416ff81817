"""Energy, entropy and a priori quantities evaluated on simulation states.

Every face-based term below reuses the stencil the solver applies to the
same field, so an identity the scheme respects shows up at round-off level
and one it only approximates shows up at truncation-error level.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .heat import _trapezoid_weights, conduction_entropy_rate
from .model import Model, State
from .transport import diffusion_entropy_rate, divergence

NORM_LABELS = (
    "theta_Lp",
    "log_theta_W12",
    "theta_beta_half_W12",
    "fisher_x",
    "fisher_q_rescaled",
    "flux_norm_q",
    "up_dissipation",
)

COLUMNS = (
    "t", "kinetic", "heat_content", "elastic", "entropic", "mixing", "H_theta",
    "total_E", "entropy_total", "xi_total", "energy_eq_residual",
    "energy_balance_residual", "min_theta", "min_phi", "nP_min", "nP_max",
) + NORM_LABELS


def xlogx(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def H_fun(s):
    """s - 1 - log s."""
    return s - 1.0 - np.log(s)


def F_fun(s):
    """s (log s - 1) + 1, equal to 1 at s = 0."""
    return xlogx(s) - s + 1.0


def cell_kinetic(model: Model, u, v):
    """Half the squared speed per cell; sums to the face-based kinetic energy."""
    return 0.25 * (u**2 + np.roll(u, -1, axis=0) ** 2 + v**2 + np.roll(v, -1, axis=1) ** 2)


@dataclass
class Energies:
    psi: np.ndarray
    e: np.ndarray
    E: np.ndarray
    eta: np.ndarray
    identity_residual: float

    def totals(self, cell_area):
        return {k: float(np.sum(getattr(self, k)) * cell_area) for k in ("psi", "e", "E", "eta")}


def _q_moments(model: Model, phi):
    cs = model.cspace
    g = cs.grid
    Ue_phi = g.integrate(phi, cs.Ue[:, None])
    Ueta_phi = g.integrate(phi, cs.Ueta[:, None])
    plogp = g.integrate(xlogx(phi))
    return Ue_phi, Ueta_phi, plogp


def energies(model: Model, state: State) -> Energies:
    theta = state.theta
    if np.any(theta <= 0):
        raise ValueError("temperature must be positive")
    Ue_phi, Ueta_phi, plogp = _q_moments(model, state.phi)
    logt = np.log(theta)
    psi = -theta * (logt - 1.0) + Ue_phi + theta * (Ueta_phi + plogp)
    e = theta + Ue_phi
    E = cell_kinetic(model, state.flow.u, state.flow.v) + e
    eta = logt - (Ueta_phi + plogp)
    ident = float(np.max(np.abs(psi - (e - eta * theta)) / np.maximum(1.0, np.abs(psi))))
    return Energies(psi, e, E, eta, ident)


def entropy_production(model: Model, state: State):
    """Per-cell entropy production split into its four nonnegative parts."""
    theta = state.theta
    ops = model.flow_ops
    nu = model.mat.viscosity(theta)
    visc = ops.dissipation(state.flow.u, state.flow.v, nu) / theta
    cond = conduction_entropy_rate(model.xgrid, theta, model.mat)
    xfish = diffusion_entropy_rate(model.xgrid, state.phi, theta, model.q_weights())
    qfish = model.cspace.fisher_production(state.phi, theta)
    parts = {"viscous": visc, "conduction": cond, "x_fisher": xfish, "q_fisher": qfish}
    parts["total"] = visc + cond + xfish + qfish
    return parts


def energy_terms(model: Model, state: State):
    """Spatially integrated energy and entropy quantities of one state."""
    A = model.xgrid.cell_area
    g = model.qgrid
    phi = state.phi
    Ue_phi, Ueta_phi, plogp = _q_moments(model, phi)
    theta = state.theta
    mix = g.integrate(F_fun(phi))
    kin = model.flow_ops.kinetic_energy(state.flow.u, state.flow.v)
    out = {
        "kinetic": kin,
        "heat_content": float(np.sum(theta)) * A,
        "elastic": float(np.sum(Ue_phi)) * A,
        "entropic": float(np.sum(Ueta_phi)) * A,
        "mixing": float(np.sum(mix)) * A,
        "H_theta": float(np.sum(H_fun(theta))) * A,
        "entropy_total": float(np.sum(np.log(theta) - Ueta_phi - plogp)) * A,
    }
    out["total_E"] = kin + out["heat_content"] + out["elastic"]
    out["eq_lhs_state"] = kin + out["H_theta"] + out["elastic"] + out["entropic"] + out["mixing"]
    return out


def xi_rate(model: Model, state: State) -> float:
    return float(np.sum(entropy_production(model, state)["total"])) * model.xgrid.cell_area


def force_power(model: Model, state: State) -> float:
    if not model.has_forcing:
        return 0.0
    return model.flow_ops.power(state.flow.u, state.flow.v, model.f_cells)


# ---------------------------------------------------------------------------
# norms


def _grad_sq(grid, f):
    """Integral of |grad f|^2 from interior face differences."""
    mu, mv = grid.face_mask()
    dx = (f - np.roll(f, 1, axis=0)) / grid.hx * mu
    dy = (f - np.roll(f, 1, axis=1)) / grid.hy * mv
    return float(np.sum(dx**2) + np.sum(dy**2)) * grid.cell_area


def w12_norm(grid, f):
    return float(np.sqrt(np.sum(f**2) * grid.cell_area + _grad_sq(grid, f)))


def apriori_norms(model: Model, state: State, theta_max: float):
    g = model.xgrid
    A = g.cell_area
    theta = state.theta
    beta = model.mat.beta
    p = 2.0 / 3.0 + beta
    phi = state.phi
    cs = model.cspace
    out = {
        "theta_Lp": float((np.sum(theta**p) * A) ** (1.0 / p)),
        "log_theta_W12": w12_norm(g, np.log(theta)),
        "theta_beta_half_W12": w12_norm(g, theta ** (beta / 2.0)),
        "fisher_x": float(np.sum(diffusion_entropy_rate(g, phi, theta, model.q_weights()))) * A,
        "fisher_q_rescaled": float(np.sum(cs.fisher_production(phi, theta) / 4.0)) * A,
        "flux_norm_q": float(np.sum(cs.flux_norm(phi, theta))) * A,
    }
    inside = theta <= theta_max
    out["up_dissipation"] = float(np.sum(np.where(inside, cs.up_dissipation(phi, theta), 0.0))) * A
    return out


def sobolev_constant(grid, n_modes: int = 6):
    """Largest ratio ||g||_{L^6}^2 / ||g||_{W^{1,2}}^2 over a fixed probe family.

    The family holds constants, offset cosine modes and Gaussian bumps of
    several widths, all sampled on the grid.
    """
    X, Y = grid.centers()
    A = grid.cell_area
    probes = [np.ones(grid.shape)]
    for k in range(1, n_modes + 1):
        c = np.cos(np.pi * k * X / grid.L_x) * np.cos(np.pi * k * Y / grid.L_y)
        probes += [c, 1.0 + 0.5 * c]
    for w in np.geomspace(grid.h, max(grid.L_x, grid.L_y), 8):
        probes.append(np.exp(-((X - 0.5 * grid.L_x) ** 2 + (Y - 0.5 * grid.L_y) ** 2) / (2 * w * w)))
    best = 0.0
    for f in probes:
        l6 = (np.sum(np.abs(f) ** 6) * A) ** (1.0 / 3.0)
        best = max(best, l6 / w12_norm(grid, f) ** 2)
    return best


def interpolation_chain(grid, thetas, times, beta):
    """Space-time sides of the L^{2/3+beta} interpolation estimate.

    Returns (lhs, middle, rhs, C_S) with
      lhs    = int_0^T int theta^{2/3+beta}
      middle = sup_t ||theta||_1^{2/3} * int_0^T ||theta^{beta/2}||_{L^6}^2
      rhs    = C_S * sup_t ||theta||_1^{2/3} * int_0^T ||theta^{beta/2}||_{W^{1,2}}^2
    """
    A = grid.cell_area
    w = _trapezoid_weights(times)
    p = 2.0 / 3.0 + beta
    lhs = sum(wi * np.sum(th**p) * A for wi, th in zip(w, thetas))
    l1 = max(np.sum(np.abs(th)) * A for th in thetas)
    l6 = sum(wi * (np.sum(th ** (3 * beta)) * A) ** (1.0 / 3.0) for wi, th in zip(w, thetas))
    w12 = sum(wi * w12_norm(grid, th ** (beta / 2)) ** 2 for wi, th in zip(w, thetas))
    C_S = sobolev_constant(grid)
    return float(lhs), float(l1 ** (2 / 3) * l6), float(C_S * l1 ** (2 / 3) * w12), C_S


def temperature_floor(times, min_thetas, theta_min0):
    """Smallest alpha >= 0 with min theta(t) >= theta_min0 exp(-alpha t) on the
    record, and the floor theta_min0 exp(-alpha T) it implies.

    The analytic alpha depends on sup-norm constants of the potential that a
    run cannot observe, so the rate is read off the run instead.
    """
    t = np.asarray(times, dtype=float)
    m = np.asarray(min_thetas, dtype=float)
    if np.any(m <= 0):
        return float("inf"), 0.0
    pos = t > 0
    alpha = float(np.max(np.log(theta_min0 / m[pos]) / t[pos], initial=0.0))
    alpha = max(alpha, 0.0)
    return alpha, float(theta_min0 * np.exp(-alpha * t.max()))


# ---------------------------------------------------------------------------
# running audit


@dataclass
class AuditAccumulators:
    """Everything the audit needs beyond the current state.

    Stored in checkpoints so an offline check reproduces the in-loop row.
    """

    E0: float = 0.0
    eq0: float = 0.0
    xi_total: float = 0.0
    fv_total: float = 0.0
    xi_prev: float = 0.0
    fv_prev: float = 0.0
    nP_lo: float = 0.0
    nP_hi: float = 0.0
    mass0: float = 0.0
    theta_min0: float = 0.0
    theta_max: float = 0.0

    def to_array(self):
        return np.array([getattr(self, f.name) for f in fields(self)], dtype="<f8")

    @classmethod
    def from_array(cls, arr):
        names = [f.name for f in fields(cls)]
        if len(arr) != len(names):
            raise ValueError("accumulator block has the wrong length")
        return cls(**{n: float(x) for n, x in zip(names, arr)})


@dataclass
class ThermoReport:
    t: float
    kinetic: float
    heat_content: float
    elastic: float
    entropic: float
    mixing: float
    H_theta: float
    total_E: float
    entropy_total: float
    xi_total: float
    energy_eq_residual: float
    energy_balance_residual: float
    min_theta: float
    min_phi: float
    nP_min: float
    nP_max: float
    norm_bounds: dict = field(default_factory=dict)
    xi_rate: float = 0.0
    xi_min_cell: float = 0.0
    identity_residual: float = 0.0
    max_divergence: float = 0.0
    polymer_mass: float = 0.0

    def as_row(self):
        d = asdict(self)
        d.update(self.norm_bounds)
        return [d[c] for c in COLUMNS]


class ThermoAudit:
    """Builds ThermoReports and advances the time-integrated quantities."""

    def __init__(self, model: Model, acc: AuditAccumulators | None = None):
        self.model = model
        self.acc = acc
        self.last_xi_min = 0.0
        self.last_xi_max = 0.0

    def initialise(self, state: State, theta_max: float | None = None):
        m = self.model
        terms = energy_terms(m, state)
        nP = m.cspace.number_density(state.phi)
        self.acc = AuditAccumulators(
            E0=terms["total_E"],
            eq0=terms["eq_lhs_state"],
            xi_prev=xi_rate(m, state),
            fv_prev=force_power(m, state),
            nP_lo=float(nP.min()),
            nP_hi=float(nP.max()),
            mass0=float(np.sum(nP)) * m.xgrid.cell_area,
            theta_min0=float(state.theta.min()),
            theta_max=float(theta_max if theta_max else 2.0 * state.theta.max()),
        )
        return self.acc

    def advance(self, state: State, dt: float):
        """Fold one step of length dt into the trapezoid time integrals."""
        a = self.acc
        parts = entropy_production(self.model, state)["total"]
        self.last_xi_min = float(parts.min())
        self.last_xi_max = float(parts.max())
        xi = float(np.sum(parts)) * self.model.xgrid.cell_area
        fv = force_power(self.model, state)
        a.xi_total += 0.5 * dt * (a.xi_prev + xi)
        a.fv_total += 0.5 * dt * (a.fv_prev + fv)
        a.xi_prev, a.fv_prev = xi, fv

    def residuals(self, state: State, terms=None):
        """(energy equality residual, total energy balance residual) now."""
        a = self.acc
        terms = terms or energy_terms(self.model, state)
        eq = (terms["eq_lhs_state"] + a.xi_total) - (a.eq0 + a.fv_total)
        return eq, terms["total_E"] - a.E0 - a.fv_total

    def report(self, state: State) -> ThermoReport:
        m = self.model
        a = self.acc
        terms = energy_terms(m, state)
        eq_res, bal_res = self.residuals(state, terms)
        nP = m.cspace.number_density(state.phi)
        xi = entropy_production(m, state)["total"]
        en = energies(m, state)
        return ThermoReport(
            t=state.t,
            kinetic=terms["kinetic"],
            heat_content=terms["heat_content"],
            elastic=terms["elastic"],
            entropic=terms["entropic"],
            mixing=terms["mixing"],
            H_theta=terms["H_theta"],
            total_E=terms["total_E"],
            entropy_total=terms["entropy_total"],
            xi_total=a.xi_total,
            energy_eq_residual=eq_res,
            energy_balance_residual=bal_res,
            min_theta=float(state.theta.min()),
            min_phi=float(state.phi.min()) if state.phi.size else 0.0,
            nP_min=float(nP.min()),
            nP_max=float(nP.max()),
            norm_bounds=apriori_norms(m, state, a.theta_max),
            xi_rate=float(np.sum(xi)) * m.xgrid.cell_area,
            xi_min_cell=float(xi.min()),
            identity_residual=en.identity_residual,
            max_divergence=float(np.max(np.abs(divergence(m.xgrid, state.flow.u, state.flow.v)))),
            polymer_mass=float(np.sum(nP)) * m.xgrid.cell_area,
        )


def energy_equality_residual(rows, t=None):
    """Signed energy-equality residual from a sequence of ThermoReports."""
    return _pick(rows, t).energy_eq_residual


def total_energy_balance(rows, t=None):
    """E(t) - E(0) - int_0^t int f.v from a sequence of ThermoReports."""
    return _pick(rows, t).energy_balance_residual


def _pick(rows, t):
    if t is None:
        return rows[-1]
    return min(rows, key=lambda r: abs(r.t - t))


__all__ = [
    "COLUMNS", "NORM_LABELS", "AuditAccumulators", "Energies", "ThermoAudit", "ThermoReport",
    "apriori_norms", "energies", "energy_equality_residual", "energy_terms", "entropy_production",
    "interpolation_chain", "sobolev_constant", "temperature_floor", "total_energy_balance",
]

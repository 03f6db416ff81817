"""Scenario setup, the split time loop, CSV output and checkpoint plumbing."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .checkpoint import Snapshot, read_checkpoint, write_checkpoint
from .config import ConfigError, ScenarioConfig, parse_config
from .flow import CFLError, FlowState, momentum_step
from .heat import FieldHistory, PositivityError, heat_step
from .model import Model, State
from .potentials import MaterialFunctions, PotentialSpec, maxwellian, validate_assumptions
from .qspace import ConfigSpace, QGrid, SolverFailure
from .thermo import COLUMNS, AuditAccumulators, ThermoAudit, ThermoReport
from .transport import XGrid, divergence, x_transport_step

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_AUDIT = 4
EXIT_CORRUPT = 5


class InvariantViolation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# building a model and initial fields from a config


def build_model(cfg: ScenarioConfig) -> Model:
    L = cfg["xgrid.L"]
    xg = XGrid(cfg["xgrid.n_x"], cfg["xgrid.n_y"], L, L, cfg["xgrid.bc"])
    spec = PotentialSpec(cfg["potential.kind"], cfg["potential.H"], cfg["potential.b"], cfg["potential.r"])
    qg = QGrid(cfg["qgrid.n_r"], cfg["qgrid.n_a"], cfg["potential.b"])
    mat = MaterialFunctions(cfg["heat.kappa_c0"], cfg["heat.kappa_c1"], cfg["heat.beta"],
                            cfg["flow.nu"], cfg["flow.nu_floor"], cfg["flow.nu_profile"])
    return Model(xg, ConfigSpace(spec, qg), mat, _forcing(cfg, xg), coupling=cfg["polymer.coupling"])


def _vortex(X, Y, L):
    k = 2.0 * np.pi / L
    return np.sin(k * X) * np.cos(k * Y), -np.cos(k * X) * np.sin(k * Y)


def _forcing(cfg, xg: XGrid):
    name, args = cfg["flow.f"]
    f = np.zeros(xg.shape + (2,))
    if name == "constant":
        f[..., 0], f[..., 1] = args
        f *= cfg["flow.f_amp"]
    elif name == "vortex_forcing":
        X, Y = xg.centers()
        fx, fy = _vortex(X, Y, xg.L_x)
        f[..., 0] = cfg["flow.f_amp"] * fx
        f[..., 1] = cfg["flow.f_amp"] * fy
    return f


def initial_theta(cfg, xg: XGrid):
    name, args = cfg["init.theta"]
    if name == "constant":
        return np.full(xg.shape, args[0])
    X, Y = xg.centers()
    r2 = (X - 0.5 * xg.L_x) ** 2 + (Y - 0.5 * xg.L_y) ** 2
    w = cfg["init.hot_width"]
    return cfg["init.hot_base"] + cfg["init.hot_amp"] * np.exp(-r2 / (2 * w * w))


def initial_phi(cfg, model: Model, theta):
    kind = cfg["init.phi"]
    qg = model.qgrid
    n_p = cfg["init.n_p"]
    shape = model.xgrid.shape + (qg.n_r, qg.n_a)
    if kind == "zero":
        return np.zeros(shape)
    if kind == "uniform":
        return np.full(shape, n_p / (np.pi * qg.b))
    M = maxwellian(model.spec, qg, theta)
    if kind == "equilibrium":
        return n_p * M
    # gaussian_bump: a localized excess of polymer in x on top of equilibrium
    X, Y = model.xgrid.centers()
    r2 = (X - 0.5 * model.xgrid.L_x) ** 2 + (Y - 0.5 * model.xgrid.L_y) ** 2
    bump = 1.0 + 0.5 * np.exp(-r2 / (2 * 0.15**2))
    return n_p * bump[..., None, None] * M


def initial_velocity(cfg, model: Model):
    xg = model.xgrid
    name, args = cfg["init.v"]
    u = np.zeros(xg.shape)
    v = np.zeros(xg.shape)
    L = xg.L_x
    if name == "taylor_green":
        Xu, Yu = xg.u_faces()
        Xv, Yv = xg.v_faces()
        u = cfg["init.v_amp"] * _vortex(Xu, Yu, L)[0]
        v = cfg["init.v_amp"] * _vortex(Xv, Yv, L)[1]
    elif name == "shear":
        _, Yu = xg.u_faces()
        u = (args[0] * L / (2 * np.pi)) * np.sin(2 * np.pi * Yu / L)
    mu, mv = xg.face_mask()
    u, v, p = model.flow_ops.project(u * mu, v * mv)
    return FlowState(u, v, np.zeros(xg.shape))


def initial_state(cfg, model: Model) -> State:
    theta = initial_theta(cfg, model.xgrid)
    phi = initial_phi(cfg, model, theta)
    return State(initial_velocity(cfg, model), theta, phi)


def check_potential(cfg, allow_unsafe: bool):
    if allow_unsafe:
        return
    spec = PotentialSpec(cfg["potential.kind"], cfg["potential.H"], cfg["potential.b"], cfg["potential.r"])
    rep = validate_assumptions(spec)
    if not rep.ok:
        raise ConfigError("potential fails the structural assumptions ("
                          + "; ".join(rep.messages) + "); pass --allow-unsafe-potential to run anyway",
                          key="potential.kind")


# ---------------------------------------------------------------------------
# the time loop


@dataclass
class StepInfo:
    clipped: float = 0.0
    mass_drift: float = 0.0
    max_div: float = 0.0
    xi_min: float = 0.0


@dataclass
class RunResult:
    status: int
    reports: list = field(default_factory=list)
    message: str = ""
    csv_path: Optional[str] = None
    checkpoint_path: Optional[str] = None
    audit_failures: list = field(default_factory=list)
    min_xi_cell: float = np.inf
    max_mass_drift: float = 0.0
    max_div: float = 0.0


class Simulation:
    """One scenario: model, current state and running audit."""

    def __init__(self, cfg: ScenarioConfig, state: State | None = None,
                 acc: AuditAccumulators | None = None, picard_iters: int | None = None,
                 record_history: bool | None = None):
        self.cfg = cfg
        self.model = build_model(cfg)
        self.dt = cfg["time.dt"]
        self.picard_iters = picard_iters or cfg["heat.picard_iters"]
        self.state = state if state is not None else initial_state(cfg, self.model)
        self.audit = ThermoAudit(self.model, acc)
        if acc is None:
            self.audit.initialise(self.state, cfg["audit.theta_max"])
        if record_history is None:
            record_history = bool(cfg["renorm.k_levels"])
        self.history = FieldHistory.empty(self.model.xgrid, self.model.mat) if record_history else None
        self._last_source = np.zeros(self.model.xgrid.shape)
        if self.history is not None:
            self._record()

    # -- construction helpers --------------------------------------------
    @classmethod
    def from_snapshot(cls, snap: Snapshot, **kw):
        cfg = parse_config(snap.config_text)
        state = State(FlowState(snap.u.copy(), snap.v.copy(), snap.p.copy()),
                      snap.theta.copy(), snap.phi.copy(), snap.t, snap.step)
        return cls(cfg, state, AuditAccumulators.from_array(snap.accumulators), **kw)

    def snapshot(self) -> Snapshot:
        s = self.state
        return Snapshot(s.step, s.t, s.flow.u, s.flow.v, s.flow.p, s.theta, s.phi,
                        self.audit.acc.to_array(), self.cfg.text)

    def _record(self):
        s = self.state
        self.history.append(s.t, s.theta, s.flow.u, s.flow.v, self._last_source)

    # -- one split step --------------------------------------------------
    def step(self) -> StepInfo:
        m = self.model
        ops = m.flow_ops
        xg = m.xgrid
        dt = self.dt
        s = self.state
        theta, phi = s.theta, s.phi
        nu = m.mat.viscosity(theta)

        tau_el = None
        if m.coupling:
            nP = m.cspace.number_density(phi)
            G0 = ops.velocity_gradient(s.flow.u, s.flow.v)
            tau, _ = m.cspace.momentum_stress(phi, theta, G0)
            tau_el = tau - 2.0 * (theta * nP)[..., None, None] * np.eye(2)
        flow = momentum_step(s.flow, ops, dt, nu, tau_el, m.f_cells if m.has_forcing else None)

        info = StepInfo()
        source = ops.dissipation(flow.u, flow.v, nu)
        if m.coupling:
            mass_before = float(np.sum(m.cspace.number_density(phi)))
            phi = x_transport_step(phi, flow.u, flow.v, theta, dt, xg)
            G = ops.velocity_gradient(flow.u, flow.v)
            _, eta = m.cspace.momentum_stress(phi, theta, G)
            phi, info.clipped = m.cspace.step(phi, G, theta, dt)
            mass_after = float(np.sum(m.cspace.number_density(phi)))
            info.mass_drift = abs(mass_after - mass_before) * xg.cell_area
            _, _, heat_src, _ = m.cspace.kramers(phi, theta)
            source = source + heat_src + np.einsum("...ab,...ab->...", G, eta)
        theta = heat_step(theta, flow.u, flow.v, source, dt, m.mat, xg, self.picard_iters)

        step = s.step + 1
        self.state = State(flow, theta, phi, step * dt, step)
        self._last_source = source
        info.max_div = float(np.max(np.abs(divergence(xg, flow.u, flow.v))))
        self.audit.advance(self.state, dt)
        info.xi_min = self.audit.last_xi_min
        if self.history is not None:
            self._record()
        return info

    def check_invariants(self, info: StepInfo):
        c = self.cfg
        s = self.state
        mass0 = max(abs(self.audit.acc.mass0), 1.0)
        if not np.all(s.theta > 0):
            raise InvariantViolation(f"temperature not positive (min {s.theta.min():.3e})")
        if s.phi.size and s.phi.min() < -c["audit.phi_neg_tol"]:
            raise InvariantViolation(f"phi below tolerance (min {s.phi.min():.3e})")
        if info.max_div > c["audit.div_tol"]:
            raise InvariantViolation(f"velocity divergence {info.max_div:.3e} exceeds {c['audit.div_tol']}")
        if info.mass_drift > c["audit.mass_tol"] * mass0:
            raise InvariantViolation(f"polymer mass drift {info.mass_drift:.3e} in one step")

    def report(self) -> ThermoReport:
        return self.audit.report(self.state)

    def audit_failures(self, rep: ThermoReport) -> list:
        """Soft audit checks; only fatal under --strict."""
        c = self.cfg
        a = self.audit.acc
        out = []
        E0 = max(abs(a.E0), 1e-300)
        if abs(rep.energy_eq_residual) > c["audit.energy_rel_tol"] * E0:
            out.append(f"t={rep.t:.6g}: energy equality residual {rep.energy_eq_residual:.3e} above tolerance")
        tol = c["audit.nP_rel_tol"] * max(abs(a.nP_hi), 1e-300)
        if rep.nP_min < a.nP_lo - tol or rep.nP_max > a.nP_hi + tol:
            out.append(f"t={rep.t:.6g}: number density left [{a.nP_lo:.6g}, {a.nP_hi:.6g}]")
        if rep.xi_min_cell < 0:
            out.append(f"t={rep.t:.6g}: negative cell entropy production {rep.xi_min_cell:.3e}")
        return out

    # -- driving ---------------------------------------------------------
    def run(self, output_dir: str | None = None, t_end: float | None = None,
            strict: bool = False, append_csv: bool = False) -> RunResult:
        c = self.cfg
        t_end = c["time.t_end"] if t_end is None else t_end
        n_total = int(round(t_end / self.dt))
        every = c["time.output_every"]
        ck_every = c["run.checkpoint_every"]
        label = c.label
        res = RunResult(EXIT_OK)
        writer = fh = None
        if output_dir is not None:
            os.makedirs(output_dir, exist_ok=True)
            res.csv_path = os.path.join(output_dir, f"{label}.csv")
            fresh = not (append_csv and os.path.exists(res.csv_path))
            fh = open(res.csv_path, "w" if fresh else "a", newline="", encoding="utf-8")
            writer = csv.writer(fh, lineterminator="\r\n")
            if fresh:
                writer.writerow(COLUMNS)

        def emit():
            rep = self.report()
            res.reports.append(rep)
            res.audit_failures += self.audit_failures(rep)
            if writer is not None:
                writer.writerow([_fmt(x) for x in rep.as_row()])

        def save(name):
            if output_dir is not None:
                path = os.path.join(output_dir, f"{label}.{name}.pkin")
                write_checkpoint(path, self.snapshot())
                res.checkpoint_path = path

        try:
            if self.state.step == 0:
                emit()
            last_good = self.snapshot()
            while self.state.step < n_total:
                try:
                    info = self.step()
                    self.check_invariants(info)
                except (CFLError, PositivityError, SolverFailure, InvariantViolation) as exc:
                    res.status = EXIT_INVARIANT
                    res.message = f"step {self.state.step + 1}: {exc}"
                    log.error("%s", res.message)
                    if output_dir is not None:
                        path = os.path.join(output_dir, f"{label}.lastgood.pkin")
                        write_checkpoint(path, last_good)
                        res.checkpoint_path = path
                    return res
                res.min_xi_cell = min(res.min_xi_cell, info.xi_min)
                res.max_mass_drift = max(res.max_mass_drift, info.mass_drift)
                res.max_div = max(res.max_div, info.max_div)
                if info.xi_min < 0:
                    res.audit_failures.append(f"step {self.state.step}: negative cell entropy production")
                n = self.state.step
                if n % every == 0 or n == n_total:
                    emit()
                if ck_every and n % ck_every == 0:
                    save(f"step{n:08d}")
                last_good = self.snapshot()
            save("final")
        finally:
            if fh is not None:
                fh.close()
        if strict and res.audit_failures:
            res.status = EXIT_AUDIT
            res.message = res.audit_failures[0]
        return res


def _fmt(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# entry points used by the CLI


def run(cfg: ScenarioConfig, output_dir=None, allow_unsafe_potential=False, picard_iters=None,
        strict=False) -> RunResult:
    check_potential(cfg, allow_unsafe_potential)
    sim = Simulation(cfg, picard_iters=picard_iters)
    return sim.run(output_dir, strict=strict)


def resume(path, output_dir=None, t_end=None, picard_iters=None, strict=False) -> RunResult:
    sim = Simulation.from_snapshot(read_checkpoint(path), picard_iters=picard_iters)
    return sim.run(output_dir, t_end=t_end, strict=strict, append_csv=True)


def equilibrium(cfg: ScenarioConfig, path=None) -> Snapshot:
    """Analytic rest state: v = 0, uniform theta, Maxwellian phi in every cell."""
    name, args = cfg["init.theta"]
    if name != "constant":
        raise ConfigError("equilibrium needs a uniform temperature, use init.theta = constant(c)",
                          key="init.theta")
    cfg = cfg.with_overrides(init__phi="equilibrium", init__v="zero")
    sim = Simulation(cfg, record_history=False)
    snap = sim.snapshot()
    if path is not None:
        write_checkpoint(path, snap)
    return snap


def check(path) -> ThermoReport:
    """Offline audit of a checkpoint; same code path as the in-loop rows."""
    sim = Simulation.from_snapshot(read_checkpoint(path), record_history=False)
    return sim.report()


@dataclass
class CsvSummary:
    rows: int
    checks: list  # (name, passed, detail)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)


def summarize_csv(path, energy_rel_tol=5e-2, nP_rel_tol=1e-6, phi_tol=1e-12) -> CsvSummary:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return CsvSummary(0, [("rows", False, "no data rows")])
    col = {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
    E0 = abs(col["total_E"][0]) or 1.0
    hi = col["nP_max"][0]
    lo = col["nP_min"][0]
    tol = nP_rel_tol * max(abs(hi), 1e-300)
    checks = [
        ("positive temperature", bool(np.all(col["min_theta"] > 0)), f"min {col['min_theta'].min():.6g}"),
        ("phi nonnegative", bool(np.all(col["min_phi"] >= -phi_tol)), f"min {col['min_phi'].min():.3e}"),
        ("entropy production nondecreasing", bool(np.all(np.diff(col["xi_total"]) >= 0)),
         f"final {col['xi_total'][-1]:.6g}"),
        ("energy equality", bool(np.max(np.abs(col["energy_eq_residual"])) <= energy_rel_tol * E0),
         f"max |res|/E0 {np.max(np.abs(col['energy_eq_residual'])) / E0:.3e}"),
        ("number density bounds", bool(np.all(col["nP_min"] >= lo - tol) and np.all(col["nP_max"] <= hi + tol)),
         f"[{col['nP_min'].min():.6g}, {col['nP_max'].max():.6g}]"),
    ]
    return CsvSummary(len(rows), checks)

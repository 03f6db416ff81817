import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fenetherm.potentials import PotentialSpec, maxwellian
from fenetherm.qspace import (
    ConfigSpace,
    QGrid,
    boundary_trace,
    flux_q,
    integrate_over_D,
    kramers_integrals,
    q_step,
    stress_identity_residual,
)

WARNER1 = PotentialSpec("warner", 1.0, 1.0)
WARNER6 = PotentialSpec("warner", 1.0, 6.0)


def smooth_bump(g: QGrid):
    """Anisotropic positive density vanishing at the edge of the ball."""
    q = g.q
    r2 = np.sum(q * q, axis=-1) / g.b
    return (1 - r2) ** 2 * (1 + 0.5 * q[..., 0] * q[..., 1] / g.b + 0.3 * q[..., 0] / np.sqrt(g.b))


def random_positive(seed, g: QGrid):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.1, 2.0, (g.n_r, g.n_a))


# ---------------------------------------------------------------- quadrature


@pytest.mark.parametrize("n_r", [32, 64])
def test_area_of_ball(n_r):
    g = QGrid(n_r, 24, 2.5)
    assert integrate_over_D(np.ones((n_r, 24)), g) == pytest.approx(np.pi * 2.5, rel=1e-3)


def test_second_moment_of_uniform_density():
    g = QGrid(128, 64, 2.0)
    qq = np.einsum("ij,ijab,i->ab", np.ones((g.n_r, g.n_a)), g.qq, g.area)
    np.testing.assert_allclose(qq, np.pi * g.b**2 / 4 * np.eye(2), rtol=1e-4, atol=1e-12)


def test_uniform_density_unit_mass():
    g = QGrid(48, 16, 1.0)
    assert integrate_over_D(np.full((48, 16), 1 / np.pi), g) == pytest.approx(1.0, rel=1e-3)


def test_callable_weight():
    g = QGrid(16, 16, 1.0)
    M = maxwellian(WARNER1, g, 1.0)
    a = integrate_over_D(M, g, lambda q: q[..., 0] ** 2)
    b = integrate_over_D(M, g, g.qq[..., 0, 0])
    assert a == b


def test_gradient_energy_integral_stable_when_integrable():
    # |grad U_e|^2 M ~ (1 - |q|^2/b)^(Hb/2 - 2): integrable for b = 6
    vals = []
    for n_r in (32, 64, 128):
        g = QGrid(n_r, 8, 6.0)
        cs = ConfigSpace(WARNER6, g)
        M = maxwellian(WARNER6, g, 1.0)
        vals.append(integrate_over_D(M, g, (cs.dUe**2 * 2 * g.s_c)[:, None]))
    assert vals[0] > 0
    assert abs(vals[2] - vals[1]) / vals[2] < 0.02


def test_gradient_energy_integral_grows_for_b_one():
    # for H = b = theta = 1 the exponent is -3/2 and the integral diverges
    vals = []
    for n_r in (32, 64, 128):
        g = QGrid(n_r, 8, 1.0)
        cs = ConfigSpace(WARNER1, g)
        M = maxwellian(WARNER1, g, 1.0)
        vals.append(integrate_over_D(M, g, (cs.dUe**2 * 2 * g.s_c)[:, None]))
    assert vals[2] > 1.3 * vals[1] > 1.3**2 * vals[0]


# ---------------------------------------------------------------- fluxes


@pytest.mark.parametrize("spec", [WARNER1, WARNER6, PotentialSpec("fene_like", 1.0, 2.0, 0.5)])
@pytest.mark.parametrize("theta", [0.5, 1.0, 3.0])
def test_maxwellian_has_zero_flux(spec, theta):
    g = QGrid(32, 16, spec.b)
    fl = flux_q(maxwellian(spec, g, theta), theta, spec, g)
    scale = 1.0 / np.pi / spec.b
    assert np.max(np.abs(fl.radial)) <= 1e-12 * scale * 100
    assert np.max(np.abs(fl.angular)) <= 1e-14


def test_constant_density_flows_inward():
    g = QGrid(16, 12, 1.0)
    fl = flux_q(np.full((16, 12), 0.3), 1.0, WARNER1, g)
    assert np.all(fl.radial[1:-1] < 0)
    assert np.all(fl.radial[0] == 0) and np.all(fl.radial[-1] == 0)


@given(st.integers(0, 10_000), st.floats(0.2, 5.0))
def test_flux_divergence_telescopes(seed, theta):
    g = QGrid(10, 9, 1.0)
    fl = flux_q(random_positive(seed, g), theta, WARNER1, g)
    assert abs(np.sum(fl.divergence())) <= 1e-12 * np.max(np.abs(fl.radial))


# ---------------------------------------------------------------- time step


def test_equilibrium_is_fixed_point():
    g = QGrid(32, 16, 6.0)
    M = maxwellian(WARNER6, g, 1.3)
    out = q_step(M, np.zeros((2, 2)), 1.3, 1e-2, WARNER6, g)
    assert np.max(np.abs(out - M)) <= 1e-10 * M.max()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000),
       st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.floats(0.3, 3.0), st.floats(1e-4, 5e-2))
def test_step_keeps_mass_and_sign(seed, gv, theta, dt):
    g = QGrid(12, 10, 6.0)
    G = np.array([[gv[0], gv[1]], [gv[2], -gv[0]]])
    phi = random_positive(seed, g)
    cs = ConfigSpace(WARNER6, g)
    out, clipped = cs.step(phi, G, theta, dt)
    assert clipped == 0.0
    assert out.min() >= 0.0
    assert integrate_over_D(out, g) == pytest.approx(integrate_over_D(phi, g), rel=1e-12)


def test_relaxation_to_maxwellian_monotone():
    g = QGrid(64, 8, 6.0)
    M = maxwellian(WARNER6, g, 1.0)
    phi = np.full_like(M, 1.0 / (np.pi * g.b))
    cs = ConfigSpace(WARNER6, g)
    dists = []
    for _ in range(60):
        phi, _ = cs.step(phi, None, 1.0, 0.02)
        dists.append(integrate_over_D(np.abs(phi - M), g))
    assert np.all(np.diff(dists) < 0)
    assert dists[-1] < 1e-3 * dists[0]


def test_relative_entropy_decreases_under_diffusion():
    g = QGrid(24, 12, 6.0)
    cs = ConfigSpace(WARNER6, g)
    M = maxwellian(WARNER6, g, 1.0)
    phi = random_positive(3, g) * M
    phi /= integrate_over_D(phi, g)
    ent = []
    for _ in range(20):
        ent.append(integrate_over_D(phi * np.log(phi / M), g))
        phi, _ = cs.step(phi, None, 1.0, 0.01)
    assert np.all(np.diff(ent) < 0)


# ---------------------------------------------------------------- Kramers stress


@pytest.mark.parametrize("theta", [0.7, 1.0, 2.0])
def test_equilibrium_stress_is_isotropic(theta):
    g = QGrid(64, 32, 6.0)
    M = 1.7 * maxwellian(WARNER6, g, theta)
    nP, tau, heat, eta = kramers_integrals(M, theta, WARNER6, g)
    assert nP == pytest.approx(1.7, rel=1e-12)
    np.testing.assert_allclose(tau, theta * nP * np.eye(2), rtol=1e-12, atol=1e-12)
    assert abs(heat) <= 1e-8


def test_equilibrium_stress_matches_direct_quadrature():
    # force form integral of (U_e' + theta U_eta') phi q (x) q on a fine grid
    g = QGrid(512, 8, 6.0)
    cs = ConfigSpace(WARNER6, g)
    M = maxwellian(WARNER6, g, 1.0)
    direct = np.einsum("ij,i,ijab->ab", M, g.area * (cs.dUe + cs.dUeta), g.qq)
    np.testing.assert_allclose(direct, np.eye(2), atol=2e-3)


def test_zero_density_gives_zero_outputs():
    g = QGrid(8, 8, 1.0)
    nP, tau, heat, eta = kramers_integrals(np.zeros((8, 8)), 1.0, WARNER1, g)
    assert nP == 0 and heat == 0
    assert not tau.any() and not eta.any()
    assert stress_identity_residual(np.zeros((8, 8)), 1.0, WARNER1, g) == 0


def test_stress_identity_exact_at_equilibrium():
    for spec in (WARNER1, WARNER6):
        g = QGrid(32, 16, spec.b)
        M = maxwellian(spec, g, 1.0)
        assert stress_identity_residual(M, 1.0, spec, g) <= 1e-8


def test_stress_identity_converges():
    res = []
    for n_r in (32, 64, 128):
        g = QGrid(n_r, 64, 6.0)
        res.append(float(stress_identity_residual(smooth_bump(g), 1.0, WARNER6, g)))
    assert res[1] <= 0.5 * res[0] and res[2] <= 0.5 * res[1]


def test_momentum_stress_equilibrium_and_pairing():
    g = QGrid(24, 16, 6.0)
    cs = ConfigSpace(WARNER6, g)
    M = maxwellian(WARNER6, g, 1.0)
    G = np.array([[0.3, 1.0], [-0.4, -0.3]])
    tau, _ = cs.momentum_stress(M, 1.0, G)
    np.testing.assert_allclose(tau, np.eye(2), atol=1e-12)
    # traceless G: G : tau = elastic energy moved by the drift + G : eta,
    # also when phi on the outer ring depends on the angle
    phi = (smooth_bump(g) + 0.01) * (1.0 + 0.5 * np.cos(2.0 * g.a_c)[None, :])
    tau, eta = cs.momentum_stress(phi, 1.0, G)
    fl, _, _ = cs._drift_fluxes(phi, G, 1.0)
    elastic_rate = -np.sum(fl.divergence() * cs.Ue[:, None])
    assert np.sum(G * tau) == pytest.approx(elastic_rate + np.sum(G * eta), rel=1e-12)


# ---------------------------------------------------------------- traces


def test_trace_vanishes_for_energy_bounded_state():
    tp, tu = [], []
    for n_r in (32, 64, 128):
        g = QGrid(n_r, 16, 6.0)
        a, b = boundary_trace(maxwellian(WARNER6, g, 1.0), WARNER6, g)
        tp.append(a)
        tu.append(b)
    assert np.all(np.diff(tp) < 0) and np.all(np.diff(tu) < 0)


def test_trace_of_constant_does_not_vanish():
    vals = []
    for n_r in (32, 64, 128):
        g = QGrid(n_r, 16, 6.0)
        a, _ = boundary_trace(np.full((n_r, 16), 0.4), WARNER6, g)
        vals.append(a)
    np.testing.assert_allclose(vals, 0.4 * 2 * np.pi * np.sqrt(6.0), rtol=1e-12)


def test_trace_of_zero():
    g = QGrid(8, 8, 1.0)
    assert boundary_trace(np.zeros((8, 8)), WARNER1, g) == (0.0, 0.0)


# ---------------------------------------------------------------- a priori pieces


@given(st.integers(0, 10_000), st.floats(0.2, 5.0))
def test_fisher_and_flux_norms_nonnegative(seed, theta):
    g = QGrid(10, 9, 6.0)
    cs = ConfigSpace(WARNER6, g)
    phi = random_positive(seed, g)
    assert cs.fisher_production(phi, theta) >= 0
    assert cs.flux_norm(phi, theta) >= 0
    assert cs.up_dissipation(phi, theta) >= 0


def test_fisher_zero_at_equilibrium():
    g = QGrid(16, 8, 6.0)
    cs = ConfigSpace(WARNER6, g)
    M = maxwellian(WARNER6, g, 1.0)
    assert abs(cs.fisher_production(M, 1.0)) <= 1e-10
    assert abs(cs.flux_norm(M, 1.0)) <= 1e-10


def test_batched_matches_single():
    g = QGrid(12, 8, 6.0)
    cs = ConfigSpace(WARNER6, g)
    phis = np.stack([random_positive(s, g) for s in range(3)])
    thetas = np.array([0.5, 1.0, 2.0])
    out, _ = cs.step(phis, None, thetas, 1e-2)
    for k in range(3):
        single, _ = cs.step(phis[k], None, thetas[k], 1e-2)
        np.testing.assert_allclose(out[k], single, rtol=1e-13)
    tau_b = cs.kramers(phis, thetas)[1]
    for k in range(3):
        np.testing.assert_allclose(tau_b[k], cs.kramers(phis[k], thetas[k])[1], rtol=1e-14)

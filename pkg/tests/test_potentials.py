import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fenetherm.potentials import (
    MaterialFunctions,
    PotentialDomainError,
    PotentialSpec,
    eval_potential,
    maxwellian,
    spring_force,
    validate_assumptions,
)
from fenetherm.qspace import QGrid, integrate_over_D

WARNER = PotentialSpec("warner", H=1.0, b=1.0)
FENE_LIKE = PotentialSpec("fene_like", H=1.0, b=1.0, r=0.5)


def test_warner_at_origin():
    Ue, dUe, _, Ueta, dUeta = eval_potential(WARNER, 0.0)
    assert Ue == 0.0
    assert dUe == 1.0
    assert (Ueta, dUeta) == (0.0, 1.0)


def test_warner_quarter():
    Ue, dUe, d2Ue, _, _ = eval_potential(WARNER, 0.25)
    assert Ue == pytest.approx(0.5 * np.log(2.0), rel=1e-14)
    assert dUe == pytest.approx(2.0, rel=1e-14)
    assert d2Ue == pytest.approx(8.0, rel=1e-14)


@pytest.mark.parametrize("spec", [WARNER, FENE_LIKE, PotentialSpec("warner", 2.0, 3.0)])
def test_derivatives_match_finite_differences(spec):
    s = np.linspace(0.05, 0.45 * spec.b, 9)
    h = 1e-6
    Up, dUp, _, Uep, _ = eval_potential(spec, s + h)
    Um, dUm, _, Uem, _ = eval_potential(spec, s - h)
    _, dU, d2U, _, dUeta = eval_potential(spec, s)
    np.testing.assert_allclose((Up - Um) / (2 * h), dU, rtol=1e-7)
    np.testing.assert_allclose((dUp - dUm) / (2 * h), d2U, rtol=1e-6)
    np.testing.assert_allclose((Uep - Uem) / (2 * h), dUeta, rtol=1e-8)


def test_fene_like_blows_up_at_edge():
    vals = [eval_potential(FENE_LIKE, 0.5 - 10.0**-k)[0] for k in (2, 4, 6, 8)]
    assert np.all(np.diff(vals) > 0)
    assert vals[-1] > 1e3


@pytest.mark.parametrize("s", [-1e-3, 0.5, 0.7, np.nan])
def test_domain_error(s):
    with pytest.raises(PotentialDomainError):
        eval_potential(WARNER, s)


def test_array_input_keeps_shape():
    out = eval_potential(WARNER, np.full((3, 4), 0.1))
    assert all(np.shape(v) == (3, 4) for v in out)


def test_spring_force_origin_and_closed_form():
    np.testing.assert_array_equal(spring_force(WARNER, [0.0, 0.0], 2.0), [0.0, 0.0])
    F = spring_force(WARNER, [0.5, 0.0], 1.0)
    np.testing.assert_allclose(F, [2.0 / 3.0 + 0.5, 0.0], rtol=1e-14)


@given(st.floats(0.0, 0.99), st.floats(0.0, 2 * np.pi), st.floats(0.05, 10.0))
def test_spring_force_tensor_symmetric(rad, ang, theta):
    q = rad * np.array([np.cos(ang), np.sin(ang)])
    T = np.outer(spring_force(WARNER, q, theta), q)
    np.testing.assert_allclose(T, T.T, atol=1e-14)


def test_validator_warner_basic_bound_only():
    rep = validate_assumptions(PotentialSpec("warner", H=2.0, b=3.0))
    assert rep.monotone and rep.convex and rep.singular_at_edge
    assert rep.bounded_ratio
    assert not rep.vanishing_ratio
    assert rep.ratio_sup == pytest.approx(2.0 / (2.0 * 3.0), rel=1e-10)
    assert rep.ok


def test_validator_fene_like_vanishing_ratio():
    rep = validate_assumptions(FENE_LIKE)
    assert rep.bounded_ratio and rep.vanishing_ratio and rep.ratio_trend_to_zero
    assert rep.ratio_near_edge < 1e-4
    # sup of U''/U'^2 at s = 0 is 2(r+1)/(H b r)
    assert rep.ratio_sup == pytest.approx(6.0, rel=1e-12)


def test_validator_flags_concave_custom_potential():
    spec = PotentialSpec("custom", b=1.0, custom_elastic=lambda s: (np.sqrt(s + 1) - 1, 0.5 / np.sqrt(s + 1),
                                                                       -0.25 * (s + 1) ** -1.5))
    rep = validate_assumptions(spec)
    assert not rep.convex
    assert not rep.ok
    assert rep.messages


def test_hookean_entropic_derivative_bounded():
    assert validate_assumptions(WARNER).eta_derivative_bound == 1.0


def test_material_growth_check():
    with pytest.raises(ValueError, match="5/6"):
        MaterialFunctions(beta=0.5)
    mat = MaterialFunctions(kappa_c0=0.3, kappa_c1=0.7, beta=1.5)
    th = np.linspace(0, 20, 50)
    k = mat.kappa(th)
    ratio = k / (1 + th**1.5)
    assert ratio.min() >= 0.3 - 1e-12 and ratio.max() <= 1.0 + 1e-12
    np.testing.assert_array_equal(mat.kappa(-th), k)
    assert mat.satisfies_growth_condition


@pytest.mark.parametrize("profile", ["constant", "rational_decay"])
def test_viscosity_floor_and_bound(profile):
    mat = MaterialFunctions(nu=0.2, nu_floor=0.05, nu_profile=profile)
    th = np.linspace(-50, 50, 201)
    nu = mat.viscosity(th)
    assert nu.min() >= 0.05 and nu.max() <= 0.2
    np.testing.assert_array_equal(nu, mat.viscosity(-th))


@pytest.mark.parametrize("spec", [WARNER, FENE_LIKE, PotentialSpec("warner", 1.0, 6.0)])
@pytest.mark.parametrize("theta", [0.3, 1.0, 4.0])
def test_maxwellian_unit_mass_and_radial(spec, theta):
    g = QGrid(24, 16, spec.b)
    M = maxwellian(spec, g, theta)
    assert integrate_over_D(M, g) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(M, np.repeat(M[:, :1], g.n_a, axis=1))


def test_maxwellian_warner_shape():
    g = QGrid(32, 8, 1.0)
    M = maxwellian(WARNER, g, 1.0)[:, 0]
    s = g.s_c
    shape = np.sqrt(1.0 - 2 * s) * np.exp(-s)
    np.testing.assert_allclose(M / M[0], shape / shape[0], rtol=1e-12)


@settings(max_examples=30)
@given(st.floats(0.2, 5.0), st.floats(0.5, 8.0), st.floats(0.1, 0.9))
def test_monotone_convex_any_parameters(H, b, r):
    for spec in (PotentialSpec("warner", H, b), PotentialSpec("fene_like", H, b, r)):
        s = np.linspace(0, 0.49 * b, 50)
        U, dU, d2U, _, _ = eval_potential(spec, s)
        assert np.all(np.diff(U) > 0) and np.all(dU > 0) and np.all(d2U > 0)

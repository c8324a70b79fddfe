import math

import numpy as np
import pytest
from scipy.integrate import dblquad, quad

from stablecond import geometry as ge
from stablecond import potential as pot
from stablecond.potential import StableParams
from stablecond.specfun import gamma_ratio


# -- StableParams / ConstantTable ----------------------------------------------

def test_stable_params_validation():
    with pytest.raises(ValueError):
        StableParams(0.0, 2)
    with pytest.raises(ValueError):
        StableParams(2.0, 2)
    with pytest.raises(ValueError):
        StableParams(0.5, 1)
    with pytest.raises(ValueError):
        StableParams(1.5, 2).require_conditioning()
    StableParams(1.0, 2).require_conditioning()


def test_constant_examples():
    # reflection oracle: Gamma(1/4) Gamma(3/4) = pi sqrt(2)
    ct = pot.constants(StableParams(0.5, 2))
    assert ct.c_alpha_d == pytest.approx(
        1.0 / (math.sqrt(math.pi) * math.gamma(0.75) ** 2), rel=1e-13)
    ct3 = pot.constants(StableParams(1.0, 3))
    assert ct3.A_sphere_1 == pytest.approx(1.0 / math.pi, rel=1e-14)
    # unit identity at (0.5, 3)
    c = pot.constants(StableParams(0.5, 3)).c_alpha_d
    lhs = 2 ** 0.5 * c * math.pi ** 1.5 * math.gamma(0.5) * math.gamma(0.75) \
        / math.gamma(0.75)
    assert lhs == pytest.approx(1.0, abs=1e-12)


def test_constant_branch_errors():
    ct = pot.constants(StableParams(0.5, 2))
    with pytest.raises(ValueError):
        ct.get("c_1_d")
    ct1 = pot.constants(StableParams(1.0, 2))
    with pytest.raises(ValueError):
        ct1.get("c_alpha_d")
    # plane closed forms lose meaning at d = 2; the equilibrium ones do not
    with pytest.raises(ValueError):
        ct.get("A_plane")
    assert ct.get("A_plane_eq") > 0.0
    with pytest.raises(ValueError):
        pot.constants(StableParams(0.5, 2), R=0.0)


def test_delta_rule():
    ct = pot.constants(StableParams(0.5, 2))
    eps = 1e-4
    assert ct.delta_rule(eps) == pytest.approx(eps ** (0.5 / 3.0))
    ct1 = pot.constants(StableParams(1.0, 3))
    assert ct1.delta_rule(eps) == pytest.approx(abs(math.log(eps)) ** (-0.25))
    with pytest.raises(ValueError):
        ct.delta_rule(0.0)


def test_equilibrium_constants_cross_geometry():
    # one equilibrium coefficient serves shell and slab; the limit constants
    # differ exactly by the sphere area
    for a in (0.2, 0.5, 0.8, 1.0):
        for d in (2, 3, 4):
            ct = pot.constants(StableParams(a, d))
            assert ct.get("A_sphere_eq") == pytest.approx(
                pot.sphere_area(d) * ct.get("A_plane_eq"), rel=1e-13)


# -- harmonic functions -----------------------------------------------------------

def test_sphere_harmonic_full_sphere_origin():
    p = StableParams(0.5, 2)
    assert pot.sphere_harmonic(ge.CapSet.full_sphere(2), (0.0, 0.0), p) \
        == pytest.approx(1.0, rel=1e-10)


def test_sphere_harmonic_closed_form_example():
    p = StableParams(0.5, 2)
    val = pot.sphere_harmonic(ge.CapSet.full_sphere(2), (2.0, 0.0), p)
    from stablecond.specfun import gauss_2f1
    closed = 2.0 ** (0.5 - 2.0) * gauss_2f1(0.75, 0.75, 1.0, 0.25)
    assert val == pytest.approx(closed, rel=1e-10)


def test_sphere_harmonic_monotone_in_set():
    p = StableParams(0.7, 3)
    S = ge.CapSet.single((1.0, 0.0, 0.0), 1.0)
    S_half = ge.CapSet.single((1.0, 0.0, 0.0), 0.5)
    x = (0.3, 0.4, 1.5)
    assert pot.sphere_harmonic(S_half, x, p) <= pot.sphere_harmonic(S, x, p)


def test_sphere_harmonic_singularity_error():
    p = StableParams(0.5, 2)
    with pytest.raises(pot.SingularityError):
        pot.sphere_harmonic(ge.CapSet.full_sphere(2), (1.0, 0.0), p)


def test_sphere_harmonic_near_set_adaptive():
    # near-set evaluation (within the adaptive band) matches mpmath-grade quad
    p = StableParams(0.5, 2)
    S = ge.CapSet.single((1.0, 0.0), math.pi / 2)
    x = np.array([1.001, 0.3])  # ~1e-3 from the set
    val = pot.sphere_harmonic_many(S, x[None, :], p)[0]
    psi = math.atan2(x[1], x[0])
    r = np.linalg.norm(x)
    f = lambda t: (r * r + 1 - 2 * r * math.cos(t - psi)) ** (-0.75)
    oracle, _ = quad(f, -math.pi / 2, math.pi / 2, points=[psi], limit=500)
    assert val == pytest.approx(oracle / (2 * math.pi), rel=1e-7)


def test_sphere_harmonic_continuity():
    p = StableParams(0.5, 2)
    S = ge.CapSet.single((1.0, 0.0), 1.0)
    xs = np.stack([np.full(41, 1.7), np.linspace(-0.5, 0.5, 41)], axis=1)
    vals = pot.sphere_harmonic_many(S, xs, p)
    steps = np.abs(np.diff(vals))
    assert steps.max() < 0.05 * np.abs(vals).max()


def test_plane_harmonic_disk_oracle():
    p = StableParams(0.5, 3)
    D = ge.PlanarSet.ball((0.0, 0.0, 1.0), (0.0, 0.0), 1.0)
    val = pot.plane_harmonic(D, (0.0, 0.0, 1.0), p)
    assert val == pytest.approx(4 * math.pi * (1 - 2 ** -0.25), rel=1e-10)


def test_plane_harmonic_monotone_and_far_field():
    p = StableParams(0.5, 3)
    D = ge.PlanarSet.ball((0.0, 0.0, 1.0), (0.0, 0.0), 1.0)
    D_sub = ge.PlanarSet.ball((0.0, 0.0, 1.0), (0.0, 0.0), 0.5)
    x = (0.3, -0.2, 0.8)
    assert pot.plane_harmonic(D_sub, x, p) <= pot.plane_harmonic(D, x, p)
    far = (0.0, 0.0, 1000.0)
    assert pot.plane_harmonic(D, far, p) * 1000.0 ** 2.5 \
        == pytest.approx(math.pi, rel=1e-3)


def test_plane_harmonic_box_oracle():
    p = StableParams(0.5, 3)
    D = ge.PlanarSet.box((0.0, 0.0, 1.0), (-0.5, -1.0), (0.5, 1.0))
    x = np.array([0.2, 0.1, 0.7])
    val = pot.plane_harmonic(D, x, p)
    oracle, _ = dblquad(
        lambda v, u: ((u - 0.2) ** 2 + (v - 0.1) ** 2 + 0.49) ** (-1.25),
        -0.5, 0.5, -1.0, 1.0, epsabs=1e-12, epsrel=1e-10)
    assert val == pytest.approx(oracle, rel=1e-8)


def test_plane_harmonic_d2_segment():
    p = StableParams(0.5, 2)
    D = ge.PlanarSet.box((0.0, 1.0), (-1.0,), (1.0,))
    x = (0.3, 0.4)
    val = pot.plane_harmonic(D, x, p)
    oracle, _ = quad(lambda s: ((s - 0.3) ** 2 + 0.16) ** (-0.75), -1.0, 1.0)
    assert val == pytest.approx(oracle, rel=1e-9)


def test_plane_harmonic_singularity():
    p = StableParams(0.5, 3)
    D = ge.PlanarSet.ball((0.0, 0.0, 1.0), (0.0, 0.0), 1.0)
    with pytest.raises(pot.SingularityError):
        pot.plane_harmonic(D, (0.2, 0.0, 0.0), p)


def test_plane_harmonic_d4_ball():
    p = StableParams(0.5, 4)
    D = ge.PlanarSet.ball((0.0, 0.0, 0.0, 1.0), (0.0, 0.0, 0.0), 1.0)
    x = (0.0, 0.0, 0.0, 2.0)
    val = pot.plane_harmonic(D, x, p)
    # radial oracle in the 3-dimensional frame
    oracle, _ = quad(lambda r: 4 * math.pi * r * r * (r * r + 4.0) ** (-1.75),
                     0.0, 1.0)
    assert val == pytest.approx(oracle, rel=1e-8)


# -- interval potential -------------------------------------------------------------

def test_interval_potential_endpoint_beta():
    for a in (0.3, 0.5, 0.7):
        bval = gamma_ratio((a / 2, 1 - a / 2), ())
        assert pot.interval_potential(1.0, a) == pytest.approx(bval, rel=1e-9)
        assert pot.interval_potential(0.0, a) == pytest.approx(bval, rel=1e-9)


def test_interval_potential_constancy():
    ref = pot.interval_potential(1.0, 0.3)
    assert pot.interval_potential(0.37, 0.3) == pytest.approx(ref, rel=1e-7)


def test_interval_potential_domain():
    with pytest.raises(ValueError):
        pot.interval_potential(1.5, 0.5)
    with pytest.raises(ValueError):
        pot.interval_potential(0.0, 1.0)


# -- shell measure ------------------------------------------------------------------

def test_shell_density_midpoint_and_symmetry():
    p = StableParams(0.5, 2)
    eps = 0.01
    c = pot.constants(p).c_alpha_d
    assert pot.shell_density(1.0, eps, p) == pytest.approx(c * eps ** -0.5, rel=1e-12)
    u = 0.004
    assert pot.shell_density(1.0 + u, eps, p) == pytest.approx(
        pot.shell_density(1.0 - u, eps, p), rel=1e-12)
    with pytest.raises(ValueError):
        pot.shell_density(1.02, eps, p)


def test_shell_density_log_prefactor():
    p = StableParams(1.0, 3)
    eps = math.exp(-10.0)
    c1 = pot.constants(p).c_1_d
    val = pot.shell_density(1.0, eps, p)
    assert val == pytest.approx((c1 / 10.0) * eps ** -1.0, rel=1e-12)


def test_shell_mass_closed_form_vs_quadrature():
    p = StableParams(0.5, 3)
    eps = 0.01
    closed = pot.shell_total_mass(eps, p)
    oracle = pot.quad_endpoint_singular(
        lambda r, da, db: pot.constants(p).c_alpha_d,
        1.0 - eps, 1.0 + eps, pa=-0.25, qb=-0.25)
    assert closed == pytest.approx(oracle, rel=1e-9)
    # scaling in eps
    assert pot.shell_total_mass(2 * eps, p) / closed == pytest.approx(
        2 ** 0.5, rel=1e-12)


def test_shell_mass_arcsine_case():
    # alpha = 1 without prefactor: the radial integral alone is pi
    v, _ = quad(lambda u: (1e-4 ** 2 - u * u) ** -0.5, -1e-4 + 1e-18, 1e-4 - 1e-18)
    assert v == pytest.approx(math.pi, rel=1e-3)
    p = StableParams(1.0, 3)
    eps = 0.01
    mass = pot.shell_total_mass(eps, p)
    c = pot.constants(p).c_1_d / abs(math.log(eps))
    assert mass == pytest.approx(c * math.pi, rel=1e-12)


# -- shell potential -----------------------------------------------------------------

def test_shell_potential_unit_trend():
    p = StableParams(0.5, 2)
    devs = []
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        xs = np.linspace(1 - eps, 1 + eps, 21)
        devs.append(max(abs(pot.shell_potential(float(x), eps, p) - 1.0)
                        for x in xs))
    assert all(b < a for a, b in zip(devs, devs[1:]))
    assert devs[-1] < 0.05
    assert all(pot.shell_potential(1.0, eps, p) > 0.0 for eps in (1e-1, 1e-3))


def test_shell_potential_raw_plateau():
    # raw normalisation tends to the gamma-ratio constant, not to 1
    p = StableParams(0.5, 2)
    plateau = gamma_ratio((0.25, 0.25), (0.75, 0.75))
    val = pot.shell_potential(1.0, 1e-4, p, normalization="raw")
    assert val == pytest.approx(plateau, rel=3e-3)
    # and the two normalisations differ by exactly the coefficient ratio
    eq = pot.shell_potential(1.0, 1e-4, p)
    ct = pot.constants(p)
    assert val / eq == pytest.approx(ct.c_alpha_d / ct.k_equilibrium, rel=1e-12)


def test_shell_potential_log_case_trend():
    p = StableParams(1.0, 3)
    vals = [abs(pot.shell_potential(1.0, eps, p) - 1.0)
            for eps in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2]


def test_shell_potential_domain():
    p = StableParams(0.5, 2)
    with pytest.raises(ValueError):
        pot.shell_potential(1.2, 0.1, p)
    with pytest.raises(ValueError):
        pot.shell_potential(1.0, 0.5, p)


# -- leakage bound -------------------------------------------------------------------

def test_leakage_bound_values_and_scaling():
    p = StableParams(0.5, 2)
    ct = pot.constants(p)
    eps, delta = 1e-4, 0.1
    assert pot.leakage_bound(eps, delta, p) == pytest.approx(
        ct.C_alpha_d * 1e-2 / 0.1 ** 1.5, rel=1e-12)
    # with the delta rule the bound scales like eps^{(1-alpha)/2}
    for eps in (1e-3, 1e-5):
        b = pot.leakage_bound(eps, ct.delta_rule(eps), p)
        assert b / eps ** 0.25 == pytest.approx(ct.C_alpha_d, rel=1e-12)
    # decreasing in delta
    assert pot.leakage_bound(eps, 0.2, p) < pot.leakage_bound(eps, 0.1, p)


def test_leakage_bound_plane_and_log():
    p = StableParams(0.5, 3)
    val = pot.leakage_bound(1e-4, 0.1, p, set_measure=2.0, plane=True)
    ct = pot.constants(p)
    expected = ct.k_alpha_d * 2.0 * 2 ** 0.5 * math.gamma(0.75) ** 2 \
        / math.gamma(1.5) * 1e-2 / 0.1 ** 2.5
    assert val == pytest.approx(expected, rel=1e-12)
    p1 = StableParams(1.0, 3)
    assert pot.leakage_bound(1e-4, 0.1, p1) == pytest.approx(
        2.0 / (abs(math.log(1e-4)) * 0.1 ** 2), rel=1e-12)
    with pytest.raises(ValueError):
        pot.leakage_bound(1e-4, 0.1, p1, plane=True)


# -- slab potential -------------------------------------------------------------------

def test_plane_shell_potential_unit_and_raw():
    p = StableParams(0.5, 3)
    for height_frac in (-0.9, 0.0, 0.6):
        v = pot.plane_shell_potential(height_frac * 1e-3, 1e-3, p)
        assert v == pytest.approx(1.0, rel=1e-9)
    raw = pot.plane_shell_potential(0.0, 1e-3, p, normalization="raw")
    # raw value equals pi * B(alpha/2, 1-alpha/2) at d = 3
    assert raw == pytest.approx(math.pi * gamma_ratio((0.25, 0.75), ()), rel=1e-9)


def test_hypergeometric_pair_sum_in_situ():
    # the two boundary-layer expressions combine to B(alpha/2, 1-alpha/2)
    from stablecond.specfun import gauss_2f1
    for a in (0.3, 0.5, 0.9):
        bcoef = gamma_ratio((1 - a / 2, a), (1 + a / 2,))
        for ratio in (0.3, 1.0, 4.0):
            total = bcoef * (ratio ** (a / 2)
                             * gauss_2f1(a / 2, a, 1 + a / 2, -ratio)
                             + ratio ** (-a / 2)
                             * gauss_2f1(a / 2, a, 1 + a / 2, -1.0 / ratio))
            assert total == pytest.approx(gamma_ratio((a / 2, 1 - a / 2), ()),
                                          rel=1e-11)


# -- Riesz ball integral ---------------------------------------------------------------

def test_riesz_ball_integral_vs_dblquad():
    p = StableParams(0.5, 2)
    val = pot.riesz_ball_integral(3.0, 0.5, p)
    oracle, _ = dblquad(
        lambda r, t: r * (9.0 + r * r - 6.0 * r * math.cos(t)) ** -0.75,
        0.0, 2 * math.pi, 0.0, 0.5, epsabs=1e-12, epsrel=1e-10)
    assert val == pytest.approx(oracle, rel=1e-8)


def test_riesz_ball_integral_inside():
    # singular case: evaluation point inside the ball
    p = StableParams(0.5, 2)
    val = pot.riesz_ball_integral(0.2, 0.5, p)
    oracle, _ = dblquad(
        lambda r, t: r * (0.04 + r * r - 0.4 * r * math.cos(t)) ** -0.75,
        0.0, 2 * math.pi, 0.0, 0.5, epsabs=1e-11, epsrel=1e-9)
    assert val == pytest.approx(oracle, rel=1e-6)

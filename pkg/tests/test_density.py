import math

import numpy as np
import pytest
from scipy import integrate

from carnot_gmt import algebra as ca
from carnot_gmt import catalog as cat
from carnot_gmt import density as dn
from carnot_gmt import homnorm as hn
from carnot_gmt import quadrature as qd
from carnot_gmt import surface as sf
from carnot_gmt.errors import OutOfAtlasError

RADII = tuple(2.0**-j for j in range(7))


def radial_oracle():
    """H-perimeter of {t = 0} in the unit Koranyi ball: density |x_H|/2 on the unit disc."""
    value, _ = integrate.quad(lambda r: 0.5 * r * 2 * math.pi * r, 0, 1)
    return value


def kappa_oracle():
    return integrate.quad(lambda y: math.sqrt(1 - y**4), 0, 1, epsabs=1e-13)[0]


def test_radial_oracle_is_pi_over_three():
    assert radial_oracle() == pytest.approx(math.pi / 3, rel=1e-12)
    assert dn.radial_plane_factor(1) == pytest.approx(math.pi / 3, rel=1e-14)


def test_reference_readings_disagree_with_radial_value():
    readings = dn.plane_factor_reference_readings(1)
    assert sorted(readings.values()) == pytest.approx([math.pi / 2, math.pi])
    assert all(abs(v - math.pi / 3) > 0.5 for v in readings.values())


@pytest.mark.parametrize("n, expected", [(1, math.pi / 3), (2, math.pi**2 / 5)])
def test_radial_plane_factor_closed_form(n, expected):
    assert dn.radial_plane_factor(n) == pytest.approx(expected, rel=1e-14)


def test_cplane_density_at_origin(h1, koranyi):
    prof = dn.density_profile(cat.cplane(h1, koranyi), np.zeros(3), RADII)
    assert np.allclose(prof.values, radial_oracle(), rtol=1e-2)
    assert prof.kappa_limit == pytest.approx(radial_oracle(), rel=1e-3)
    assert [r[0] for r in prof.rows()] == list(RADII)
    assert list(prof.evaluations) == sorted(prof.evaluations)


def test_vplane_density_is_constant(h1, koranyi):
    prof = dn.density_profile(cat.vplane(h1, koranyi), np.zeros(3), RADII[:4])
    assert np.allclose(prof.values, kappa_oracle(), rtol=2e-3)


def test_sphere_density_tends_to_hyperplane_factor(h1, koranyi):
    S = cat.koranyi_sphere(h1, koranyi)
    prof = dn.density_profile(S, np.array([1.0, 0.0, 0.0]), RADII)
    assert prof.values[0] < prof.values[-1]
    assert prof.values[-1] == pytest.approx(kappa_oracle(), rel=2e-3)
    assert abs(prof.kappa_limit - kappa_oracle()) <= max(prof.kappa_uncertainty, 1e-3)


@pytest.mark.parametrize("r", [1.0, 0.3, 0.01])
def test_blowup_of_dilation_invariant_plane(h1, koranyi, r, rng):
    S = cat.cplane(h1, koranyi)
    B = dn.blowup_surface(S, np.zeros(3), r)
    z = B.charts[0].point(rng.uniform(-1, 1, (20, 2)))
    assert np.max(np.abs(z[:, 2])) <= 1e-15
    assert np.max(np.abs(B.levelset.value(z))) <= 1e-15


def test_blowup_residual_and_gradient(h1, koranyi, rng):
    S = cat.koranyi_sphere(h1, koranyi)
    x = np.array([1.0, 0.0, 0.0])
    B = dn.blowup_surface(S, x, 0.1)
    assert B.residual() <= 1e-10
    z = rng.normal(size=(5, 3))
    assert np.allclose(B.levelset.gradient(z), sf.central_gradient(B.levelset.f, z), rtol=1e-6, atol=1e-6)


def test_richardson_limit_exact_for_quadratics():
    t = np.array([0.4, 0.2, 0.1])
    v = 2.0 + 3.0 * t - 5.0 * t**2
    lim, unc = dn.richardson_limit(t, v, np.zeros(3))
    assert lim == pytest.approx(2.0, abs=1e-13)
    assert unc > 0


def test_locate_out_of_atlas(h1, koranyi):
    with pytest.raises(OutOfAtlasError):
        dn.locate(cat.vplane(h1, koranyi), np.array([0.0, 5.0, 0.0]))
    with pytest.raises(OutOfAtlasError):
        dn.locate(cat.vplane(h1, koranyi), np.array([0.5, 0.0, 0.0]))


def test_default_radii(h1, koranyi):
    S = cat.vplane(h1, koranyi, domain=[[0, 1], [0, 1]])
    assert dn.default_radii(S) == tuple(0.5 * 2.0**-j for j in range(7))


def test_bounds_chain_over_random_directions(h1, koranyi):
    K1, K2 = dn.metric_factor_bounds(h1, koranyi)
    for v in dn.random_directions(2, 16, seed=0):
        k = dn.metric_factor_noncharacteristic(h1, koranyi, v).value
        assert K1 <= k <= K2


def test_heisenberg_bundle(h1, koranyi):
    cb = dn.constants_bundle(h1, koranyi)
    assert cb.c[0] == pytest.approx(0.25, abs=1e-9)
    assert cb.C_dim == pytest.approx(0.5, abs=1e-9)
    assert cb.b1 == pytest.approx(kappa_oracle(), rel=5e-3)
    assert cb.d_rho == pytest.approx(2 * 0.25 * cb.b_rho)
    assert cb.K2 == pytest.approx(8 * math.sqrt(2), rel=1e-3)
    assert any("b_2" in note for note in cb.notes)


def test_characteristic_factor_heisenberg2():
    alg = ca.heisenberg(2)
    rho = hn.HomogeneousNorm(alg, "koranyi")
    po = sf.point_order(cat.cplane(alg, rho), np.zeros(5))
    cfg = qd.QuadratureConfig(method="mc", mc_samples=400_000)
    est = dn.metric_factor_characteristic(alg, rho, po, cfg)
    assert abs(est.value - dn.radial_plane_factor(2)) <= max(4 * est.error_estimate, 2e-3)


def test_characteristic_factor_parabola_regression(h1, koranyi):
    # frozen after the radial check above; t = x1^2 limit graph
    po = sf.point_order(cat.surface_from_spec("graph:t_eq_x1sq", h1, koranyi), np.zeros(3))
    est = dn.metric_factor_characteristic(h1, koranyi, po)
    assert est.value == pytest.approx(0.893269, abs=2e-3)


def test_empty_blowup_has_zero_factor():
    alg = ca.engel()
    rho = hn.HomogeneousNorm(alg)
    po = sf.point_order(cat.surface_from_spec("graph:x4_eq_x3", alg, rho), np.zeros(4))
    est = dn.metric_factor_characteristic(alg, rho, po)
    assert (est.value, est.method) == (0.0, "empty-blowup")


def test_engel_power_norm_below_formula_K1():
    # the hyperplane section obeys the box-section bound, not (2 r_1)^{Q-1}
    alg = ca.engel()
    rho = hn.HomogeneousNorm(alg)
    K1, _ = dn.metric_factor_bounds(alg, rho)
    cfg = qd.QuadratureConfig(method="mc", mc_samples=200_000)
    k = dn.metric_factor_noncharacteristic(alg, rho, np.array([1.0, 0.0]), cfg)
    assert k.value + 5 * k.error_estimate < K1
    assert k.value > dn.box_section_bound(alg, rho)

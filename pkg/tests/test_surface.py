import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carnot_gmt import algebra as ca
from carnot_gmt import catalog as cat
from carnot_gmt import homnorm as hn
from carnot_gmt import surface as sf
from carnot_gmt.errors import CharacteristicPointError, MalformedInputError, NotCharacteristicError


@pytest.fixture(scope="module")
def sphere(h1, koranyi):
    return cat.koranyi_sphere(h1, koranyi)


@pytest.mark.parametrize(
    "spec", ["vplane", "cplane", "koranyi_sphere", "koranyi_sphere(2)", "graph:t_eq_x1sq", "graph:t_eq_x1x2", "graph:t_eq_0"]
)
def test_charts_lie_on_level_set(h1, koranyi, spec):
    S = cat.surface_from_spec(spec, h1, koranyi)
    assert S.residual() <= 1e-12


@pytest.mark.parametrize("spec", ["koranyi_sphere", "graph:t_eq_x1x2", "graph:t_eq_x1sq_minus_x2sq"])
def test_analytic_chart_jacobian(h1, koranyi, spec, rng):
    S = cat.surface_from_spec(spec, h1, koranyi)
    ch = S.charts[0]
    U = rng.uniform(np.array(ch.lo) * 0.9, np.array(ch.hi) * 0.9, (20, 2))
    assert np.allclose(ch.tangents(U), sf._fd_jacobian(ch.F, U), atol=1e-7)


def test_vplane_normal_is_X1(h1, koranyi, rng):
    S = cat.vplane(h1, koranyi)
    x = S.charts[0].point(rng.uniform(-1, 1, (50, 2)))
    nd = sf.normal_data(S, x)
    assert np.allclose(nd.nu_H, [1.0, 0.0])
    assert np.allclose(nd.pH, 1.0)
    assert not nd.char.any()


def test_cplane_horizontal_normal(h1, koranyi):
    # grad_H t = (-y/2, x/2): |P_H nu| = (|x_H|/2) / sqrt(1 + |x_H|^2/4)
    S = cat.cplane(h1, koranyi)
    x = np.array([[0.6, -0.8, 0.0]])
    nd = sf.normal_data(S, x)
    assert nd.pH[0] == pytest.approx(0.5 / np.sqrt(1.25), rel=1e-14)
    assert np.allclose(nd.nu_H[0], [0.8, 0.6])


@pytest.mark.parametrize("spec", ["vplane", "cplane", "graph:t_eq_0"])
def test_planes_are_H_minimal(h1, koranyi, spec, rng):
    S = cat.surface_from_spec(spec, h1, koranyi)
    x = S.charts[0].point(rng.uniform(0.2, 1, (25, 2)))
    assert np.max(np.abs(sf.mean_curvature_at(S, x))) <= 1e-12


def test_sphere_mean_curvature(sphere, rng):
    U = rng.uniform([-1.4, -3.1], [1.4, 3.1], (25, 2))
    X = sphere.charts[0].point(U)
    H = sf.mean_curvature_at(sphere, X)
    # derived on the unit gauge sphere: H_H = -(Q - 1) |x_H|
    assert np.allclose(H, -3 * np.linalg.norm(X[:, :2], axis=1), rtol=1e-10)
    fd = np.array([sf.mean_curvature_fd(sphere, x) for x in X])
    assert np.allclose(H, fd, atol=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_graph_mean_curvature_matches_fd(a, b):
    alg = ca.heisenberg(1)
    rho = hn.HomogeneousNorm(alg, "koranyi")
    S = cat.surface_from_spec("graph:t_eq_x1x2", alg, rho)
    x = S.charts[0].point(np.array([a, b]))
    if sf.normal_data(S, x).pH < 1e-2:
        return
    assert float(sf.mean_curvature_at(S, x)) == pytest.approx(sf.mean_curvature_fd(S, x), abs=1e-4)


def test_sphere_characteristic_points_are_poles(sphere):
    found = sf.characteristic_scan(sphere)
    poles = sorted(round(c.u[0], 12) for c in found)
    assert poles == [round(-np.pi / 2, 12), round(np.pi / 2, 12)]
    assert all(c.pH < 1e-12 for c in found)


def test_cplane_characteristic_only_at_origin(h1, koranyi):
    found = sf.characteristic_scan(cat.cplane(h1, koranyi))
    assert len(found) == 1
    assert np.allclose(found[0].u, [0.0, 0.0], atol=1e-9)


def test_vplane_has_no_characteristic_points(h1, koranyi):
    assert sf.characteristic_scan(cat.vplane(h1, koranyi)) == []


def test_point_data_and_characteristic_errors(h1, koranyi):
    S = cat.cplane(h1, koranyi)
    ch = S.charts[0]
    pd = sf.point_data(S, ch, np.zeros(2))
    assert pd.is_characteristic and pd.nu_H is None and np.isnan(pd.mean_curv_H)
    with pytest.raises(CharacteristicPointError):
        sf.mean_curvature_H(S, ch, np.zeros(2))
    with pytest.raises(MalformedInputError):
        sf.point_data(S, ch, np.array([5.0, 0.0]))


@pytest.mark.parametrize(
    "spec, group, order, layer, empty",
    [
        ("cplane", "heisenberg1", 2, 2, False),
        ("graph:t_eq_x1sq", "heisenberg1", 2, 2, False),
        ("cplane", "heisenberg2", 4, 2, False),
        ("graph:x4_eq_x3", "engel", 4, 3, True),
        ("graph:x4_eq_x1cube", "engel", 4, 3, False),
    ],
)
def test_point_order(spec, group, order, layer, empty):
    alg = ca.BUILTIN_GROUPS[group]()
    rho = hn.norm_from_json(None, alg)
    S = cat.surface_from_spec(spec, alg, rho)
    po = sf.point_order(S, np.zeros(alg.n))
    assert (po.order, po.layer, po.empty) == (order, layer, empty)


def test_point_order_limit_polynomial(h1, koranyi):
    po = sf.point_order(cat.surface_from_spec("graph:t_eq_x1sq", h1, koranyi), np.zeros(3))
    assert po.psi_tilde.describe() == "1*z1^2"


def test_point_order_rejects_noncharacteristic(h1, koranyi):
    S = cat.surface_from_spec("graph:t_eq_x1x2", h1, koranyi)
    with pytest.raises(NotCharacteristicError):
        sf.point_order(S, np.array([0.5, 0.5, 0.25]), psi=lambda z: z[..., 0] * z[..., 1] + 0.5 * z[..., 1] + 0.5 * z[..., 0])
    with pytest.raises(NotCharacteristicError):
        sf.point_order(cat.vplane(h1, koranyi), np.zeros(3), alpha=0)


def test_hs_divergence_of_constant_field_on_vplane(h1, koranyi, rng):
    S = cat.vplane(h1, koranyi)
    X = sf.HorizontalField(lambda x: np.broadcast_to([0.0, 1.0], x.shape[:-1] + (2,)).copy())
    U = rng.uniform(-1, 1, (10, 2))
    assert np.allclose([sf.hs_divergence(S, S.charts[0], u, X) for u in U], 0.0, atol=1e-8)


@pytest.mark.parametrize(
    "spec",
    ["torus", {"domain": [[0, 1]]}, {"name": "vplane", "domain": [[0, 1]]}, {"name": "koranyi_sphere", "R": -1}, "graph:nope"],
)
def test_malformed_surface_specs(h1, koranyi, spec):
    with pytest.raises(MalformedInputError):
        cat.surface_from_spec(spec, h1, koranyi)

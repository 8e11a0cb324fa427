import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from carnot_gmt import algebra as ca
from carnot_gmt.errors import MalformedInputError, StructureError, UnsupportedStepError

GROUPS = sorted(ca.BUILTIN_GROUPS)


def heisenberg_law(x, y):
    """Closed-form product in H^1 exponential coordinates."""
    z = x + y
    z[..., 2] += 0.5 * (x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0])
    return z


@pytest.mark.parametrize("name", GROUPS)
def test_builtin_groups_validate_exactly(name):
    rep = ca.validate_structure(ca.BUILTIN_GROUPS[name]())
    assert rep.antisymmetry_residual == 0
    assert rep.jacobi_residual == 0
    assert rep.grading_violations == []
    assert rep.all_pass


@pytest.mark.parametrize(
    "name, dims, Q",
    [("heisenberg1", (2, 1), 4), ("heisenberg2", (4, 1), 6), ("engel", (2, 1, 1), 7)],
)
def test_homogeneous_dimension(name, dims, Q):
    alg = ca.BUILTIN_GROUPS[name]()
    assert alg.layer_dims == dims
    assert alg.Q == Q
    assert alg.n == sum(dims)


@pytest.mark.parametrize(
    "spec, failing",
    [
        ({"layer_dims": [2, 1, 1], "brackets": [[1, 2, 4, 1]]}, "grading"),
        ({"layer_dims": [3, 1, 1], "brackets": [[1, 2, 4, 1], [2, 3, 4, 1], [1, 4, 5, 1], [3, 4, 5, 1]]}, "jacobi"),
        ({"layer_dims": [2, 1], "brackets": [[1, 2, 3, 1], [2, 1, 3, 1]], "complete": False}, "antisymmetry"),
    ],
)
def test_violations_are_localized(spec, failing):
    rep = ca.validate_structure(ca.algebra_from_json(spec))
    assert not rep.all_pass
    if failing == "grading":
        assert (1, 2, 4) in rep.grading_violations
        assert rep.bracket_generating[1] is False
    elif failing == "jacobi":
        assert rep.jacobi_violations == [(1, 2, 3)]
        assert rep.jacobi_residual == 2.0
    else:
        assert rep.antisymmetry_violations == [(1, 2, 3)]


@pytest.mark.parametrize(
    "spec, exc",
    [
        ("nilpotent9", MalformedInputError),
        (42, MalformedInputError),
        ({"brackets": []}, MalformedInputError),
        ({"layer_dims": [2, 1], "n": 4}, StructureError),
        ({"layer_dims": [2, 1], "brackets": [[1, 2, 5, 1]]}, StructureError),
        ({"layer_dims": [2, 1], "brackets": [[1, 2, 3]]}, StructureError),
        ({"layer_dims": [0, 1]}, StructureError),
    ],
)
def test_malformed_group_specs(spec, exc):
    with pytest.raises(exc):
        ca.algebra_from_json(spec)


def test_bch_matches_closed_form_heisenberg(h1, rng):
    x, y = rng.normal(size=(2, 1000, 3)) * 3.0
    assert np.max(np.abs(ca.bch_product(h1, x, y) - heisenberg_law(x, y))) <= 1e-12


def test_step_five_rejected():
    rows = [[1, 2, 3, 1], [1, 3, 4, 1], [1, 4, 5, 1], [1, 5, 6, 1]]
    alg = ca.StratifiedAlgebra.from_brackets((2, 1, 1, 1, 1), rows)
    with pytest.raises(UnsupportedStepError):
        ca.bch_product(alg, np.zeros(6), np.zeros(6))


coords = arrays(np.float64, 4, elements=st.floats(-2, 2))


@settings(max_examples=60, deadline=None)
@given(coords, coords, coords)
def test_engel_associativity(a, b, c):
    alg = ca.engel()
    lhs = ca.bch_product(alg, ca.bch_product(alg, a, b), c)
    rhs = ca.bch_product(alg, a, ca.bch_product(alg, b, c))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(lhs)))


@pytest.mark.parametrize("name", GROUPS)
def test_associativity_and_inverse(name, rng):
    alg = ca.BUILTIN_GROUPS[name]()
    a, b, c = rng.uniform(-1, 1, (3, 500, alg.n))
    lhs = ca.bch_product(alg, ca.bch_product(alg, a, b), c)
    rhs = ca.bch_product(alg, a, ca.bch_product(alg, b, c))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12
    assert np.max(np.abs(ca.bch_product(alg, a, ca.inverse(alg, a)))) <= 1e-15


@pytest.mark.parametrize("name", GROUPS)
def test_dilation_is_automorphism(name, rng):
    alg = ca.BUILTIN_GROUPS[name]()
    a, b = rng.uniform(-1, 1, (2, 200, alg.n))
    t = 1.7
    lhs = ca.dilate(alg, t, ca.bch_product(alg, a, b))
    rhs = ca.bch_product(alg, ca.dilate(alg, t, a), ca.dilate(alg, t, b))
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_negative_dilation_rejected(h1):
    with pytest.raises(MalformedInputError):
        ca.dilate(h1, -1.0, np.ones(3))


@pytest.mark.parametrize("name", GROUPS)
def test_frame_is_left_invariant(name, rng):
    alg = ca.BUILTIN_GROUPS[name]()
    x, z = rng.uniform(-1, 1, (2, 50, alg.n))
    J = ca.left_translation_jacobian(alg, x, z)
    xz = ca.bch_product(alg, x, z)
    assert np.allclose(ca.left_invariant_frame(alg, xz), J @ ca.left_invariant_frame(alg, z), atol=1e-12)
    assert np.allclose(ca.left_translation_jacobian(alg, x, 0 * z), ca.left_invariant_frame(alg, x), atol=1e-14)


@pytest.mark.parametrize("name", GROUPS)
def test_translation_jacobian_matches_finite_differences(name, rng):
    alg = ca.BUILTIN_GROUPS[name]()
    x, z = rng.uniform(-1, 1, (2, alg.n))
    h = 1e-6
    fd = np.column_stack(
        [(ca.bch_product(alg, x, z + h * e) - ca.bch_product(alg, x, z - h * e)) / (2 * h) for e in np.eye(alg.n)]
    )
    assert np.allclose(ca.left_translation_jacobian(alg, x, z), fd, atol=1e-8)


@pytest.mark.parametrize("name", GROUPS)
def test_frame_derivatives_match_finite_differences(name, rng):
    alg = ca.BUILTIN_GROUPS[name]()
    x = rng.uniform(-1, 1, alg.n)
    h = 1e-6
    fd = np.stack(
        [(ca.left_invariant_frame(alg, x + h * e) - ca.left_invariant_frame(alg, x - h * e)) / (2 * h) for e in np.eye(alg.n)]
    )
    assert np.allclose(ca.frame_derivatives(alg, x), fd, atol=1e-8)


def test_heisenberg_frame_closed_form(h1):
    x = np.array([0.3, -1.2, 0.5])
    F = ca.left_invariant_frame(h1, x)
    # X1 = d1 - y/2 dt, X2 = d2 + x/2 dt, T = dt
    expected = np.array([[1, 0, 0], [0, 1, 0], [0.6, 0.15, 1]])
    assert np.allclose(F, expected, atol=1e-15)


@pytest.mark.parametrize("name", GROUPS)
def test_homothety_field_is_derivative_of_dilation(name, rng):
    alg = ca.BUILTIN_GROUPS[name]()
    x, y = rng.uniform(-1, 1, (2, alg.n))
    z = ca.bch_product(alg, ca.inverse(alg, x), y)
    h = 1e-6
    curve = lambda t: ca.bch_product(alg, x, ca.dilate(alg, t, z))
    fd = (curve(1 + h) - curve(1 - h)) / (2 * h)
    assert np.allclose(ca.homothety_coords(alg, x, y), fd, atol=1e-8)
    assert np.allclose(ca.to_frame(alg, y, fd), ca.homothety_vector(alg, x, y), atol=1e-8)

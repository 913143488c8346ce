import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edfrac.errors import NonPositiveJacobian
from edfrac.quad4 import (GAUSS_POINTS, GAUSS_WEIGHTS, b_matrix, elasticity_matrix,
                          element_ops, jacobian, shape_functions)

from conftest import random_convex_quad, shoelace_area

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def test_gauss_rule_is_two_by_two():
    g = 1.0 / np.sqrt(3.0)
    assert sorted(map(tuple, np.round(GAUSS_POINTS, 12).tolist())) == sorted(
        [(-g, -g), (g, -g), (-g, g), (g, g)]
    ) or np.allclose(np.abs(GAUSS_POINTS), g)
    assert np.allclose(GAUSS_WEIGHTS, 1.0)


def test_shape_functions_at_centroid():
    n, _ = shape_functions(0.0, 0.0)
    assert np.allclose(n, 0.25)


def test_shape_functions_kronecker_at_node():
    n, _ = shape_functions(-1.0, -1.0)
    assert np.allclose(n, [1.0, 0.0, 0.0, 0.0])


def test_shape_functions_edge_midpoint():
    n, _ = shape_functions(1.0, 0.0)
    assert np.allclose(n, [0.0, 0.5, 0.5, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_partition_of_unity(xi, eta):
    n, dn = shape_functions(xi, eta)
    assert abs(n.sum() - 1.0) < 1e-14
    assert np.all(np.abs(dn.sum(axis=0)) < 1e-14)


def test_jacobian_unit_square():
    _, det, _ = jacobian(UNIT_SQUARE, 0.3, -0.7)
    assert det == pytest.approx(0.25)


def test_jacobian_scaled_square():
    # 200 mm square: the bilinear map is affine with determinant 100^2
    _, det, _ = jacobian(200.0 * UNIT_SQUARE, 0.1, 0.9)
    assert det == pytest.approx(100.0 ** 2)
    # finite-difference check of the map itself
    eps = 1e-6
    coords = 200.0 * UNIT_SQUARE

    def xmap(xi, eta):
        n, _ = shape_functions(xi, eta)
        return n @ coords

    j, _, _ = jacobian(coords, 0.1, 0.9)
    fd = np.column_stack([
        (xmap(0.1 + eps, 0.9) - xmap(0.1 - eps, 0.9)) / (2 * eps),
        (xmap(0.1, 0.9 + eps) - xmap(0.1, 0.9 - eps)) / (2 * eps),
    ])
    assert np.allclose(j, fd, rtol=1e-8)


def test_jacobian_rejects_self_intersecting_quad():
    bad = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(NonPositiveJacobian):
        jacobian(bad, 0.5, 0.5)


def test_b_matrix_rigid_translation():
    _, _, dn = jacobian(UNIT_SQUARE, 0.2, -0.4)
    b = b_matrix(dn)
    d = np.tile([0.7, 0.7], 4)
    assert np.allclose(b @ d, 0.0, atol=1e-14)


def test_b_matrix_linear_field():
    # u_x = x gives eps_xx = 1, all else zero
    _, _, dn = jacobian(UNIT_SQUARE, 0.2, -0.4)
    b = b_matrix(dn)
    d = np.zeros(8)
    d[0::2] = UNIT_SQUARE[:, 0]
    assert np.allclose(b @ d, [1.0, 0.0, 0.0], atol=1e-13)


def test_b_matrix_matches_finite_difference(rng):
    coords = random_convex_quad(rng)
    d = rng.normal(size=8)

    def disp(xi, eta):
        n, _ = shape_functions(xi, eta)
        return n @ d.reshape(4, 2)

    def phys(xi, eta):
        n, _ = shape_functions(xi, eta)
        return n @ coords

    xi0, eta0 = 0.17, -0.42
    _, _, dn = jacobian(coords, xi0, eta0)
    strain = b_matrix(dn) @ d

    # central differences of u(x(xi)) via the inverse map along physical axes
    h = 1e-6
    j, _, _ = jacobian(coords, xi0, eta0)
    jinv = np.linalg.inv(j)
    grads = np.zeros((2, 2))
    for axis in range(2):
        dxi = jinv[:, axis] * h
        up = disp(xi0 + dxi[0], eta0 + dxi[1])
        dm = disp(xi0 - dxi[0], eta0 - dxi[1])
        grads[:, axis] = (up - dm) / (2 * h)
    fd_strain = np.array([grads[0, 0], grads[1, 1], grads[0, 1] + grads[1, 0]])
    assert np.allclose(strain, fd_strain, rtol=1e-6, atol=1e-9)


def test_incompatible_operators_quadrature_orthogonality(rng):
    for _ in range(1000):
        ops = element_ops(random_convex_quad(rng))
        resid = np.tensordot(ops.wdet, ops.g_tilde, axes=1)
        scale = max(np.abs(ops.g_raw).max(), 1.0)
        assert np.abs(resid).max() < 1e-12 * scale


def test_incompatible_operators_match_raw_on_rectangle():
    # the raw bubble gradients are odd over a rectangle, so their mean vanishes
    rect = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 2.0], [0.0, 2.0]])
    ops = element_ops(rect)
    assert np.allclose(ops.g_tilde, ops.g_raw, atol=1e-15)


def test_incompatible_operators_parent_square():
    ops = element_ops(np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]))
    assert np.allclose(ops.g_tilde, ops.g_raw, atol=1e-15)


def test_quadrature_exact_for_bilinear_products(rng):
    # 2x2 Gauss integrates products of bilinear functions exactly on the parent square
    for _ in range(20):
        a = rng.normal(size=4)
        b = rng.normal(size=4)

        def bilin(c, xi, eta):
            return c[0] + c[1] * xi + c[2] * eta + c[3] * xi * eta

        quad = sum(w * bilin(a, x, e) * bilin(b, x, e)
                   for (x, e), w in zip(GAUSS_POINTS, GAUSS_WEIGHTS))
        # exact integral over [-1,1]^2
        exact = 4 * a[0] * b[0] + (4 / 3) * (a[1] * b[1] + a[2] * b[2]) \
            + (4 / 9) * a[3] * b[3]
        assert quad == pytest.approx(exact, rel=1e-13, abs=1e-13)


def test_element_area_matches_shoelace(rng):
    for _ in range(1000):
        coords = random_convex_quad(rng, scale=rng.uniform(0.5, 50.0))
        ops = element_ops(coords)
        assert ops.area == pytest.approx(shoelace_area(coords), rel=1e-12)


def test_elasticity_matrix_properties():
    for plane in ("stress", "strain"):
        c = elasticity_matrix(30000.0, 0.2, plane)
        assert np.allclose(c, c.T)
        assert np.all(np.linalg.eigvalsh(c) > 0)
    with pytest.raises(ValueError):
        elasticity_matrix(1.0, 0.5, "strain")
    with pytest.raises(ValueError):
        elasticity_matrix(1.0, 0.3, "axisym")

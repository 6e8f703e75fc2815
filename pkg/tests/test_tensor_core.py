"""Basis, quadrature, and symmetric-tensor plumbing."""
import itertools
import math

import numpy as np
import pytest

from rheoflow.tensor_core import (
    TWO_PI,
    SQRT2,
    BasisTables,
    DivFreeMode,
    QuadratureGrid,
    SymMat3,
    VelocityField,
    build_divfree_basis,
    eval_grad,
    eval_symgrad,
    eval_velocity,
    integrate,
    sym_from_matrix,
    sym_to_matrix,
)


def reference_mode_count(kmax):
    """Sign-distinct wavevectors in the sup-norm box, four modes each."""
    n = 0
    for k in itertools.product(range(-kmax, kmax + 1), repeat=3):
        if k == (0, 0, 0):
            continue
        first = next(v for v in k if v != 0)
        if first > 0:
            n += 1
    return 4 * n


def direct_velocity(modes, a, x):
    """Mode-by-mode scalar evaluation, independent of the batched tables."""
    u = np.zeros(3)
    for m, c in zip(modes, a):
        theta = TWO_PI * float(np.dot(m.k, x))
        trig = math.sin(theta) if m.parity == "sin" else math.cos(theta)
        u += c * SQRT2 * trig * np.asarray(m.e)
    return u


def test_mode_counts_match_combinatorics():
    for kmax in (1, 2, 3):
        assert len(build_divfree_basis(kmax)) == reference_mode_count(kmax)
    assert len(build_divfree_basis(1)) == 52
    assert len(build_divfree_basis(2)) == 248


def test_modes_are_divergence_free_with_orthonormal_polarizations():
    for m in build_divfree_basis(2):
        k = np.asarray(m.k, dtype=float)
        e = np.asarray(m.e, dtype=float)
        assert abs(e @ k) <= 1e-13 * np.linalg.norm(k)
        assert abs(np.linalg.norm(e) - 1.0) <= 1e-13
    # the two polarizations of each (k, parity) slot are mutually orthogonal
    basis = build_divfree_basis(1)
    by_slot = {}
    for m in basis:
        by_slot.setdefault((m.k, m.parity), []).append(np.asarray(m.e))
    for pair in by_slot.values():
        assert len(pair) == 2
        assert abs(pair[0] @ pair[1]) <= 1e-13


def test_mode_ordering_is_stable():
    basis = build_divfree_basis(1)
    first = basis[0]
    assert first.k == (0, 0, 1)
    assert first.parity == "cos"
    np.testing.assert_allclose(first.e, (0.0, 1.0, 0.0), atol=1e-15)
    # the slot the decay configs excite
    tenth = basis[10]
    assert tenth.k == (1, 0, 0)
    assert tenth.parity == "cos"
    np.testing.assert_allclose(tenth.e, (0.0, -1.0, 0.0), atol=1e-15)


def test_orthonormality_on_exact_product_grid():
    basis = build_divfree_basis(1)
    tables = BasisTables(basis, QuadratureGrid.for_products(1, 2))
    gram = (tables.E @ tables.E.T) \
        * (tables.values @ tables.values.T) / tables.n_nodes
    np.testing.assert_allclose(gram, np.eye(len(basis)), atol=1e-12)


def test_parseval_identity():
    rng = np.random.default_rng(7)
    basis = build_divfree_basis(2)
    a = rng.standard_normal(len(basis))
    field = VelocityField(basis, a, t=0.0)
    grid = QuadratureGrid.for_products(2, 2)
    u = eval_velocity(field, grid.points())
    mean_sq = float(np.mean(np.sum(u * u, axis=1)))
    assert abs(mean_sq - float(a @ a)) <= 1e-10 * float(a @ a)


def test_velocity_matches_direct_mode_sum():
    rng = np.random.default_rng(3)
    basis = build_divfree_basis(1)
    a = rng.standard_normal(len(basis))
    field = VelocityField(basis, a, t=0.0)
    for x in rng.random((5, 3)):
        np.testing.assert_allclose(eval_velocity(field, x),
                                   direct_velocity(basis, a, x),
                                   rtol=0.0, atol=1e-12)


def test_evaluation_is_exactly_periodic():
    rng = np.random.default_rng(11)
    basis = build_divfree_basis(2)
    a = rng.standard_normal(len(basis))
    field = VelocityField(basis, a, t=0.0)
    x = np.array([0.125, 0.5, 0.75])  # dyadic, so x+1 is exact in float
    shifted = x + np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(eval_velocity(field, x),
                                  eval_velocity(field, shifted))


def test_symgrad_and_grad_match_finite_differences():
    rng = np.random.default_rng(5)
    basis = build_divfree_basis(1)
    a = rng.standard_normal(len(basis))
    field = VelocityField(basis, a, t=0.0)
    h = 1e-5
    for x in rng.random((3, 3)):
        grad_fd = np.empty((3, 3))
        for j in range(3):
            step = np.zeros(3)
            step[j] = h
            grad_fd[:, j] = (eval_velocity(field, x + step)
                             - eval_velocity(field, x - step)) / (2.0 * h)
        np.testing.assert_allclose(eval_grad(field, x), grad_fd, atol=1e-8)
        d = eval_symgrad(field, x)
        np.testing.assert_allclose(d.as_matrix(), 0.5 * (grad_fd + grad_fd.T),
                                   atol=1e-8)
        assert abs(d.trace()) <= 1e-12 * max(1.0, d.norm())


def test_quadrature_integrates_low_modes_exactly():
    grid = QuadratureGrid(5, 1, 2)

    def one_mode(pts):
        return np.cos(TWO_PI * pts[:, 0])

    def squared(pts):
        return 2.0 * np.cos(TWO_PI * pts[:, 0]) ** 2

    def cross(pts):
        return np.cos(TWO_PI * pts[:, 0]) * np.cos(TWO_PI * pts[:, 1])

    assert abs(integrate(grid, one_mode)) <= 1e-15
    assert abs(integrate(grid, squared) - 1.0) <= 1e-14
    assert abs(integrate(grid, cross)) <= 1e-15


def test_quadrature_resolution_guard():
    with pytest.raises(ValueError):
        QuadratureGrid(4, 1, 2)  # 4 <= 2*1*2 cannot integrate the products
    assert QuadratureGrid.for_products(1, 2).resolution == 5
    assert QuadratureGrid.for_products(2, 3).resolution == 13


def test_symmat3_roundtrip_and_inner_product():
    m = np.array([[1.0, 0.5, -0.25],
                  [0.5, 2.0, 0.75],
                  [-0.25, 0.75, 3.0]])
    s = SymMat3.from_matrix(m)
    np.testing.assert_array_equal(s.as_matrix(), m)
    assert s.trace() == 6.0
    assert abs(s.norm() - np.linalg.norm(m)) <= 1e-15
    other = SymMat3.identity()
    assert s.inner(other) == s.trace()
    with pytest.raises(ValueError):
        SymMat3.from_matrix(m + np.array([[0.0, 1.0, 0.0]] + [[0.0] * 3] * 2))


def test_sym_matrix_helpers_roundtrip_batches():
    rng = np.random.default_rng(9)
    g = rng.standard_normal((10, 3, 3))
    mats = 0.5 * (g + np.swapaxes(g, -1, -2))
    np.testing.assert_allclose(sym_to_matrix(sym_from_matrix(mats)), mats,
                               atol=1e-15)


def test_outer_product_builder():
    v = np.array([1.0, 2.0, -1.0])
    np.testing.assert_array_equal(SymMat3.outer(v).as_matrix(), np.outer(v, v))


def test_velocity_field_validation():
    basis = build_divfree_basis(1)
    with pytest.raises(ValueError):
        VelocityField(basis, np.zeros(len(basis) - 1), t=0.0)
    bad = np.zeros(len(basis))
    bad[0] = np.nan
    with pytest.raises(ValueError):
        VelocityField(basis, bad, t=0.0)
    field = VelocityField(basis, np.zeros(len(basis)), t=0.0)
    assert not field.coefficients.flags.writeable


def test_tables_agree_with_pointwise_evaluators():
    rng = np.random.default_rng(13)
    basis = build_divfree_basis(1)
    tables = BasisTables(basis, QuadratureGrid.for_products(1, 3))
    a = rng.standard_normal(len(basis))
    field = VelocityField(basis, a, t=0.0)
    pts = tables.points

    np.testing.assert_allclose(tables.velocity_nodes(a).T,
                               eval_velocity(field, pts), atol=1e-12)
    np.testing.assert_allclose(tables.symgrad_nodes(a).T,
                               eval_symgrad(field, pts), atol=1e-12)
    recovered = tables.project(tables.velocity_nodes(a))
    np.testing.assert_allclose(recovered, a, atol=1e-12)
    off_grid = rng.random((20, 3))
    np.testing.assert_allclose(tables.velocity_at(a, off_grid),
                               eval_velocity(field, off_grid), atol=1e-12)


def test_custom_mode_construction():
    mode = DivFreeMode(k=(2, 0, 0), polarization=0, parity="sin",
                       e=(0.0, 1.0, 0.0))
    field = VelocityField([mode], np.array([1.0]), t=0.0)
    x = np.array([0.125, 0.3, 0.9])
    expected = SQRT2 * math.sin(TWO_PI * 0.25) * np.array([0.0, 1.0, 0.0])
    np.testing.assert_allclose(eval_velocity(field, x), expected, atol=1e-14)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hodgewave.fespace import (
    MAX_DEGREE,
    FESpace,
    SpaceLayout,
    edge_quadrature,
    l2_project,
    reference_basis,
    trace_basis,
    triangle_quadrature,
)
from hodgewave.mesh import build_periodic_rect_mesh


def moment(a, b):
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("order", [0, 1, 2, 5, 9, 13, 20])
def test_triangle_rule_moments(order):
    q = triangle_quadrature(order)
    x, y = q.points.T
    for d in range(order + 1):
        for b in range(d + 1):
            a = d - b
            assert np.sum(q.weights * x**a * y**b) == pytest.approx(moment(a, b), rel=1e-13, abs=1e-14)
    assert np.all(q.weights > 0)


def test_triangle_rule_weight_sum():
    assert triangle_quadrature(2).weights.sum() == pytest.approx(0.5, abs=1e-15)


def test_triangle_rule_rejects_unsupported():
    with pytest.raises(ValueError):
        triangle_quadrature(-1)
    with pytest.raises(ValueError):
        triangle_quadrature(1000)


def test_edge_rule():
    q = edge_quadrature(5)
    assert len(q.points) == 3
    assert np.sum(q.weights * q.points**5) == pytest.approx(1 / 6, abs=1e-15)
    # symmetric about the midpoint
    assert np.allclose(np.sort(q.points), np.sort(1.0 - q.points), atol=1e-15)


@pytest.mark.parametrize("order", range(12))
def test_edge_rule_exactness(order):
    q = edge_quadrature(order)
    for k in range(order + 1):
        assert np.sum(q.weights * q.points**k) == pytest.approx(1.0 / (k + 1), abs=1e-14)


def test_r0_basis_is_sqrt2():
    B = reference_basis(0)
    assert B.dim == 1
    assert np.allclose(B.values([[0.2, 0.3], [0.0, 1.0]]), math.sqrt(2.0))


@pytest.mark.parametrize("r", range(MAX_DEGREE + 1))
def test_basis_orthonormal(r):
    B = reference_basis(r)
    assert B.dim == (r + 1) * (r + 2) // 2
    q = triangle_quadrature(2 * r)
    V = B.values(q.points)
    G = V.T @ (q.weights[:, None] * V)
    assert np.abs(G - np.eye(B.dim)).max() <= 1e-13


def test_basis_gradients_match_finite_differences():
    B = reference_basis(3)
    p = np.array([[0.21, 0.33]])
    h = 1e-6
    gx = (B.values(p + [h, 0]) - B.values(p - [h, 0])) / (2 * h)
    gy = (B.values(p + [0, h]) - B.values(p - [0, h])) / (2 * h)
    g = B.gradients(p)
    assert np.allclose(g[0, :, 0], gx[0], atol=1e-7)
    assert np.allclose(g[0, :, 1], gy[0], atol=1e-7)


def test_unsupported_degree():
    with pytest.raises(ValueError):
        reference_basis(MAX_DEGREE + 1)


def test_cubic_monomials_reproduced():
    B = reference_basis(3)
    q = triangle_quadrature(8)
    V = B.values(q.points)
    x, y = q.points.T
    rng = np.random.default_rng(0)
    pts = rng.random((20, 2)) * 0.5
    for a, b in B.exponents:
        c = V.T @ (q.weights * x**a * y**b)
        assert np.abs(B.values(pts) @ c - pts[:, 0] ** a * pts[:, 1] ** b).max() <= 1e-13


def test_trace_basis_orthonormal():
    q = edge_quadrature(12)
    T = trace_basis(4, q.points)
    G = T.T @ (q.weights[:, None] * T)
    assert np.abs(G - np.eye(5)).max() <= 1e-14


def test_layout_counts():
    lay = SpaceLayout(2, 10, 15)
    assert (lay.d0, lay.dt) == (6, 3)
    assert lay.n_scalar == 60 and lay.n_vector == 120 and lay.n_trace == 45
    blocks = [lay.vector_dofs(e, c) for e in range(10) for c in (0, 1)]
    assert np.array_equal(np.concatenate(blocks), np.arange(120))
    assert np.array_equal(np.concatenate([lay.trace_dofs(f) for f in range(15)]), np.arange(45))


def test_mass_matrix_is_scaled_identity():
    V = FESpace(build_periodic_rect_mesh(3, 2, 1.0, 0.4), 3)
    q = V.vol_quad
    phi = V.phi_vol
    for e in range(V.mesh.n_elements):
        M = V.mesh.det[e] * phi.T @ (q.weights[:, None] * phi)
        assert np.allclose(M, V.mesh.det[e] * np.eye(V.layout.d0), atol=1e-13)


def test_project_constant_vector():
    V = FESpace(build_periodic_rect_mesh(3, 2, 1.0, 1.0), 2)
    c = l2_project(lambda x, y: np.stack([np.ones_like(x), np.zeros_like(x)], -1), V, 1)
    vals = V.eval_at(c, 1, np.array([[0.1, 0.2], [0.7, 0.1]]))
    assert np.abs(vals - [1.0, 0.0]).max() <= 1e-13


@pytest.mark.parametrize("r", [2, 3])
def test_project_xy_exact(r):
    V = FESpace(build_periodic_rect_mesh(3, 2, 1.0, 1.0), r)
    c = l2_project(lambda x, y: x * y, V, 0)
    xh = np.array([[0.1, 0.2], [0.3, 0.6], [0.0, 0.0]])
    X = V.physical_points(xh)
    assert np.abs(V.eval_at(c, 0, xh) - X[..., 0] * X[..., 1]).max() <= 1e-12


def test_projection_rate_plane_wave():
    errs = []
    for n in (10, 20, 40):
        V = FESpace(build_periodic_rect_mesh(n, max(1, n // 10), 1.0, 0.1), 1)
        c = l2_project(lambda x, y: np.stack([0 * x, np.sin(4 * np.pi * x)], -1), V, 1)
        q = triangle_quadrature(6)
        X = V.physical_points(q.points)
        err = V.eval_at(c, 1, q.points)[..., 1] - np.sin(4 * np.pi * X[..., 0])
        errs.append(np.sqrt(np.sum(q.weights * V.mesh.det[:, None] * err**2)))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all((rates > 1.8) & (rates < 2.3))


@settings(max_examples=25, deadline=None)
@given(r=st.integers(0, 3), seed=st.integers(0, 2**31 - 1), deg=st.sampled_from([0, 1, 2]))
def test_projection_idempotent(r, seed, deg):
    V = FESpace(build_periodic_rect_mesh(2, 2, 1.0, 1.0), r)
    c = np.random.default_rng(seed).standard_normal(V.layout.size(deg))
    q = triangle_quadrature(2 * r + 2)
    X = V.physical_points(q.points)

    # evaluate the discrete field at arbitrary physical points through element lookup
    vals = V.eval_at(c, deg, q.points)
    lookup = {tuple(np.round(p, 12)): v for p, v in zip(X.reshape(-1, 2), vals.reshape(len(X.reshape(-1, 2)), -1))}

    def f(x, y):
        out = np.array([lookup[tuple(np.round(p, 12))] for p in np.stack([x, y], -1).reshape(-1, 2)])
        return out.reshape(x.shape + ((2,) if deg == 1 else ()))

    c2 = l2_project(f, V, deg, order=2 * r + 2)
    assert np.abs(c2 - c).max() <= 1e-12

"""Broken polynomial spaces on triangles and single-valued facet trace spaces.

The scalar element basis is the graded-lexicographic monomial set
orthonormalised on the reference triangle, so every physical element mass
matrix is ``|det J|`` times the identity.  Vector fields are two independent
scalar copies.  Facet traces use Legendre polynomials orthonormal in physical
arclength, so trace mass matrices are the identity.

Global layouts (all element-major, contiguous):

* scalar spaces (0- and 2-forms): ``e * d0 + i``
* vector space (1-forms): ``(e * 2 + c) * d0 + i``
* each trace space: ``f * (r + 1) + j``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .mesh import Mesh

__all__ = [
    "MAX_DEGREE",
    "MAX_TRIANGLE_ORDER",
    "QuadRule",
    "ReferenceBasis",
    "SpaceLayout",
    "FESpace",
    "reference_basis",
    "triangle_quadrature",
    "edge_quadrature",
    "l2_project",
]

MAX_DEGREE = 5
# collapsed Gauss rules exist for every order; the cap only guards against typos
MAX_TRIANGLE_ORDER = 30


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    order: int


@lru_cache(maxsize=None)
def triangle_quadrature(order: int) -> QuadRule:
    """Collapsed (Duffy) Gauss-Legendre rule on the reference triangle.

    Exact for total degree <= ``order``; all weights positive.
    """
    if int(order) != order or order < 0 or order > MAX_TRIANGLE_ORDER:
        raise ValueError(f"unsupported triangle quadrature order {order}")
    n = max(1, math.ceil((order + 2) / 2))
    g, w = legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(g, g, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    x = s.ravel()
    y = (t * (1.0 - s)).ravel()
    wts = (ws * wt * (1.0 - s)).ravel()
    pts = np.column_stack([x, y])
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, int(order))


@lru_cache(maxsize=None)
def edge_quadrature(order: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] with ceil((order+1)/2) points."""
    if int(order) != order or order < 0:
        raise ValueError(f"unsupported edge quadrature order {order}")
    n = max(1, math.ceil((order + 1) / 2))
    g, w = legendre.leggauss(n)
    pts = 0.5 * (g + 1.0)
    wts = 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, int(order))


def monomial_exponents(r: int) -> list[tuple[int, int]]:
    return [(d - b, b) for d in range(r + 1) for b in range(d + 1)]


def _moment(a: int, b: int) -> Fraction:
    return Fraction(math.factorial(a) * math.factorial(b), math.factorial(a + b + 2))


@dataclass(frozen=True)
class ReferenceBasis:
    """Orthonormal scalar basis of P_r on the reference triangle.

    ``coeffs[k, m]`` expands basis function ``k`` in monomial ``m`` of
    :attr:`exponents`.
    """

    degree: int
    exponents: tuple
    coeffs: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def _monomials(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        return np.stack([x**a * y**b for a, b in self.exponents], axis=1)

    def values(self, pts) -> np.ndarray:
        """Basis values, shape (npts, dim)."""
        return self._monomials(pts) @ self.coeffs.T

    def gradients(self, pts) -> np.ndarray:
        """Reference gradients, shape (npts, dim, 2)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        dx = np.stack(
            [a * x ** max(a - 1, 0) * y**b if a else np.zeros_like(x) for a, b in self.exponents],
            axis=1,
        )
        dy = np.stack(
            [b * x**a * y ** max(b - 1, 0) if b else np.zeros_like(x) for a, b in self.exponents],
            axis=1,
        )
        return np.stack([dx @ self.coeffs.T, dy @ self.coeffs.T], axis=2)


@lru_cache(maxsize=None)
def reference_basis(r: int) -> ReferenceBasis:
    """Gram-Schmidt of graded-lex monomials, done in exact rational arithmetic."""
    if int(r) != r or not 0 <= r <= MAX_DEGREE:
        raise ValueError(f"unsupported degree {r}; need 0 <= r <= {MAX_DEGREE}")
    exps = monomial_exponents(r)
    n = len(exps)
    G = [[_moment(a1 + a2, b1 + b2) for (a2, b2) in exps] for (a1, b1) in exps]
    # G = L D L^T with unit lower-triangular L
    L = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    D = [Fraction(0)] * n
    for j in range(n):
        D[j] = G[j][j] - sum(L[j][k] ** 2 * D[k] for k in range(j))
        for i in range(j + 1, n):
            L[i][j] = (G[i][j] - sum(L[i][k] * L[j][k] * D[k] for k in range(j))) / D[j]
    # unit lower-triangular inverse
    Linv = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(i):
            Linv[i][j] = -sum(L[i][k] * Linv[k][j] for k in range(j, i))
    C = np.array(
        [[float(Linv[i][j]) / math.sqrt(D[i]) for j in range(n)] for i in range(n)]
    )
    C.setflags(write=False)
    return ReferenceBasis(r, tuple(exps), C)


def trace_basis(r: int, t) -> np.ndarray:
    """Legendre values on the unit parameter interval, unit L2 norm on [0, 1].

    Shape (len(t), r + 1); divide by sqrt(length) for physical edges.
    """
    t = np.asarray(t, dtype=float)
    x = 2.0 * t - 1.0
    cols = []
    for j in range(r + 1):
        c = np.zeros(j + 1)
        c[j] = 1.0
        cols.append(math.sqrt(2 * j + 1) * legendre.legval(x, c))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class SpaceLayout:
    degree: int
    n_elements: int
    n_facets: int

    @property
    def d0(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2

    @property
    def dt(self) -> int:
        return self.degree + 1

    @property
    def n_scalar(self) -> int:
        return self.n_elements * self.d0

    @property
    def n_vector(self) -> int:
        return 2 * self.n_elements * self.d0

    @property
    def n_trace(self) -> int:
        return self.n_facets * self.dt

    def scalar_dofs(self, e: int) -> np.ndarray:
        return e * self.d0 + np.arange(self.d0)

    def vector_dofs(self, e: int, c: int) -> np.ndarray:
        return (2 * e + c) * self.d0 + np.arange(self.d0)

    def trace_dofs(self, f: int) -> np.ndarray:
        return f * self.dt + np.arange(self.dt)

    def size(self, form_degree: int) -> int:
        return self.n_vector if form_degree == 1 else self.n_scalar


class FESpace:
    """Mesh, layout and the quadrature tables every assembler needs.

    Facet tables are indexed ``[f, side, q, ...]`` with side 0 = plus,
    1 = minus; entries of absent minus sides are zero.
    """

    def __init__(self, mesh: Mesh, degree: int, *, vol_order=None, edge_order=None, nl_order=None):
        self.mesh = mesh
        self.degree = r = int(degree)
        self.basis = reference_basis(r)
        self.layout = SpaceLayout(r, mesh.n_elements, mesh.n_facets)
        self.vol_quad = triangle_quadrature(vol_order if vol_order is not None else 2 * r + 3)
        self.edge_quad = edge_quadrature(edge_order if edge_order is not None else 2 * r + 3)
        self.nl_quad = triangle_quadrature(nl_order if nl_order is not None else 4 * r + 1)

        qp = self.vol_quad.points
        self.phi_vol = self.basis.values(qp)  # (nq, d0)
        dref = self.basis.gradients(qp)  # (nq, d0, 2)
        # Dref[k][i, j] = int_T phi_i d_k phi_j
        w = self.vol_quad.weights
        self.d_ref = np.einsum("q,qi,qjk->kij", w, self.phi_vol, dref)
        self.phi_nl = self.basis.values(self.nl_quad.points)

        # physical derivative matrices Dx, Dy per element: int_K phi_i d_x phi_j
        # d_x phi = inv_t[0, k] d_k phihat
        self.d_phys = np.einsum("e,ek,kij->eij", mesh.det, mesh.inv_t[:, 0, :], self.d_ref), np.einsum(
            "e,ek,kij->eij", mesh.det, mesh.inv_t[:, 1, :], self.d_ref
        )
        self.mass_scale = mesh.det.copy()  # element mass = det * I

        self._build_facet_tables()

    def _build_facet_tables(self):
        mesh, r = self.mesh, self.degree
        t = self.edge_quad.points
        nq = len(t)
        nf = mesh.n_facets
        d0 = self.layout.d0
        self.edge_weights = self.edge_quad.weights[None, :] * mesh.length[:, None]  # (nf, nq)
        self.psi = trace_basis(r, t)[None, :, :] / np.sqrt(mesh.length)[:, None, None]  # (nf, nq, dt)
        self.side_elem = np.stack([mesh.plus_side[:, 0], mesh.minus_side[:, 0]], axis=1)
        self.side_present = self.side_elem >= 0
        self.side_normal = mesh.side_normals()
        self.side_normal[~self.side_present] = 0.0
        self.facet_phi = np.zeros((nf, 2, nq, d0))
        self.facet_points = np.zeros((nf, 2, nq, 2))
        for s in range(2):
            ok = self.side_present[:, s]
            fs = np.flatnonzero(ok)
            e = self.side_elem[fs, s]
            A = mesh.side_start[fs, s]
            B = mesh.side_end[fs, s]
            X = A[:, None, :] + t[None, :, None] * (B - A)[:, None, :]
            self.facet_points[fs, s] = X
            xhat = np.einsum("fqk,fkl->fql", X - mesh.origin[e][:, None, :], mesh.inv_t[e])
            vals = self.basis.values(xhat.reshape(-1, 2)).reshape(len(fs), nq, d0)
            self.facet_phi[fs, s] = vals
        self.side_sign = np.array([1.0, -1.0])[None, :] * self.side_present

    # ---- evaluation helpers -------------------------------------------------
    def scalar_coeffs(self, x) -> np.ndarray:
        return np.asarray(x).reshape(self.mesh.n_elements, self.layout.d0)

    def vector_coeffs(self, x) -> np.ndarray:
        return np.asarray(x).reshape(self.mesh.n_elements, 2, self.layout.d0)

    def physical_points(self, xhat) -> np.ndarray:
        """Map reference points to every element, shape (NT, npts, 2)."""
        m = self.mesh
        return m.origin[:, None, :] + np.einsum("ekl,ql->eqk", m.jac, np.atleast_2d(xhat))

    def vol_points(self) -> np.ndarray:
        return self.physical_points(self.vol_quad.points)

    def eval_at(self, coeffs, form_degree: int, xhat) -> np.ndarray:
        """Field values at reference points on every element.

        Scalar: (NT, npts); vector: (NT, npts, 2).
        """
        phi = self.basis.values(xhat)
        if form_degree == 1:
            return np.einsum("qi,eci->eqc", phi, self.vector_coeffs(coeffs))
        return np.einsum("qi,ei->eq", phi, self.scalar_coeffs(coeffs))

    def trace_values(self, coeffs, form_degree: int) -> np.ndarray:
        """Element traces on facet quadrature points: (nf, 2, nq[, 2])."""
        e = np.where(self.side_present, self.side_elem, 0)
        if form_degree == 1:
            c = self.vector_coeffs(coeffs)[e]  # (nf, 2, 2, d0)
            out = np.einsum("fsqi,fsci->fsqc", self.facet_phi, c)
        else:
            c = self.scalar_coeffs(coeffs)[e]
            out = np.einsum("fsqi,fsi->fsq", self.facet_phi, c)
        return out

    def hat_values(self, trace_coeffs) -> np.ndarray:
        """Single-valued trace field at facet quadrature points, (nf, nq)."""
        c = np.asarray(trace_coeffs).reshape(self.mesh.n_facets, self.layout.dt)
        return np.einsum("fqj,fj->fq", self.psi, c)


def l2_project(f, space: FESpace, form_degree: int, order=None) -> np.ndarray:
    """Broken L2 projection of a pointwise function ``f(x, y)``.

    ``f`` returns a scalar array for form degrees 0 and 2 and a trailing
    length-2 axis for form degree 1.
    """
    if form_degree not in (0, 1, 2):
        raise ValueError("form_degree must be 0, 1 or 2")
    quad = triangle_quadrature(order if order is not None else 2 * space.degree + 4)
    phi = space.basis.values(quad.points)
    X = space.physical_points(quad.points)
    vals = np.asarray(f(X[..., 0], X[..., 1]), dtype=float)
    # mass is det * I and the physical measure is det * dxhat: the dets cancel
    if form_degree == 1:
        if vals.shape != X.shape:
            raise ValueError("vector field must return shape (..., 2)")
        c = np.einsum("q,qi,eqc->eci", quad.weights, phi, vals)
    else:
        vals = np.broadcast_to(vals, X.shape[:-1])
        c = np.einsum("q,qi,eq->ei", quad.weights, phi, vals)
    return c.ravel()

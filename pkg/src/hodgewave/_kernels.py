"""Hot loops with a numba implementation and a pure-numpy fallback.

Set ``HODGEWAVE_NO_NUMBA=1`` before import to force the numpy path.  Both
paths compute the same quantities; summation order inside the quadrature
loops can differ, so results agree to roundoff rather than bitwise.

Nonlinearity codes: 0 = zero, 1 = cubic ``f(u) = (1 - |u|^2) u``,
2 = linear ``f(u) = u``.
"""

from __future__ import annotations

import os

import numpy as np

ZERO, CUBIC, LINEAR = 0, 1, 2

_want_numba = os.environ.get("HODGEWAVE_NO_NUMBA", "").strip().lower() not in ("1", "true", "yes")
try:
    if not _want_numba:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------- numpy path
def _np_csr_matvec(indptr, indices, data, x):
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    return np.bincount(rows, weights=data * x[indices], minlength=n)


def _np_pointwise(kind, ux, uy):
    if kind == CUBIC:
        s = 1.0 - ux * ux - uy * uy
        return s * ux, s * uy
    if kind == LINEAR:
        return ux.copy(), uy.copy()
    return np.zeros_like(ux), np.zeros_like(uy)


def _np_nl_load(kind, phi, w, det, U):
    uq = np.einsum("qi,eci->ecq", phi, U)
    fx, fy = _np_pointwise(kind, uq[:, 0], uq[:, 1])
    f = np.stack([fx, fy], axis=1)
    return np.einsum("e,q,ecq,qi->eci", det, w, f, phi)


def _np_nl_jac(kind, phi, w, det, U):
    ne, _, d0 = U.shape
    uq = np.einsum("qi,eci->ecq", phi, U)
    ux, uy = uq[:, 0], uq[:, 1]
    J = np.zeros((ne, 2, 2, len(w)))
    if kind == CUBIC:
        s = 1.0 - ux * ux - uy * uy
        J[:, 0, 0] = s - 2 * ux * ux
        J[:, 1, 1] = s - 2 * uy * uy
        J[:, 0, 1] = J[:, 1, 0] = -2 * ux * uy
    elif kind == LINEAR:
        J[:, 0, 0] = 1.0
        J[:, 1, 1] = 1.0
    return np.einsum("e,q,ecdq,qi,qj->ecidj", det, w, J, phi, phi)


def _np_nl_energy(kind, phi, w, det, U):
    uq = np.einsum("qi,eci->ecq", phi, U)
    m = uq[:, 0] ** 2 + uq[:, 1] ** 2
    if kind == CUBIC:
        F = 0.5 * m - 0.25 * m * m
    elif kind == LINEAR:
        F = 0.5 * m
    else:
        return 0.0
    return float(np.einsum("e,q,eq->", det, w, F))


# ---------------------------------------------------------------- numba path
if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _nb_csr_matvec(indptr, indices, data, x):
        n = indptr.shape[0] - 1
        y = np.zeros(n)
        for i in range(n):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                acc += data[k] * x[indices[k]]
            y[i] = acc
        return y

    @numba.njit(cache=True)
    def _nb_nl_load(kind, phi, w, det, U):
        ne, _, d0 = U.shape
        nq = w.shape[0]
        out = np.zeros((ne, 2, d0))
        for e in range(ne):
            for q in range(nq):
                ux = 0.0
                uy = 0.0
                for i in range(d0):
                    ux += phi[q, i] * U[e, 0, i]
                    uy += phi[q, i] * U[e, 1, i]
                if kind == 1:
                    s = 1.0 - ux * ux - uy * uy
                    fx = s * ux
                    fy = s * uy
                elif kind == 2:
                    fx = ux
                    fy = uy
                else:
                    fx = 0.0
                    fy = 0.0
                c = det[e] * w[q]
                for i in range(d0):
                    out[e, 0, i] += c * fx * phi[q, i]
                    out[e, 1, i] += c * fy * phi[q, i]
        return out

    @numba.njit(cache=True)
    def _nb_nl_jac(kind, phi, w, det, U):
        ne, _, d0 = U.shape
        nq = w.shape[0]
        out = np.zeros((ne, 2, d0, 2, d0))
        if kind == 0:
            return out
        for e in range(ne):
            for q in range(nq):
                ux = 0.0
                uy = 0.0
                for i in range(d0):
                    ux += phi[q, i] * U[e, 0, i]
                    uy += phi[q, i] * U[e, 1, i]
                if kind == 1:
                    s = 1.0 - ux * ux - uy * uy
                    jxx = s - 2.0 * ux * ux
                    jyy = s - 2.0 * uy * uy
                    jxy = -2.0 * ux * uy
                else:
                    jxx = 1.0
                    jyy = 1.0
                    jxy = 0.0
                c = det[e] * w[q]
                for i in range(d0):
                    for j in range(d0):
                        pp = c * phi[q, i] * phi[q, j]
                        out[e, 0, i, 0, j] += jxx * pp
                        out[e, 0, i, 1, j] += jxy * pp
                        out[e, 1, i, 0, j] += jxy * pp
                        out[e, 1, i, 1, j] += jyy * pp
        return out

    @numba.njit(cache=True)
    def _nb_nl_energy(kind, phi, w, det, U):
        ne, _, d0 = U.shape
        nq = w.shape[0]
        total = 0.0
        if kind == 0:
            return total
        for e in range(ne):
            acc = 0.0
            for q in range(nq):
                ux = 0.0
                uy = 0.0
                for i in range(d0):
                    ux += phi[q, i] * U[e, 0, i]
                    uy += phi[q, i] * U[e, 1, i]
                m = ux * ux + uy * uy
                if kind == 1:
                    acc += w[q] * (0.5 * m - 0.25 * m * m)
                else:
                    acc += w[q] * 0.5 * m
            total += det[e] * acc
        return total


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def csr_matvec(indptr, indices, data, x, backend=None):
    backend = backend or BACKEND
    if backend == "numba" and HAVE_NUMBA:
        return _nb_csr_matvec(indptr, indices, data, _c(x))
    return _np_csr_matvec(indptr, indices, data, _c(x))


def nl_load(kind, phi, w, det, U, backend=None):
    """Element loads ``(f(u), phi_i e_c)``, shape (NT, 2, d0)."""
    backend = backend or BACKEND
    if backend == "numba" and HAVE_NUMBA:
        return _nb_nl_load(kind, _c(phi), _c(w), _c(det), _c(U))
    return _np_nl_load(kind, phi, w, det, U)


def nl_jac(kind, phi, w, det, U, backend=None):
    """Element Jacobian blocks ``(f'(u) phi_j e_d, phi_i e_c)``, (NT, 2, d0, 2, d0)."""
    backend = backend or BACKEND
    if backend == "numba" and HAVE_NUMBA:
        return _nb_nl_jac(kind, _c(phi), _c(w), _c(det), _c(U))
    return _np_nl_jac(kind, phi, w, det, U)


def nl_energy(kind, phi, w, det, U, backend=None):
    """``sum_K int_K F(u)``."""
    backend = backend or BACKEND
    if backend == "numba" and HAVE_NUMBA:
        return float(_nb_nl_energy(kind, _c(phi), _c(w), _c(det), _c(U)))
    return _np_nl_energy(kind, phi, w, det, U)

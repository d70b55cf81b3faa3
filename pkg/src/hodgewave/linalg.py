"""Compressed-row sparse matrices and the linear solvers used by the stepper.

Iterative paths: preconditioned conjugate gradients for SPD systems and
restarted GMRES for general ones, both with a block-Jacobi preconditioner.
Systems that are solved many times with the same matrix can instead be
factorised once with :class:`DirectSolver` (sparse LU plus iterative
refinement).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels

__all__ = [
    "SparseMatrix",
    "LinearSolveError",
    "NotSPDError",
    "SolveInfo",
    "BlockJacobi",
    "DirectSolver",
    "spmv",
    "solve_spd",
    "solve_general",
    "contiguous_blocks",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-13


class LinearSolveError(RuntimeError):
    """Iteration limit reached or breakdown; ``residual`` is the last relative residual."""

    def __init__(self, msg, residual=np.nan, iterations=0):
        super().__init__(f"{msg} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class NotSPDError(LinearSolveError):
    pass


@dataclass
class SolveInfo:
    iterations: int
    residual: float


class SparseMatrix:
    """CSR storage with strictly increasing column indices per row."""

    def __init__(self, indptr, indices, data, shape):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        if len(self.indptr) != self.shape[0] + 1:
            raise ValueError("indptr length does not match row count")
        if len(self.indices) != len(self.data) or self.indptr[-1] != len(self.data):
            raise ValueError("inconsistent CSR arrays")

    @classmethod
    def from_scipy(cls, A) -> "SparseMatrix":
        A = sp.csr_matrix(A, copy=True)
        A.sum_duplicates()
        A.sort_indices()
        return cls(A.indptr, A.indices, A.data, A.shape)

    @classmethod
    def from_dense(cls, D) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(D, dtype=float)))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), (n, n))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @property
    def nnz(self) -> int:
        return len(self.data)

    @property
    def T(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().T)

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def __matmul__(self, x):
        if isinstance(x, np.ndarray) and x.ndim == 1:
            return spmv(self, x)
        return NotImplemented

    def is_symmetric(self, tol=0.0) -> bool:
        A = self.to_scipy()
        d = abs(A - A.T)
        return (d.max() if d.nnz else 0.0) <= tol


def spmv(A: SparseMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[1],):
        raise ValueError(f"dimension mismatch: matrix {A.shape}, vector {x.shape}")
    return _kernels.csr_matvec(A.indptr, A.indices, A.data, x)


def contiguous_blocks(sizes) -> list:
    """Index blocks for consecutive runs of the given sizes."""
    out, start = [], 0
    for s in sizes:
        out.append(np.arange(start, start + s))
        start += s
    return out


class BlockJacobi:
    """Inverse of the block diagonal of ``A`` restricted to index blocks.

    Indices not covered by any block fall back to point Jacobi.
    """

    def __init__(self, A: SparseMatrix, blocks=None):
        n = A.shape[0]
        S = A.to_scipy().tocsr()
        covered = np.zeros(n, dtype=bool)
        groups: dict[int, list] = {}
        for b in blocks or []:
            b = np.asarray(b, dtype=np.int64)
            covered[b] = True
            groups.setdefault(len(b), []).append(b)
        self._groups = []
        for m, bl in groups.items():
            idx = np.stack(bl)
            dense = np.stack([S[b][:, b].toarray() for b in bl])
            self._groups.append((idx, np.linalg.inv(dense)))
        rest = np.flatnonzero(~covered)
        d = S.diagonal()[rest]
        if np.any(d == 0):
            raise LinearSolveError("zero diagonal entry in point-Jacobi part", np.nan, 0)
        self._rest = rest
        self._rest_inv = 1.0 / d

    def __call__(self, r):
        z = np.empty_like(r)
        for idx, inv in self._groups:
            z[idx] = np.einsum("bij,bj->bi", inv, r[idx])
        z[self._rest] = self._rest_inv * r[self._rest]
        return z


def solve_spd(A: SparseMatrix, b, tol=DEFAULT_TOL, maxit=None, precond=None, x0=None):
    """Preconditioned CG.  Returns ``(x, SolveInfo)``.

    Raises :class:`NotSPDError` on nonpositive curvature and
    :class:`LinearSolveError` when ``maxit`` is exceeded.
    """
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    maxit = 3 * n if maxit is None else maxit
    M = precond if precond is not None else (lambda r: r)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveInfo(0, 0.0)
    r = b - spmv(A, x)
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol:
        return x, SolveInfo(0, rel)
    z = M(r)
    p = z.copy()
    rz = r @ z
    for k in range(1, maxit + 1):
        Ap = spmv(A, p)
        curv = p @ Ap
        if curv <= 0.0:
            raise NotSPDError("nonpositive curvature in CG", rel, k)
        a = rz / curv
        x += a * p
        r -= a * Ap
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            # confirm on the true residual
            rel = np.linalg.norm(b - spmv(A, x)) / bnorm
            if rel <= tol:
                return x, SolveInfo(k, rel)
            r = b - spmv(A, x)
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise LinearSolveError("CG did not converge", rel, maxit)


def solve_general(A: SparseMatrix, b, tol=DEFAULT_TOL, maxit=None, precond=None, restart=60, x0=None):
    """Right-preconditioned restarted GMRES.  Returns ``(x, SolveInfo)``."""
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    maxit = 10 * n if maxit is None else maxit
    M = precond if precond is not None else (lambda r: r)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveInfo(0, 0.0)
    total = 0
    m = max(1, min(restart, n))
    while True:
        r = b - spmv(A, x)
        beta = np.linalg.norm(r)
        rel = beta / bnorm
        if rel <= tol:
            return x, SolveInfo(total, rel)
        if total >= maxit:
            raise LinearSolveError("GMRES did not converge", rel, total)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_used = 0
        for j in range(m):
            Z[j] = M(V[j])
            w = spmv(A, Z[j])
            for i in range(j + 1):  # modified Gram-Schmidt, twice
                h = w @ V[i]
                H[i, j] += h
                w -= h * V[i]
            for i in range(j + 1):
                h = w @ V[i]
                H[i, j] += h
                w -= h * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            if H[j + 1, j] > 0:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            den = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if den == 0 else (H[j, j] / den, H[j + 1, j] / den)
            H[j, j] = den
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_used = j + 1
            total += 1
            if abs(g[j + 1]) / bnorm <= 0.1 * tol or total >= maxit or den == 0:
                break
        y = np.linalg.solve(np.triu(H[:j_used, :j_used]), g[:j_used]) if j_used else np.zeros(0)
        x += Z[:j_used].T @ y


class DirectSolver:
    """Sparse LU factorisation with iterative refinement.

    ``solve`` returns the solution and stores the achieved relative residual
    in :attr:`last_residual`.
    """

    def __init__(self, A, tol=DEFAULT_TOL, max_refine=4):
        S = A.to_scipy() if isinstance(A, SparseMatrix) else sp.csr_matrix(A)
        self.A = S.tocsr()
        self.shape = S.shape
        self.tol = tol
        self.max_refine = max_refine
        try:
            self._lu = spla.splu(S.tocsc())
        except RuntimeError as exc:
            raise LinearSolveError(f"factorisation failed: {exc}") from None
        self.last_residual = 0.0

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            self.last_residual = 0.0
            return np.zeros(self.shape[1])
        x = self._lu.solve(b)
        r = b - self.A @ x
        rel = np.linalg.norm(r) / bnorm
        for _ in range(self.max_refine):
            if rel <= self.tol:
                break
            x_new = x + self._lu.solve(r)
            r_new = b - self.A @ x_new
            rel_new = np.linalg.norm(r_new) / bnorm
            if not rel_new < rel:
                break
            x, r, rel = x_new, r_new, rel_new
        if not np.isfinite(rel):
            raise LinearSolveError("direct solve produced non-finite values", rel, 0)
        self.last_residual = float(rel)
        return x

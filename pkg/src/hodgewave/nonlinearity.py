"""Pointwise nonlinearities ``f = dF/du`` and their discrete forms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .fespace import FESpace

__all__ = ["Nonlinearity", "ZERO", "CUBIC", "LINEAR", "get_nonlinearity"]


@dataclass(frozen=True)
class Nonlinearity:
    """``name`` is one of ``zero``, ``cubic`` or ``linear``.

    cubic: ``f(u) = (1 - |u|^2) u``, ``F = |u|^2/2 - |u|^4/4``
    linear: ``f(u) = u``, ``F = |u|^2/2``
    """

    name: str
    code: int

    @property
    def is_zero(self) -> bool:
        return self.code == _kernels.ZERO

    @property
    def is_linear(self) -> bool:
        return self.code != _kernels.CUBIC

    def f(self, u):
        u = np.asarray(u, dtype=float)
        if self.code == _kernels.CUBIC:
            return (1.0 - np.sum(u * u, axis=-1, keepdims=True)) * u
        if self.code == _kernels.LINEAR:
            return u.copy()
        return np.zeros_like(u)

    def F(self, u):
        m = np.sum(np.asarray(u, dtype=float) ** 2, axis=-1)
        if self.code == _kernels.CUBIC:
            return 0.5 * m - 0.25 * m * m
        if self.code == _kernels.LINEAR:
            return 0.5 * m
        return np.zeros_like(m)

    def df(self, u):
        """Pointwise Jacobian, shape (..., 2, 2)."""
        u = np.asarray(u, dtype=float)
        eye = np.broadcast_to(np.eye(2), u.shape[:-1] + (2, 2))
        if self.code == _kernels.CUBIC:
            s = 1.0 - np.sum(u * u, axis=-1)
            return s[..., None, None] * eye - 2.0 * u[..., :, None] * u[..., None, :]
        if self.code == _kernels.LINEAR:
            return eye.copy()
        return np.zeros(u.shape[:-1] + (2, 2))

    # -- discrete forms ---------------------------------------------------
    def _args(self, space: FESpace, u):
        U = space.vector_coeffs(u)
        return space.phi_nl, space.nl_quad.weights, space.mesh.det, U

    def load(self, space: FESpace, u, backend=None) -> np.ndarray:
        """Vector ``(f(u_h), v)`` over the 1-form space."""
        if self.is_zero:
            return np.zeros(space.layout.n_vector)
        return _kernels.nl_load(self.code, *self._args(space, u), backend=backend).ravel()

    def jacobian(self, space: FESpace, u, backend=None) -> sp.csr_matrix:
        """Block-diagonal matrix of ``(f'(u_h) w, v)``."""
        n = space.layout.n_vector
        if self.is_zero:
            return sp.csr_matrix((n, n))
        blocks = _kernels.nl_jac(self.code, *self._args(space, u), backend=backend)
        ne, _, d0, _, _ = blocks.shape
        m = 2 * d0
        base = (np.arange(ne) * m)[:, None, None]
        rows = np.broadcast_to(base + np.arange(m)[None, :, None], (ne, m, m))
        cols = np.broadcast_to(base + np.arange(m)[None, None, :], (ne, m, m))
        return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))

    def energy(self, space: FESpace, u, backend=None) -> float:
        """``int F(u_h)`` with the nonlinear quadrature rule."""
        if self.is_zero:
            return 0.0
        return _kernels.nl_energy(self.code, *self._args(space, u), backend=backend)


ZERO = Nonlinearity("zero", _kernels.ZERO)
CUBIC = Nonlinearity("cubic", _kernels.CUBIC)
LINEAR = Nonlinearity("linear", _kernels.LINEAR)

_BY_NAME = {n.name: n for n in (ZERO, CUBIC, LINEAR)}


def get_nonlinearity(name: str) -> Nonlinearity:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown nonlinearity {name!r}; choose from {sorted(_BY_NAME)}") from None

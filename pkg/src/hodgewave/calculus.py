"""Scalar/vector proxies of the 2D de Rham complex on broken spaces.

Proxy conventions::

    d0 = curl : tau -> (d_y tau, -d_x tau)
    d1 = div
    delta1 = rot : v -> d_x v_y - d_y v_x
    delta2 = -grad

Facet traces, with ``n`` the outward normal of the side::

    0-form  tau^tan = tau
    1-form  v^nor   = v x n = v_x n_y - v_y n_x,   v^tan stored as v . n
    2-form  eta^nor = eta

The single-valued 1-form trace unknown on a facet is a scalar ``phi`` measured
against the plus-side normal; on side ``s`` (``+1`` plus, ``-1`` minus) its
normal component is ``s * phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fespace import FESpace, edge_quadrature, trace_basis

__all__ = [
    "FieldState",
    "TraceState",
    "Penalties",
    "eval_diff",
    "facet_trace",
    "numerical_normal_traces",
    "facet_side_data",
    "cross_n",
]

PLUS, MINUS = 0, 1


@dataclass
class FieldState:
    """Coefficients of (sigma, u, rho, p) at time ``t``."""

    sigma: np.ndarray
    u: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, space: FESpace, t=0.0):
        lay = space.layout
        return cls(
            np.zeros(lay.n_scalar),
            np.zeros(lay.n_vector),
            np.zeros(lay.n_scalar),
            np.zeros(lay.n_vector),
            t,
        )

    def copy(self):
        return FieldState(self.sigma.copy(), self.u.copy(), self.rho.copy(), self.p.copy(), self.t)


@dataclass
class TraceState:
    """Facet unknowns: ``sigma_hat`` and the 1-form trace ``vhat``.

    ``kind`` is ``"u"`` when ``vhat`` holds the displacement trace and
    ``"p"`` when it holds the velocity trace.
    """

    sigma_hat: np.ndarray
    vhat: np.ndarray
    kind: str = "u"

    def __post_init__(self):
        if self.kind not in ("u", "p"):
            raise ValueError(f"unknown trace kind {self.kind!r}")

    @classmethod
    def zeros(cls, space: FESpace, kind="u"):
        n = space.layout.n_trace
        return cls(np.zeros(n), np.zeros(n), kind)

    def copy(self):
        return TraceState(self.sigma_hat.copy(), self.vhat.copy(), self.kind)


@dataclass
class Penalties:
    """Facet penalty weights, ``alpha0 < 0`` and ``alpha1 > 0``.

    Scalars or one value per facet.
    """

    alpha0: object = -1.0
    alpha1: object = 1.0
    n_facets: int | None = field(default=None, compare=False)

    def __post_init__(self):
        a0 = np.asarray(self.alpha0, dtype=float)
        a1 = np.asarray(self.alpha1, dtype=float)
        if not np.all(np.isfinite(a0)) or np.any(a0 >= 0):
            raise ValueError("alpha0 must be negative")
        if not np.all(np.isfinite(a1)) or np.any(a1 <= 0):
            raise ValueError("alpha1 must be positive")
        for name, a in (("alpha0", a0), ("alpha1", a1)):
            if a.ndim > 1 or (a.ndim == 1 and self.n_facets is not None and len(a) != self.n_facets):
                raise ValueError(f"{name} must be a scalar or one value per facet")

    def per_facet(self, n_facets: int):
        """Return (alpha0, alpha1) broadcast to shape (n_facets,)."""
        a0 = np.broadcast_to(np.asarray(self.alpha0, dtype=float), (n_facets,))
        a1 = np.broadcast_to(np.asarray(self.alpha1, dtype=float), (n_facets,))
        return a0, a1


def cross_n(v, n):
    """Scalar ``v x n = v_x n_y - v_y n_x`` over trailing axis."""
    return v[..., 0] * n[..., 1] - v[..., 1] * n[..., 0]


def _physical_gradients(space: FESpace, element: int, xhat):
    dref = space.basis.gradients(xhat)  # (nq, d0, 2)
    return np.einsum("kl,qil->qik", space.mesh.inv_t[element], dref)


def eval_diff(space: FESpace, coeffs, form_degree: int, element: int, xhat) -> dict:
    """Values and first-order proxies of a discrete field on one element.

    Points are given in reference coordinates.  The returned keys depend on
    the form degree: ``value, grad, curl`` for 0-forms, ``value, rot, div``
    for 1-forms, ``value, grad, codiff`` for 2-forms (``codiff = -grad``).
    """
    lay = space.layout
    if form_degree not in (0, 1, 2):
        raise ValueError("form_degree must be 0, 1 or 2")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (lay.size(form_degree),):
        raise ValueError(
            f"coefficient vector has shape {coeffs.shape}, expected ({lay.size(form_degree)},)"
        )
    if not 0 <= element < space.mesh.n_elements:
        raise IndexError(f"element {element} out of range")
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    phi = space.basis.values(xhat)
    grads = _physical_gradients(space, element, xhat)  # (nq, d0, 2)
    if form_degree == 1:
        c = space.vector_coeffs(coeffs)[element]  # (2, d0)
        val = phi @ c.T
        dvx = grads.transpose(0, 2, 1) @ c[0]  # (nq, 2): d_x vx, d_y vx
        dvy = grads.transpose(0, 2, 1) @ c[1]
        return {
            "value": val,
            "rot": dvy[:, 0] - dvx[:, 1],
            "div": dvx[:, 0] + dvy[:, 1],
        }
    c = space.scalar_coeffs(coeffs)[element]
    val = phi @ c
    g = np.einsum("qik,i->qk", grads, c)
    if form_degree == 0:
        return {"value": val, "grad": g, "curl": np.column_stack([g[:, 1], -g[:, 0]])}
    return {"value": val, "grad": g, "codiff": -g}


def _side_points(space: FESpace, facet: int, side: int, t):
    mesh = space.mesh
    if not 0 <= facet < mesh.n_facets:
        raise IndexError(f"facet {facet} out of range")
    if side not in (PLUS, MINUS):
        raise ValueError("side must be 0 (plus) or 1 (minus)")
    if side == MINUS and mesh.minus_side[facet, 0] < 0:
        raise ValueError(f"facet {facet} is one-sided; it has no minus side")
    e = int(mesh.plus_side[facet, 0] if side == PLUS else mesh.minus_side[facet, 0])
    A = mesh.side_start[facet, side]
    B = mesh.side_end[facet, side]
    t = np.atleast_1d(np.asarray(t, dtype=float))
    X = A[None, :] + t[:, None] * (B - A)[None, :]
    xhat = (X - mesh.origin[e]) @ mesh.inv_t[e]
    n = mesh.unit_normal[facet] * (1.0 if side == PLUS else -1.0)
    return e, X, xhat, n


def facet_trace(space: FESpace, coeffs, form_degree: int, facet: int, side: int, t=None) -> dict:
    """Trace proxies of a broken field on one side of a facet.

    ``t`` are edge parameters in [0, 1] (default: edge quadrature points),
    measured from the side's start point; both sides of a facet share the
    parameterisation.
    """
    if t is None:
        t = space.edge_quad.points
    e, X, xhat, n = _side_points(space, facet, side, t)
    phi = space.basis.values(xhat)
    out = {"points": X, "normal": n}
    if form_degree == 0:
        out["tan"] = phi @ space.scalar_coeffs(coeffs)[e]
    elif form_degree == 1:
        v = phi @ space.vector_coeffs(coeffs)[e].T
        out["value"] = v
        out["nor"] = cross_n(v, n)
        out["tan"] = v @ n
    elif form_degree == 2:
        out["nor"] = phi @ space.scalar_coeffs(coeffs)[e]
    else:
        raise ValueError("form_degree must be 0, 1 or 2")
    return out


def hat_at(space: FESpace, trace_coeffs, facet: int, t) -> np.ndarray:
    """Single-valued facet trace evaluated at edge parameters ``t``."""
    dt = space.layout.dt
    c = np.asarray(trace_coeffs)[facet * dt : (facet + 1) * dt]
    psi = trace_basis(space.degree, np.atleast_1d(t)) / np.sqrt(space.mesh.length[facet])
    return psi @ c


def numerical_normal_traces(
    space: FESpace, state: FieldState, traces: TraceState, pen: Penalties, facet: int, side: int, t=None
) -> dict:
    """Hybridised normal fluxes ``u_hat_nor`` and ``rho_hat_nor`` on one side.

    ``u_hat_nor = u x n - alpha0 (sigma_hat - sigma)`` and
    ``rho_hat_nor = rho - alpha1 (u_hat . n - u . n)``.
    """
    if traces.kind != "u":
        raise ValueError("numerical normal traces need displacement traces (kind 'u')")
    if t is None:
        t = space.edge_quad.points
    a0, a1 = pen.per_facet(space.mesh.n_facets)
    s = 1.0 if side == PLUS else -1.0
    su = facet_trace(space, state.u, 1, facet, side, t)
    ss = facet_trace(space, state.sigma, 0, facet, side, t)
    sr = facet_trace(space, state.rho, 2, facet, side, t)
    sh = hat_at(space, traces.sigma_hat, facet, t)
    uh = s * hat_at(space, traces.vhat, facet, t)
    return {
        "u_hat_nor": su["nor"] - a0[facet] * (sh - ss["tan"]),
        "rho_hat_nor": sr["nor"] - a1[facet] * (uh - su["tan"]),
        "u_hat_tan": uh,
        "sigma_hat": sh,
    }


def facet_side_data(space: FESpace, state: FieldState, traces: TraceState, pen: Penalties) -> dict:
    """All facet-side quantities at edge quadrature points, vectorised.

    Arrays have shape (NF, 2, nq); entries of absent sides are zero.  With
    ``traces.kind == "p"`` the 1-form trace is compared against ``p``.
    """
    a0, a1 = pen.per_facet(space.mesh.n_facets)
    present = space.side_present[:, :, None]
    n = space.side_normal[:, :, None, :]
    sign = space.side_sign[:, :, None]
    v = state.u if traces.kind == "u" else state.p
    vv = space.trace_values(v, 1)
    sig = space.trace_values(state.sigma, 0)
    rho = space.trace_values(state.rho, 2)
    sh = space.hat_values(traces.sigma_hat)[:, None, :] * present
    vh = space.hat_values(traces.vhat)[:, None, :] * sign
    v_nor = cross_n(vv, n)
    v_tan = np.einsum("fsqc,fsqc->fsq", vv, np.broadcast_to(n, vv.shape))
    return {
        "weights": space.edge_weights[:, None, :] * present,
        "sigma": sig * present,
        "sigma_hat": sh,
        "v_nor": v_nor * present,
        "v_tan": v_tan * present,
        "v_hat_tan": vh,
        "rho": rho * present,
        "v_hat_nor": (v_nor - a0[:, None, None] * (sh - sig)) * present,
        "rho_hat_nor": (rho - a1[:, None, None] * (vh - v_tan)) * present,
        "alpha0": a0,
        "alpha1": a1,
    }

"""Conserved and monitored quantities of discrete solutions.

Facet sums run over both sides of every facet, i.e. over the boundaries of
all elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import ConstraintSystems, MixedSystem, MultisymplecticSystem, Operators, constraint_residuals
from .calculus import FieldState, Penalties, TraceState, facet_side_data
from .fespace import FESpace, triangle_quadrature
from .nonlinearity import CUBIC, ZERO, Nonlinearity

__all__ = [
    "ExactSolution",
    "linear_plane_wave",
    "cubic_klein_gordon",
    "discrete_hamiltonian",
    "penalty_terms",
    "global_hamiltonian",
    "energy_identity",
    "energy_identity_residual",
    "l2_error",
    "constraint_residual",
    "symplectic_pairing",
    "element_bracket",
    "flux_difference_bracket",
    "mscl_residual",
    "mixed_witness_bracket",
    "amplitude",
    "sample_field",
]


# --------------------------------------------------------------------------
# exact solutions
# --------------------------------------------------------------------------
@dataclass
class ExactSolution:
    """Closed-form plane wave with its proxies.

    ``sigma = -rot u`` and ``rho = -div u``; the PDE is
    ``-dp/dt + curl sigma - grad rho = f(u)``.
    """

    name: str
    nonlin: Nonlinearity
    params: dict
    _u: object
    _p: object
    _pdot: object
    _sigma: object
    _rho: object
    _curl_sigma: object
    _grad_rho: object

    def u(self, t, x, y):
        return self._u(t, np.asarray(x, float), np.asarray(y, float))

    def p(self, t, x, y):
        return self._p(t, np.asarray(x, float), np.asarray(y, float))

    def sigma(self, t, x, y):
        return self._sigma(t, np.asarray(x, float), np.asarray(y, float))

    def rho(self, t, x, y):
        return self._rho(t, np.asarray(x, float), np.asarray(y, float))

    def pde_residual(self, t, x, y):
        """Pointwise ``-dp/dt + curl sigma - grad rho - f(u)``, shape (..., 2)."""
        u = self.u(t, x, y)
        return -self._pdot(t, x, y) + self._curl_sigma(t, x, y) - self._grad_rho(t, x, y) - self.nonlin.f(u)

    def check(self, n=1000, seed=0, tol=1e-10):
        rng = np.random.default_rng(seed)
        t, x, y = rng.uniform(0, 1, (3, n))
        r = np.abs(self.pde_residual(t, x, y)).max()
        if r > tol:
            raise ValueError(f"{self.name}: PDE residual {r:.3e} exceeds {tol:.1e}")
        return r


def _vec(a, b):
    return np.stack(np.broadcast_arrays(a, b), axis=-1)


def linear_plane_wave(k=4 * np.pi) -> ExactSolution:
    """``u = (0, sin(k (x - t)))`` with ``f = 0``."""

    def ph(t, x, y):
        return k * (x - t) + 0 * y

    sol = ExactSolution(
        "linear_plane_wave",
        ZERO,
        {"k": k},
        lambda t, x, y: _vec(0 * x + 0 * y, np.sin(ph(t, x, y))),
        lambda t, x, y: _vec(0 * x + 0 * y, -k * np.cos(ph(t, x, y))),
        lambda t, x, y: _vec(0 * x + 0 * y, -k * k * np.sin(ph(t, x, y))),
        lambda t, x, y: -k * np.cos(ph(t, x, y)),
        lambda t, x, y: 0 * ph(t, x, y),
        # curl sigma = (d_y sigma, -d_x sigma)
        lambda t, x, y: _vec(0 * x + 0 * y, -k * k * np.sin(ph(t, x, y))),
        lambda t, x, y: _vec(0 * x + 0 * y, 0 * x + 0 * y),
    )
    sol.check()
    return sol


def cubic_klein_gordon() -> ExactSolution:
    """``u = (cos phi, sin phi) / 2`` with ``phi = 2 pi (x + y) - theta t``,
    ``theta^2 = 8 pi^2 + 3/4`` and ``f(u) = (1 - |u|^2) u``."""
    theta = np.sqrt(8 * np.pi**2 + 0.75)
    kk = 2 * np.pi

    def ph(t, x, y):
        return kk * (x + y) - theta * t

    sol = ExactSolution(
        "cubic_klein_gordon",
        CUBIC,
        {"theta": theta},
        lambda t, x, y: 0.5 * _vec(np.cos(ph(t, x, y)), np.sin(ph(t, x, y))),
        lambda t, x, y: 0.5 * theta * _vec(np.sin(ph(t, x, y)), -np.cos(ph(t, x, y))),
        lambda t, x, y: -0.5 * theta**2 * _vec(np.cos(ph(t, x, y)), np.sin(ph(t, x, y))),
        # rot u = pi (cos + sin) -> sigma = -rot u
        lambda t, x, y: -np.pi * (np.cos(ph(t, x, y)) + np.sin(ph(t, x, y))),
        # div u = pi (cos - sin) -> rho = -div u
        lambda t, x, y: np.pi * (np.sin(ph(t, x, y)) - np.cos(ph(t, x, y))),
        lambda t, x, y: _vec(
            -np.pi * kk * (np.cos(ph(t, x, y)) - np.sin(ph(t, x, y))),
            np.pi * kk * (np.cos(ph(t, x, y)) - np.sin(ph(t, x, y))),
        ),
        lambda t, x, y: _vec(
            np.pi * kk * (np.cos(ph(t, x, y)) + np.sin(ph(t, x, y))),
            np.pi * kk * (np.cos(ph(t, x, y)) + np.sin(ph(t, x, y))),
        ),
    )
    sol.check()
    return sol


EXACT = {"linear_plane_wave": linear_plane_wave, "cubic_klein_gordon": cubic_klein_gordon}


# --------------------------------------------------------------------------
# energies
# --------------------------------------------------------------------------
def _quad(m, x):
    return float(x @ (m * x))


def global_hamiltonian(ops: Operators, state: FieldState, nonlin: Nonlinearity = ZERO, reconstruction="state") -> float:
    """``(|sigma|^2 + |p|^2 + |rho|^2)/2 + int F(u)``.

    ``reconstruction="state"`` uses the method's own sigma and rho;
    ``"broken"`` replaces them by the projections of ``-rot u_h`` and
    ``-div u_h`` taken elementwise.
    """
    if reconstruction == "state":
        sigma, rho = state.sigma, state.rho
    elif reconstruction == "broken":
        sigma = -(ops.R @ state.u) / ops.m0
        rho = -(ops.Div @ state.u) / ops.m0
    else:
        raise ValueError(f"unknown reconstruction {reconstruction!r}")
    H = 0.5 * (_quad(ops.m0, sigma) + _quad(ops.m1, state.p) + _quad(ops.m0, rho))
    return H + nonlin.energy(ops.space, state.u)


def penalty_terms(space: FESpace, state: FieldState, traces: TraceState, pen: Penalties):
    """``(<a0 (sh - s), sh - s>, <a1 (vh - v).n, (vh - v).n>)`` over all sides."""
    d = facet_side_data(space, state, traces, pen)
    w = d["weights"]
    ds = d["sigma_hat"] - d["sigma"]
    dv = d["v_hat_tan"] - d["v_tan"]
    t0 = float(np.sum(d["alpha0"][:, None, None] * w * ds * ds))
    t1 = float(np.sum(d["alpha1"][:, None, None] * w * dv * dv))
    return t0, t1


def discrete_hamiltonian(ops: Operators, state: FieldState, traces: TraceState, nonlin: Nonlinearity = ZERO) -> float:
    if traces.kind != "u":
        raise ValueError("discrete Hamiltonian needs displacement traces (kind 'u')")
    t0, t1 = penalty_terms(ops.space, state, traces, ops.pen)
    return global_hamiltonian(ops, state, nonlin) - 0.5 * t0 + 0.5 * t1


def energy_identity(msys: MixedSystem, state: FieldState):
    """Both sides of the mixed-method energy balance (``f = 0``).

    LHS ``(sigma, dsigma) + (p, dp) + (rho, drho)`` from the semidiscrete
    vector field; RHS ``<a0 (sh - s), sh - s> - <a1 (ph - p).n, (ph - p).n>``.
    """
    mo = msys.mixed
    x = mo.pack(state)
    xd = mo.rate(x)
    s = mo.slices()
    o = msys.ops
    lhs = (
        float(x[s[0]] @ (o.m0 * xd[s[0]]))
        + float(x[s[3]] @ (o.m1 * xd[s[3]]))
        + float(x[s[2]] @ (o.m0 * xd[s[2]]))
    )
    t0, t1 = penalty_terms(o.space, state, mo.traces(x), o.pen)
    return lhs, t0 - t1


def energy_identity_residual(msys: MixedSystem, state: FieldState) -> float:
    lhs, rhs = energy_identity(msys, state)
    return abs(lhs - rhs)


# --------------------------------------------------------------------------
# errors and residuals
# --------------------------------------------------------------------------
def l2_error(space: FESpace, state: FieldState, exact: ExactSolution, t=None) -> dict:
    """Broken L2 errors of u, p, sigma, rho (quadrature order 2r+4)."""
    t = state.t if t is None else t
    quad = triangle_quadrature(2 * space.degree + 4)
    X = space.physical_points(quad.points)
    x, y = X[..., 0], X[..., 1]
    wdet = quad.weights[None, :] * space.mesh.det[:, None]
    out = {}
    for name, deg, coeffs, fn in (
        ("u", 1, state.u, exact.u),
        ("p", 1, state.p, exact.p),
        ("sigma", 0, state.sigma, exact.sigma),
        ("rho", 2, state.rho, exact.rho),
    ):
        err = space.eval_at(coeffs, deg, quad.points) - fn(t, x, y)
        sq = err * err if deg != 1 else np.sum(err * err, axis=-1)
        out[name] = float(np.sqrt(np.sum(wdet * sq)))
    return out


def constraint_residual(systems: ConstraintSystems, state: FieldState, traces: TraceState) -> float:
    r1, r2 = constraint_residuals(systems, state, traces)
    return float(max(np.abs(r1).max(initial=0.0), np.abs(r2).max(initial=0.0)))


def amplitude(ops: Operators, coeffs, form_degree: int) -> float:
    """Sinusoid amplitude implied by the RMS value: ``sqrt(2) |w| / sqrt(|Omega|)``."""
    m = ops.m1 if form_degree == 1 else ops.m0
    area = float(ops.space.mesh.areas.sum())
    return float(np.sqrt(2.0 * _quad(m, np.asarray(coeffs)) / area))


def sample_field(space: FESpace, coeffs, form_degree: int, points) -> np.ndarray:
    """Evaluate a broken field at physical points (first containing element wins)."""
    mesh = space.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam = np.einsum("epk,ekl->epl", pts[None, :, :] - mesh.origin[:, None, :], mesh.inv_t)
    inside = (lam[..., 0] >= -1e-12) & (lam[..., 1] >= -1e-12) & (lam.sum(-1) <= 1 + 1e-12)
    if not inside.any(axis=0).all():
        raise ValueError("some sample points lie outside the mesh")
    elem = inside.argmax(axis=0)
    xhat = lam[elem, np.arange(len(pts))]
    phi = space.basis.values(xhat)
    if form_degree == 1:
        c = space.vector_coeffs(coeffs)[elem]
        return np.einsum("ni,nci->nc", phi, c)
    c = space.scalar_coeffs(coeffs)[elem]
    return np.einsum("ni,ni->n", phi, c)


# --------------------------------------------------------------------------
# multisymplectic conservation law
# --------------------------------------------------------------------------
def symplectic_pairing(ops: Operators, u1, p1, u2, p2) -> np.ndarray:
    """Per-element ``(u1, p2)_K - (u2, p1)_K``."""
    ne = ops.space.mesh.n_elements
    v = ops.m1 * (u1 * p2 - u2 * p1)
    return v.reshape(ne, -1).sum(axis=1)


def _per_element(space: FESpace, side_vals):
    """Sum facet-side integrals (NF, 2) into their elements."""
    out = np.zeros(space.mesh.n_elements)
    pres = space.side_present
    np.add.at(out, space.side_elem[pres], side_vals[pres])
    return out


def element_bracket(space: FESpace, d1: dict, d2: dict) -> np.ndarray:
    """``[w1, w2]`` on each element boundary from facet-side data.

    ``d`` needs ``weights, tau, v_nor, v_tan, eta_nor`` arrays of shape
    (NF, 2, nq).
    """
    w = d1["weights"]
    integrand = (
        d1["tau"] * d2["v_nor"] - d2["tau"] * d1["v_nor"] + d1["v_tan"] * d2["eta_nor"] - d2["v_tan"] * d1["eta_nor"]
    )
    return _per_element(space, np.sum(w * integrand, axis=2))


def hatted(space, state, traces, pen) -> dict:
    """Hatted trace components of a displacement-trace state."""
    d = facet_side_data(space, state, traces, pen)
    return {
        "weights": d["weights"],
        "tau": d["sigma_hat"],
        "v_nor": d["v_hat_nor"],
        "v_tan": d["v_hat_tan"],
        "eta_nor": d["rho_hat_nor"],
    }


def flux_difference_bracket(space, state1, traces1, state2, traces2, pen) -> np.ndarray:
    """``[w1_hat - w1, w2_hat - w2]`` per element for the displacement-trace flux."""

    def diff(state, traces):
        d = facet_side_data(space, state, traces, pen)
        return {
            "weights": d["weights"],
            "tau": d["sigma_hat"] - d["sigma"],
            "v_nor": d["v_hat_nor"] - d["v_nor"],
            "v_tan": d["v_hat_tan"] - d["v_tan"],
            "eta_nor": d["rho_hat_nor"] - d["rho"],
        }

    return element_bracket(space, diff(state1, traces1), diff(state2, traces2))


def mscl_residual(sysm: MultisymplecticSystem, step1, step2, dt) -> np.ndarray:
    """Per-element discrete MSCL residual for two simultaneously stepped solutions.

    Each ``step`` is ``(x0, x1, report)`` with the report's stage values
    retained.  Returns
    ``(J w1, w2)_K(t1) - (J w1, w2)_K(t0) + dt sum_i b_i [W1^i, W2^i]_K``.
    """
    (x0a, x1a, ra), (x0b, x1b, rb) = step1, step2
    if not ra.stages or not rb.stages:
        raise ValueError("stage values were not retained (use keep_stages=True)")
    ops = sysm.ops
    nv = ops.nv
    J1 = symplectic_pairing(ops, x1a[:nv], x1a[nv:], x1b[:nv], x1b[nv:])
    J0 = symplectic_pairing(ops, x0a[:nv], x0a[nv:], x0b[:nv], x0b[nv:])
    br = np.zeros_like(J0)
    for bi, (Xa, Za), (Xb, Zb) in zip(ra.weights, ra.stages, rb.stages):
        sa, ta = sysm.unpack(Xa, Za)
        sb, tb = sysm.unpack(Xb, Zb)
        br += bi * element_bracket(ops.space, hatted(ops.space, sa, ta, ops.pen), hatted(ops.space, sb, tb, ops.pen))
    return J1 - J0 + dt * br


def mixed_witness_bracket(msys: MixedSystem, r1) -> np.ndarray:
    """Per-element flux-difference bracket for the velocity-trace method.

    Variation 1 has ``v1 = 0``, ``v1_hat = 0`` (so ``tau1 = eta1 = 0``) and
    velocity ``r1``; variation 2 has ``v2 = -r1`` and ``v2_hat = -r1_hat``.
    The traces ``tau1_hat`` and ``r1_hat`` come from the facet elimination.
    """
    o = msys.ops
    space = o.space
    mo = msys.mixed
    zero_s = np.zeros(o.ns)
    zero_v = np.zeros(o.nv)
    st1 = FieldState(zero_s, zero_v, zero_s, np.asarray(r1, float))
    tr1 = mo.traces(mo.pack(st1))  # sigma_hat, p_hat
    d = facet_side_data(space, st1, tr1, o.pen)  # kind "p": compares against r1
    w = d["weights"]
    tau_hat1 = d["sigma_hat"]
    dr_tan = d["v_hat_tan"] - d["v_tan"]  # r1_hat^tan - r1^tan
    a0 = d["alpha0"][:, None, None]
    a1 = d["alpha1"][:, None, None]
    z = np.zeros_like(w)
    d1 = {"weights": w, "tau": tau_hat1, "v_nor": z, "v_tan": z, "eta_nor": -a1 * dr_tan}
    # r_hat^nor - r^nor = -a0 (tau_hat - tau)  =>  v2_hat^nor - v2^nor = a0 tau1_hat
    d2 = {"weights": w, "tau": z, "v_nor": a0 * tau_hat1, "v_tan": -dr_tan, "eta_nor": z}
    return element_bracket(space, d1, d2)

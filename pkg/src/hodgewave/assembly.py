"""Sparse operators of the two hybridised LDG discretisations.

Notation for the assembled matrices (``s = +1`` on the plus side, ``-1`` on
the minus side of a facet, ``psi`` the trace basis, sums over both sides)::

    M0, M1          mass matrices of the scalar and vector spaces
    R[tau, u]       (rot u, tau)
    G[eta, u]       (u, grad eta)
    Cx[psi, u]      sum <u x n, psi>
    Evv[tau, s]     sum <s, tau>            (block diagonal)
    Etv[psi, s]     sum <s, psi>
    Ett[psi, chi]   sum <chi, psi>          (2 I on two-sided facets)
    Ntv[psi, r]     sum s <r, psi>
    Ntu[psi, u]     sum s <u . n, psi>
    Nuu[v, u]       sum <u . n, v . n>

A superscript ``a0`` or ``a1`` (``Evv_a0`` ...) means the facet weight is
multiplied by that penalty.  Trace unknowns of one-sided (boundary) facets
are pinned to zero: systems work on the free trace dofs only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .calculus import FieldState, Penalties, TraceState
from .fespace import FESpace
from .linalg import BlockJacobi, DirectSolver, LinearSolveError, SparseMatrix, contiguous_blocks
from .linalg import solve_general, solve_spd
from .nonlinearity import ZERO, Nonlinearity

__all__ = [
    "Operators",
    "ConstraintSystems",
    "MixedOperator",
    "MultisymplecticSystem",
    "MixedSystem",
    "build_operators",
    "build_constraint_systems",
    "solve_constraints",
    "momentum_rhs",
    "build_mixed_operator",
]


def _coo(rows, cols, vals, shape):
    rows = np.asarray(rows).ravel()
    cols = np.asarray(cols).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    keep = vals != 0.0
    A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


class Operators:
    """All element and facet matrices for one space and penalty pair."""

    def __init__(self, space: FESpace, pen: Penalties):
        self.space = space
        self.pen = pen
        mesh, lay = space.mesh, space.layout
        self.alpha0, self.alpha1 = pen.per_facet(mesh.n_facets)
        ne, d0, dt, nf = mesh.n_elements, lay.d0, lay.dt, mesh.n_facets
        ns, nv, nt = lay.n_scalar, lay.n_vector, lay.n_trace
        self.ns, self.nv, self.nt = ns, nv, nt

        self.m0 = np.repeat(mesh.det, d0)
        self.m1 = np.repeat(mesh.det, 2 * d0)
        self.M0 = sp.diags(self.m0, format="csr")
        self.M1 = sp.diags(self.m1, format="csr")

        # ---- volume terms
        Dx, Dy = space.d_phys  # Dx[e][i, j] = int phi_i d_x phi_j
        e_ = np.arange(ne)[:, None, None]
        i_ = np.arange(d0)[None, :, None]
        j_ = np.arange(d0)[None, None, :]
        srow = np.broadcast_to(e_ * d0 + i_, (ne, d0, d0))
        vcol0 = np.broadcast_to((2 * e_) * d0 + j_, (ne, d0, d0))
        vcol1 = np.broadcast_to((2 * e_ + 1) * d0 + j_, (ne, d0, d0))
        # rot(phi e_x) = -d_y phi, rot(phi e_y) = d_x phi
        self.R = _coo(
            np.concatenate([srow.ravel(), srow.ravel()]),
            np.concatenate([vcol0.ravel(), vcol1.ravel()]),
            np.concatenate([-Dy.ravel(), Dx.ravel()]),
            (ns, nv),
        )
        # broken divergence, Div[eta_i, phi_j e_c] = int phi_i d_c phi_j
        self.Div = _coo(
            np.concatenate([srow.ravel(), srow.ravel()]),
            np.concatenate([vcol0.ravel(), vcol1.ravel()]),
            np.concatenate([Dx.ravel(), Dy.ravel()]),
            (ns, nv),
        )
        # G[eta_i, phi_j e_c] = int phi_j d_c phi_i = D_c[j, i]
        self.G = _coo(
            np.concatenate([srow.ravel(), srow.ravel()]),
            np.concatenate([vcol0.ravel(), vcol1.ravel()]),
            np.concatenate([Dx.transpose(0, 2, 1).ravel(), Dy.transpose(0, 2, 1).ravel()]),
            (ns, nv),
        )

        # ---- facet terms
        present = space.side_present  # (nf, 2)
        elem = np.where(present, space.side_elem, 0)
        n = space.side_normal  # (nf, 2, 2), zero on absent sides
        sgn = space.side_sign  # (nf, 2)
        w = space.edge_weights  # (nf, nq)
        phi = space.facet_phi  # (nf, 2, nq, d0)
        psi = space.psi  # (nf, nq, dt)
        pm = present[:, :, None, None].astype(float)
        T1 = np.einsum("fq,fqj,fsqi->fsji", w, psi, phi) * pm  # (nf, 2, dt, d0)
        V1 = np.einsum("fq,fsqi,fsqj->fsij", w, phi, phi) * pm  # (nf, 2, d0, d0)
        V1 = 0.5 * (V1 + V1.transpose(0, 1, 3, 2))  # exact symmetry
        P1 = np.einsum("fq,fqj,fqk->fjk", w, psi, psi)  # (nf, dt, dt)
        P1 = 0.5 * (P1 + P1.transpose(0, 2, 1))
        nside = present.sum(axis=1).astype(float)

        f_ = np.arange(nf)[:, None, None, None]
        jt = np.arange(dt)[None, None, :, None]
        iv = np.arange(d0)[None, None, None, :]
        E4 = elem[:, :, None, None]
        trow = np.broadcast_to(f_ * dt + jt, T1.shape)
        scol = np.broadcast_to(E4 * d0 + iv, T1.shape)
        vc = [np.broadcast_to((2 * E4 + c) * d0 + iv, T1.shape) for c in (0, 1)]
        # u x n = u_x n_y - u_y n_x
        xn = np.stack([n[..., 1], -n[..., 0]], axis=-1)  # (nf, 2, 2)

        def weighted(W):
            Wf = W[:, None, None, None]
            Ett = sp.block_diag(list(P1 * (nside * W)[:, None, None]), format="csr") if nf else None
            Etv = _coo(trow, scol, Wf * T1, (nt, ns))
            Ntv = _coo(trow, scol, Wf * sgn[:, :, None, None] * T1, (nt, ns))
            Cx = _coo(
                np.concatenate([trow.ravel()] * 2),
                np.concatenate([vc[0].ravel(), vc[1].ravel()]),
                np.concatenate([(Wf * xn[:, :, 0, None, None] * T1).ravel(), (Wf * xn[:, :, 1, None, None] * T1).ravel()]),
                (nt, nv),
            )
            Ntu = _coo(
                np.concatenate([trow.ravel()] * 2),
                np.concatenate([vc[0].ravel(), vc[1].ravel()]),
                np.concatenate(
                    [
                        (Wf * (sgn[:, :, None, None] * n[:, :, 0, None, None]) * T1).ravel(),
                        (Wf * (sgn[:, :, None, None] * n[:, :, 1, None, None]) * T1).ravel(),
                    ]
                ),
                (nt, nv),
            )
            ii = np.arange(d0)[None, None, :, None]
            jj = np.arange(d0)[None, None, None, :]
            E4v = elem[:, :, None, None]
            srr = np.broadcast_to(E4v * d0 + ii, V1.shape)
            scc = np.broadcast_to(E4v * d0 + jj, V1.shape)
            Evv = _coo(srr, scc, Wf * V1, (ns, ns))
            rows, cols, vals = [], [], []
            for c in (0, 1):
                for d in (0, 1):
                    rows.append(np.broadcast_to((2 * E4v + c) * d0 + ii, V1.shape).ravel())
                    cols.append(np.broadcast_to((2 * E4v + d) * d0 + jj, V1.shape).ravel())
                    vals.append((Wf * (n[:, :, c] * n[:, :, d])[:, :, None, None] * V1).ravel())
            Nuu = _coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (nv, nv))
            # duplicate entries are summed in arbitrary order: restore exact symmetry
            Evv = (0.5 * (Evv + Evv.T)).tocsr()
            Nuu = (0.5 * (Nuu + Nuu.T)).tocsr()
            return dict(Ett=Ett, Etv=Etv, Ntv=Ntv, Cx=Cx, Ntu=Ntu, Evv=Evv, Nuu=Nuu)

        one = weighted(np.ones(nf))
        a0 = weighted(self.alpha0)
        a1 = weighted(self.alpha1)
        for k, v in one.items():
            setattr(self, k, v)
        for k, v in a0.items():
            setattr(self, k + "_a0", v)
        for k, v in a1.items():
            setattr(self, k + "_a1", v)

        # free trace dofs (one-sided facets are pinned to zero)
        free_f = np.flatnonzero(space.mesh.two_sided)
        self.free_trace = (free_f[:, None] * dt + np.arange(dt)[None, :]).ravel()
        self.n_free = len(self.free_trace)
        self.P = sp.csr_matrix(
            (np.ones(self.n_free), (self.free_trace, np.arange(self.n_free))), shape=(nt, self.n_free)
        )

    def restrict(self, A):
        """Rows of a trace-space matrix or vector restricted to free dofs."""
        if not sp.issparse(A):
            return np.asarray(A)[self.free_trace]
        return (self.P.T @ A).tocsr()

    def expand(self, x_free):
        out = np.zeros(self.nt)
        out[self.free_trace] = x_free
        return out


def build_operators(space: FESpace, pen: Penalties) -> Operators:
    return Operators(space, pen)


# --------------------------------------------------------------------------
# multisymplectic method: constraint systems
# --------------------------------------------------------------------------
@dataclass
class ConstraintSystems:
    """``A_sigma [sigma; sigma_hat] = B_sigma u`` and ``A_rho [rho; u_hat] = B_rho u``.

    Trace unknowns are restricted to free facet dofs.
    """

    ops: Operators
    A_sigma: sp.csr_matrix
    B_sigma: sp.csr_matrix
    A_rho: sp.csr_matrix
    B_rho: sp.csr_matrix
    solver: str = "direct"
    tol: float = 1e-13

    def __post_init__(self):
        ns, nfree = self.ops.ns, self.ops.n_free
        d0, dt = self.ops.space.layout.d0, self.ops.space.layout.dt
        blocks = contiguous_blocks([d0] * (ns // d0) + [dt] * (nfree // dt))
        self._blocks = blocks
        self.last_residual = 0.0
        if self.solver == "direct":
            self._sig = DirectSolver(self.A_sigma, tol=self.tol)
            self._rho = DirectSolver(self.A_rho, tol=self.tol)
        elif self.solver == "iterative":
            self._negA = SparseMatrix.from_scipy(-self.A_sigma)
            self._Arho = SparseMatrix.from_scipy(self.A_rho)
            self._pc_sig = BlockJacobi(self._negA, blocks)
            self._pc_rho = BlockJacobi(self._Arho, blocks)
        else:
            raise ValueError(f"unknown solver {self.solver!r}")

    def solve_sigma(self, rhs):
        if self.solver == "direct":
            x = self._sig.solve(rhs)
            return x, self._sig.last_residual
        x, info = solve_spd(self._negA, -rhs, tol=self.tol, precond=self._pc_sig)
        return x, info.residual

    def solve_rho(self, rhs):
        if self.solver == "direct":
            x = self._rho.solve(rhs)
            return x, self._rho.last_residual
        x, info = solve_general(self._Arho, rhs, tol=self.tol, precond=self._pc_rho)
        return x, info.residual


def build_constraint_systems(space_or_ops, pen: Penalties | None = None, solver="direct", tol=1e-13):
    ops = space_or_ops if isinstance(space_or_ops, Operators) else Operators(space_or_ops, pen)
    Pt = ops.P.T
    A_sigma = sp.bmat(
        [
            [-ops.M0 + ops.Evv_a0, -(Pt @ ops.Etv_a0).T],
            [-(Pt @ ops.Etv_a0), Pt @ ops.Ett_a0 @ ops.P],
        ],
        format="csr",
    )
    B_sigma = sp.vstack([ops.R, Pt @ ops.Cx], format="csr")
    A_rho = sp.bmat(
        [
            [ops.M0, (Pt @ ops.Ntv).T],
            [-(Pt @ ops.Ntv), Pt @ ops.Ett_a1 @ ops.P],
        ],
        format="csr",
    )
    B_rho = sp.vstack([ops.G, Pt @ ops.Ntu_a1], format="csr")
    n = A_sigma.shape[0]
    if A_sigma.shape != (n, n) or B_sigma.shape != (n, ops.nv) or A_rho.shape != (n, n):
        raise ValueError("constraint system dimension mismatch")
    return ConstraintSystems(ops, A_sigma, B_sigma, A_rho, B_rho, solver=solver, tol=tol)


def solve_constraints(systems: ConstraintSystems, u):
    """Return ``(sigma, sigma_hat, rho, u_hat)``; traces in full trace layout."""
    ops = systems.ops
    u = np.asarray(u, dtype=float)
    if u.shape != (ops.nv,):
        raise ValueError(f"u has shape {u.shape}, expected ({ops.nv},)")
    xs, r1 = systems.solve_sigma(systems.B_sigma @ u)
    xr, r2 = systems.solve_rho(systems.B_rho @ u)
    systems.last_residual = max(r1, r2)
    ns = ops.ns
    return xs[:ns], ops.expand(xs[ns:]), xr[:ns], ops.expand(xr[ns:])


def constraint_residuals(systems: ConstraintSystems, state: FieldState, traces: TraceState):
    """Vector residuals of both constraint systems at a given state."""
    ops = systems.ops
    xs = np.concatenate([state.sigma, traces.sigma_hat[ops.free_trace]])
    xr = np.concatenate([state.rho, traces.vhat[ops.free_trace]])
    return systems.A_sigma @ xs - systems.B_sigma @ state.u, systems.A_rho @ xr - systems.B_rho @ state.u


def momentum_rhs(ops: Operators, state: FieldState, traces: TraceState, nonlin: Nonlinearity = ZERO):
    """Load ``L`` with ``M1 dp/dt = L`` for the displacement-trace method.

    ``L = R^T sigma - G^T rho + Cx^T sigma_hat + Ntu_a1^T u_hat - Nuu_a1 u - (f(u), v)``.
    """
    if traces.kind != "u":
        raise ValueError("momentum load needs displacement traces (kind 'u')")
    L = (
        ops.R.T @ state.sigma
        - ops.G.T @ state.rho
        + ops.Cx.T @ traces.sigma_hat
        + ops.Ntu_a1.T @ traces.vhat
        - ops.Nuu_a1 @ state.u
    )
    if not nonlin.is_zero:
        L -= nonlin.load(ops.space, state.u)
    return L


# --------------------------------------------------------------------------
# mixed (velocity-trace) method
# --------------------------------------------------------------------------
@dataclass
class MixedOperator:
    """First-order operator on ``x = [sigma, u, rho, p]`` after trace elimination.

    ``E dx/dt = A x - [0, 0, 0, (f(u), v)]`` with ``E = diag(M0, M1, M0, M1)``.
    Eliminated traces: ``sigma_hat = S_sigma x`` and ``p_hat = S_p x``.
    """

    ops: Operators
    A: sp.csr_matrix
    E: np.ndarray
    S_sigma: sp.csr_matrix
    S_p: sp.csr_matrix

    def slices(self):
        ns, nv = self.ops.ns, self.ops.nv
        return (
            slice(0, ns),
            slice(ns, ns + nv),
            slice(ns + nv, 2 * ns + nv),
            slice(2 * ns + nv, 2 * ns + 2 * nv),
        )

    def pack(self, state: FieldState):
        return np.concatenate([state.sigma, state.u, state.rho, state.p])

    def unpack(self, x, t=0.0) -> FieldState:
        s = self.slices()
        return FieldState(x[s[0]].copy(), x[s[1]].copy(), x[s[2]].copy(), x[s[3]].copy(), t)

    def traces(self, x) -> TraceState:
        return TraceState(self.S_sigma @ x, self.S_p @ x, "p")

    def rate(self, x, nonlin: Nonlinearity = ZERO):
        """Time derivative ``dx/dt``."""
        r = self.A @ x
        if not nonlin.is_zero:
            r[self.slices()[3]] -= nonlin.load(self.ops.space, x[self.slices()[1]])
        return r / self.E

    def full_residual(self, x, xdot, sigma_hat, p_hat, nonlin: Nonlinearity = ZERO):
        """Residuals of the un-eliminated system with traces as unknowns.

        Rows: sigma, u, rho, p equations followed by the two conservativity
        conditions (restricted to free trace dofs).
        """
        o = self.ops
        s = self.slices()
        sig, u, rho, p = (x[k] for k in s)
        dsig, du, drho, dp = (xdot[k] for k in s)
        r_sig = o.M0 @ dsig + o.R @ p + o.Etv_a0.T @ sigma_hat - o.Evv_a0 @ sig
        r_u = o.M1 @ (du - p)
        r_rho = o.M0 @ drho - o.G @ p + o.Ntv.T @ p_hat
        r_p = (
            -(o.M1 @ dp)
            + o.R.T @ sig
            - o.G.T @ rho
            + o.Cx.T @ sigma_hat
            + o.Ntu_a1.T @ p_hat
            - o.Nuu_a1 @ p
        )
        if not nonlin.is_zero:
            r_p -= nonlin.load(o.space, u)
        # sum <p x n - a0 (sigma_hat - sigma), tau_hat> = 0
        c_sig = o.restrict(o.Cx @ p - o.Ett_a0 @ sigma_hat + o.Etv_a0 @ sig)
        # sum <rho - a1 (p_hat - p . n), s psi> = 0
        c_p = o.restrict(o.Ntv @ rho - o.Ett_a1 @ p_hat + o.Ntu_a1 @ p)
        return np.concatenate([r_sig, r_u, r_rho, r_p, c_sig, c_p])


def build_mixed_operator(space_or_ops, pen: Penalties | None = None) -> MixedOperator:
    ops = space_or_ops if isinstance(space_or_ops, Operators) else Operators(space_or_ops, pen)
    P, Pt = ops.P, ops.P.T
    ns, nv = ops.ns, ops.nv

    def inv_diag(A):
        d = A.diagonal()
        off = A - sp.diags(d)
        if off.nnz and abs(off).max() > 1e-12 * abs(d).max():
            raise ValueError("facet trace mass is not diagonal")
        if np.any(d == 0):
            raise ValueError("zero penalty: trace elimination is singular")
        return sp.diags(1.0 / d)

    Ks = inv_diag(Pt @ ops.Ett_a0 @ P)
    Kp = inv_diag(Pt @ ops.Ett_a1 @ P)
    Z_s = sp.csr_matrix((ops.nt, ns))
    Z_v = sp.csr_matrix((ops.nt, nv))
    # a0 Ett sigma_hat = a0 Etv sigma + Cx p
    S_sigma = P @ Ks @ Pt @ sp.hstack([ops.Etv_a0, Z_v, Z_s, ops.Cx])
    # a1 Ett p_hat = Ntv rho + a1 Ntu p
    S_p = P @ Kp @ Pt @ sp.hstack([Z_s, Z_v, ops.Ntv, ops.Ntu_a1])
    S_sigma = sp.csr_matrix(S_sigma)
    S_p = sp.csr_matrix(S_p)

    Zss = sp.csr_matrix((ns, ns))
    Zsv = sp.csr_matrix((ns, nv))
    Zvs = sp.csr_matrix((nv, ns))
    Zvv = sp.csr_matrix((nv, nv))
    A_sig = sp.hstack([ops.Evv_a0, Zsv, Zss, -ops.R]) - ops.Etv_a0.T @ S_sigma
    A_u = sp.hstack([Zvs, Zvv, Zvs, ops.M1])
    A_rho = sp.hstack([Zss, Zsv, Zss, ops.G]) - ops.Ntv.T @ S_p
    A_p = (
        sp.hstack([ops.R.T, Zvv, -ops.G.T, -ops.Nuu_a1])
        + ops.Cx.T @ S_sigma
        + ops.Ntu_a1.T @ S_p
    )
    A = sp.vstack([A_sig, A_u, A_rho, A_p], format="csr")
    A.eliminate_zeros()
    E = np.concatenate([ops.m0, ops.m1, ops.m0, ops.m1])
    return MixedOperator(ops, A, E, S_sigma, S_p)


# --------------------------------------------------------------------------
# semidiscrete systems in the form consumed by the time steppers
# --------------------------------------------------------------------------
class _SystemBase:
    """``E dx/dt = Axx x + Axz z + g(x)``, ``0 = Azx x + Azz z``.

    ``q_mask`` flags the entries of ``x`` integrated with the first tableau of
    a partitioned pair; the remaining (momentum) entries use the second.
    ``g`` is the nonlinear load, nonzero only in momentum rows.
    """

    name = "base"

    def __init__(self, space: FESpace, pen: Penalties, nonlin: Nonlinearity = ZERO, ops=None):
        self.space = space
        self.pen = pen
        self.nonlin = nonlin
        self.ops = ops if ops is not None else Operators(space, pen)

    @property
    def n_x(self):
        return len(self.E)

    @property
    def n_z(self):
        return self.Azz.shape[0]

    @property
    def is_linear(self):
        return self.nonlin.is_zero

    def g(self, x):
        out = np.zeros(self.n_x)
        if not self.nonlin.is_zero:
            out[self._p_rows] = -self.nonlin.load(self.space, x[self._u_rows])
        return out

    def dg(self, x):
        if self.nonlin.is_zero:
            return sp.csr_matrix((self.n_x, self.n_x))
        J = self.nonlin.jacobian(self.space, x[self._u_rows]).tocoo()
        return sp.csr_matrix(
            (-J.data, (J.row + self._p_rows.start, J.col + self._u_rows.start)), shape=(self.n_x, self.n_x)
        )

    def rate(self, x, z):
        return (self.Axx @ x + self.Axz @ z + self.g(x)) / self.E


class MultisymplecticSystem(_SystemBase):
    """Displacement-trace method: ``x = [u, p]``, ``z = [sigma, sigma_hat, rho, u_hat]``."""

    name = "ms_ldgh"

    def __init__(self, space, pen, nonlin=ZERO, ops=None, solver="direct"):
        super().__init__(space, pen, nonlin, ops)
        o = self.ops
        self.constraints = build_constraint_systems(o, solver=solver)
        cs = self.constraints
        ns, nv, nfr = o.ns, o.nv, o.n_free
        self._u_rows = slice(0, nv)
        self._p_rows = slice(nv, 2 * nv)
        self.q_mask = np.r_[np.ones(nv, bool), np.zeros(nv, bool)]
        self.E = np.concatenate([o.m1, o.m1])
        Zvv = sp.csr_matrix((nv, nv))
        self.Axx = sp.bmat([[Zvv, o.M1], [-o.Nuu_a1, Zvv]], format="csr")
        Pt = o.P.T
        self.Axz = sp.bmat(
            [
                [sp.csr_matrix((nv, ns)), sp.csr_matrix((nv, nfr)), sp.csr_matrix((nv, ns)), sp.csr_matrix((nv, nfr))],
                [o.R.T, (Pt @ o.Cx).T, -o.G.T, (Pt @ o.Ntu_a1).T],
            ],
            format="csr",
        )
        nz1 = ns + nfr
        self.Azx = sp.bmat([[-cs.B_sigma, sp.csr_matrix((nz1, nv))], [-cs.B_rho, sp.csr_matrix((nz1, nv))]], format="csr")
        self.Azz = sp.block_diag([cs.A_sigma, cs.A_rho], format="csr")
        self._nz1 = nz1

    def solve_z(self, x):
        """Constraint solve at ``x``; returns ``(z, residual)``."""
        s, sh, r, uh = solve_constraints(self.constraints, x[self._u_rows])
        return self.pack_z(s, sh, r, uh), self.constraints.last_residual

    def pack_z(self, sigma, sigma_hat, rho, u_hat):
        f = self.ops.free_trace
        return np.concatenate([sigma, sigma_hat[f], rho, u_hat[f]])

    def split_z(self, z):
        o = self.ops
        ns, nfr = o.ns, o.n_free
        return (
            z[:ns],
            o.expand(z[ns : ns + nfr]),
            z[ns + nfr : 2 * ns + nfr],
            o.expand(z[2 * ns + nfr :]),
        )

    def pack(self, state: FieldState, traces: TraceState | None = None):
        x = np.concatenate([state.u, state.p])
        if traces is None:
            return x, self.solve_z(x)[0]
        return x, self.pack_z(state.sigma, traces.sigma_hat, state.rho, traces.vhat)

    def unpack(self, x, z, t=0.0):
        s, sh, r, uh = self.split_z(z)
        nv = self.ops.nv
        return FieldState(s, x[:nv].copy(), r, x[nv:].copy(), t), TraceState(sh, uh, "u")

    def initial(self, u0, p0, t=0.0):
        """State with constraint-solved sigma, rho and traces."""
        x = np.concatenate([np.asarray(u0, float), np.asarray(p0, float)])
        z, _ = self.solve_z(x)
        return self.unpack(x, z, t)


class MixedSystem(_SystemBase):
    """Velocity-trace method: ``x = [sigma, u, rho, p]``, no algebraic part."""

    name = "mixed_ldgh"

    def __init__(self, space, pen, nonlin=ZERO, ops=None, solver="direct"):
        super().__init__(space, pen, nonlin, ops)
        self.mixed = build_mixed_operator(self.ops)
        o = self.ops
        ns, nv = o.ns, o.nv
        s = self.mixed.slices()
        self._u_rows = s[1]
        self._p_rows = s[3]
        self.q_mask = np.r_[np.ones(2 * ns + nv, bool), np.zeros(nv, bool)]
        self.E = self.mixed.E
        self.Axx = self.mixed.A
        n = len(self.E)
        self.Axz = sp.csr_matrix((n, 0))
        self.Azx = sp.csr_matrix((0, n))
        self.Azz = sp.csr_matrix((0, 0))
        # initial sigma and rho come from the displacement-trace constraints
        self._constraints = None
        self._solver = solver

    def solve_z(self, x):
        return np.zeros(0), 0.0

    def pack(self, state: FieldState, traces: TraceState | None = None):
        return self.mixed.pack(state), np.zeros(0)

    def unpack(self, x, z=None, t=0.0):
        return self.mixed.unpack(x, t), self.mixed.traces(x)

    def initial(self, u0, p0, t=0.0):
        """sigma and rho from the constraint equations with data ``u0``."""
        if self._constraints is None:
            self._constraints = build_constraint_systems(self.ops, solver=self._solver)
        s, _, r, _ = solve_constraints(self._constraints, np.asarray(u0, float))
        x = np.concatenate([s, np.asarray(u0, float), r, np.asarray(p0, float)])
        return self.unpack(x, None, t)


def make_system(method: str, space: FESpace, pen: Penalties, nonlin: Nonlinearity = ZERO, solver="direct"):
    if method == "ms_ldgh":
        return MultisymplecticSystem(space, pen, nonlin, solver=solver)
    if method == "mixed_ldgh":
        return MixedSystem(space, pen, nonlin, solver=solver)
    raise ValueError(f"unknown method {method!r}")


__all__ += ["constraint_residuals", "make_system", "LinearSolveError"]

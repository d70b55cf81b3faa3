"""Runge-Kutta and partitioned Runge-Kutta stepping of the semidiscrete systems.

Systems have the form (see :mod:`hodgewave.assembly`)::

    E dx/dt = Axx x + Axz z + g(x),     0 = Azx x + Azz z

An ``s``-stage (P)RK step solves for all stage values at once::

    E (X_i - x0) = dt sum_j D_ij (Axx X_j + Axz Z_j + g(X_j))
    0 = Azx X_i + Azz Z_i

where ``D_ij`` applies ``a_ij`` on position rows and ``abar_ij`` on momentum
rows, then sets ``x1 = x0 + dt sum_i b_i K_i`` with ``K_i`` the stage rates.
Linear systems are solved with a cached sparse LU per (tableau, dt); the
cubic nonlinearity uses Newton with the analytic Jacobian.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .calculus import FieldState, TraceState
from .linalg import DirectSolver, LinearSolveError

__all__ = [
    "ButcherTableau",
    "NewtonConfig",
    "NewtonError",
    "StepReport",
    "Integrator",
    "MIDPOINT",
    "GAUSS2",
    "VERLET",
    "VERLET_NONSYMPLECTIC",
    "EXPLICIT_EULER",
    "YOSHIDA6_WEIGHTS",
    "TABLEAUX",
    "get_tableau",
    "check_symplectic_rk",
    "check_symplectic_prk",
    "composition_conditions",
    "composition_order_harmonic",
    "step_rk_generic",
    "step_midpoint",
    "step_yoshida6",
    "step_verlet",
]

log = logging.getLogger(__name__)

SYMPLECTIC_TOL = 1e-14


@dataclass(frozen=True)
class ButcherTableau:
    """RK coefficients, with an optional second set for partitioned methods."""

    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    a_bar: np.ndarray | None = None
    b_bar: np.ndarray | None = None
    c_bar: np.ndarray | None = None

    def __post_init__(self):
        for k in ("a", "b", "c", "a_bar", "b_bar", "c_bar"):
            v = getattr(self, k)
            if v is not None:
                object.__setattr__(self, k, np.array(v, dtype=float))
        s = len(self.b)
        if self.a.shape != (s, s) or self.c.shape != (s,):
            raise ValueError(f"tableau {self.name}: inconsistent stage count")
        if self.is_partitioned:
            if self.a_bar.shape != (s, s) or self.b_bar.shape != (s,) or self.c_bar.shape != (s,):
                raise ValueError(f"tableau {self.name}: inconsistent partitioned coefficients")
        # only the first set is checked: for PRK pairs cbar is tied to c by the
        # symplecticity condition, not to the row sums of abar
        if np.max(np.abs(self.a.sum(axis=1) - self.c)) > 1e-14:
            warnings.warn(f"tableau {self.name}: c_i != sum_j a_ij", stacklevel=3)

    @property
    def stages(self) -> int:
        return len(self.b)

    @property
    def is_partitioned(self) -> bool:
        return self.a_bar is not None

    def pair(self):
        """``(a, b, c, abar, bbar, cbar)``; the second set repeats the first for RK."""
        if self.is_partitioned:
            return self.a, self.b, self.c, self.a_bar, self.b_bar, self.c_bar
        return self.a, self.b, self.c, self.a, self.b, self.c


def check_symplectic_rk(t: ButcherTableau, tol=SYMPLECTIC_TOL):
    """``max |b_i b_j - b_i a_ij - b_j a_ji|`` and whether it is within ``tol``."""
    a, b = t.a, t.b
    m = np.outer(b, b) - b[:, None] * a - b[None, :] * a.T
    viol = float(np.max(np.abs(m)))
    return viol <= tol, viol


def check_symplectic_prk(t: ButcherTableau, tol=SYMPLECTIC_TOL):
    """Partitioned condition plus ``b = bbar`` and ``c = cbar``."""
    a, b, c, ab, bb, cb = t.pair()
    m = np.outer(b, bb) - b[:, None] * ab - bb[None, :] * a.T
    viol = max(
        float(np.max(np.abs(m))),
        float(np.max(np.abs(b - bb))),
        float(np.max(np.abs(c - cb))),
    )
    return viol <= tol, viol


MIDPOINT = ButcherTableau("midpoint", [[0.5]], [1.0], [0.5])
_s3 = np.sqrt(3.0)
GAUSS2 = ButcherTableau(
    "gauss2",
    [[0.25, 0.25 - _s3 / 6], [0.25 + _s3 / 6, 0.25]],
    [0.5, 0.5],
    [0.5 - _s3 / 6, 0.5 + _s3 / 6],
)
VERLET = ButcherTableau(
    "verlet",
    [[0.0, 0.0], [0.5, 0.5]],
    [0.5, 0.5],
    [0.0, 1.0],
    [[0.5, 0.0], [0.5, 0.0]],
    [0.5, 0.5],
    [0.0, 1.0],
)
VERLET_NONSYMPLECTIC = ButcherTableau(
    "verlet_cbar_half",
    [[0.0, 0.0], [0.5, 0.5]],
    [0.5, 0.5],
    [0.0, 1.0],
    [[0.5, 0.0], [0.5, 0.0]],
    [0.5, 0.5],
    [0.5, 0.5],
)
EXPLICIT_EULER = ButcherTableau("explicit_euler", [[0.0]], [1.0], [0.0])

TABLEAUX = {t.name: t for t in (MIDPOINT, GAUSS2, VERLET, VERLET_NONSYMPLECTIC, EXPLICIT_EULER)}


def get_tableau(name: str) -> ButcherTableau:
    try:
        return TABLEAUX[name]
    except KeyError:
        raise ValueError(f"unknown tableau {name!r}; choose from {sorted(TABLEAUX)}") from None


# Symmetric 7-step composition of order 6 (Yoshida 1990, solution A).
_g1 = 0.78451361047755726381949763
_g2 = 0.23557321335935813368479318
_g3 = -1.17767998417887100694641568
_g4 = 1.31518632068391121888424974
YOSHIDA6_WEIGHTS = np.array([_g1, _g2, _g3, _g4, _g3, _g2, _g1])


def composition_conditions(weights):
    """``(sum w, sum w^3, sum w^5)``; order 6 needs ``(1, 0, 0)`` for a symmetric
    composition of a symmetric second-order method."""
    w = np.asarray(weights, dtype=float)
    return float(w.sum()), float((w**3).sum()), float((w**5).sum())


def composition_order_harmonic(weights, T=10.0, steps=(80, 160)) -> float:
    """Observed order of a midpoint composition on ``q' = p, p' = -q``.

    Uses the exact midpoint map (a Cayley transform), so only the
    composition error is measured.
    """
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    I2 = np.eye(2)
    errs = []
    for n in steps:
        h = T / n
        S = I2
        for w in weights:
            S = np.linalg.solve(I2 - 0.5 * w * h * A, I2 + 0.5 * w * h * A) @ S
        y = np.linalg.matrix_power(S, n) @ np.array([1.0, 0.0])
        errs.append(np.hypot(y[0] - np.cos(T), y[1] + np.sin(T)))
    return float(np.log(errs[0] / errs[1]) / np.log(steps[1] / steps[0]))


@dataclass
class NewtonConfig:
    tol: float = 1e-12
    maxit: int = 25


class NewtonError(RuntimeError):
    def __init__(self, residual, iterations):
        super().__init__(f"Newton did not converge: residual {residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


@dataclass
class StepReport:
    """Diagnostics of one step.

    ``stages`` holds ``(X_i, Z_i)`` when requested; ``weights`` holds the
    quadrature weights paired with the stage traces.
    """

    stages: list = field(default_factory=list)
    weights: np.ndarray | None = None
    newton_iters: int = 0
    linsolve_residual: float = 0.0
    stage_residual: float = 0.0
    nonlinear_solves: int = 0
    linear_solves: int = 0
    accel_end: np.ndarray | None = None

    def merge(self, other: "StepReport"):
        self.newton_iters = max(self.newton_iters, other.newton_iters)
        self.linsolve_residual = max(self.linsolve_residual, other.linsolve_residual)
        self.stage_residual = max(self.stage_residual, other.stage_residual)
        self.nonlinear_solves += other.nonlinear_solves
        self.linear_solves += other.linear_solves


class Integrator:
    """Time steppers bound to one semidiscrete system."""

    def __init__(self, system, newton: NewtonConfig | None = None, lin_tol=1e-13):
        self.system = system
        self.newton = newton or NewtonConfig()
        self.lin_tol = lin_tol
        self._lin_cache: dict = {}
        self.counters = {"linear_solves": 0, "nonlinear_solves": 0}

    # -------------------------------------------------------------- generic
    def _coeff_blocks(self, tableau: ButcherTableau):
        a, b, c, ab, bb, cb = tableau.pair()
        q = self.system.q_mask
        D = [[np.where(q, a[i, j], ab[i, j]) for j in range(tableau.stages)] for i in range(tableau.stages)]
        bvec = [np.where(q, b[i], bb[i]) for i in range(tableau.stages)]
        return D, bvec

    def _stage_matrix(self, tableau, dt, D):
        sysm = self.system
        s = tableau.stages
        Ediag = sp.diags(sysm.E)
        xx = [[None] * s for _ in range(s)]
        xz = [[None] * s for _ in range(s)]
        zx = [[None] * s for _ in range(s)]
        zz = [[None] * s for _ in range(s)]
        for i in range(s):
            for j in range(s):
                Dij = sp.diags(D[i][j])
                xx[i][j] = (Ediag if i == j else None)
                blk = -dt * (Dij @ sysm.Axx)
                xx[i][j] = blk if xx[i][j] is None else xx[i][j] + blk
                xz[i][j] = -dt * (Dij @ sysm.Axz) if sysm.n_z else None
            if sysm.n_z:
                zx[i][i] = sysm.Azx
                zz[i][i] = sysm.Azz
        if sysm.n_z:
            blocks = [xx[i] + xz[i] for i in range(s)] + [zx[i] + zz[i] for i in range(s)]
            # bmat needs a shape hint on empty block rows/cols
            nx, nz = sysm.n_x, sysm.n_z
            for i in range(s):
                for j in range(s):
                    if xz[i][j] is None:
                        blocks[i][s + j] = sp.csr_matrix((nx, nz))
                    if zx[i][j] is None:
                        blocks[s + i][j] = sp.csr_matrix((nz, nx))
                    if zz[i][j] is None:
                        blocks[s + i][s + j] = sp.csr_matrix((nz, nz))
        else:
            blocks = xx
        return sp.bmat(blocks, format="csr")

    def _linear_solver(self, tableau, dt, D):
        key = (tableau.name, tableau.a.tobytes(), float(dt))
        solver = self._lin_cache.get(key)
        if solver is None:
            mat = self._stage_matrix(tableau, dt, D)
            solver = (mat, DirectSolver(mat, tol=self.lin_tol))
            if len(self._lin_cache) > 16:
                self._lin_cache.clear()
            self._lin_cache[key] = solver
        return solver

    def step(self, tableau: ButcherTableau, x0, z0, t, dt, keep_stages=False):
        """One (P)RK step.  Returns ``(x1, z1, StepReport)``."""
        sysm = self.system
        s = tableau.stages
        nx, nz = sysm.n_x, sysm.n_z
        D, bvec = self._coeff_blocks(tableau)
        mat, lin = self._linear_solver(tableau, dt, D)
        rhs = np.concatenate([np.tile(sysm.E * x0, s), np.zeros(s * nz)])
        rep = StepReport()

        def split(W):
            X = [W[i * nx : (i + 1) * nx] for i in range(s)]
            Z = [W[s * nx + i * nz : s * nx + (i + 1) * nz] for i in range(s)]
            return X, Z

        if sysm.is_linear:
            W = lin.solve(rhs)
            rep.linsolve_residual = lin.last_residual
            rep.linear_solves = 1
            self.counters["linear_solves"] += 1
            X, Z = split(W)
            G = [np.zeros(nx) for _ in range(s)]
        else:
            W = np.concatenate([np.tile(x0, s), np.tile(z0, s) if nz else np.zeros(0)])
            rnorm0 = max(np.linalg.norm(rhs), 1e-300)
            it = 0
            while True:
                X, Z = split(W)
                G = [sysm.g(X[j]) for j in range(s)]
                R = mat @ W - rhs
                for i in range(s):
                    R[i * nx : (i + 1) * nx] -= dt * sum(D[i][j] * G[j] for j in range(s))
                rel = np.linalg.norm(R) / rnorm0
                if rel <= self.newton.tol:
                    break
                if it >= self.newton.maxit:
                    raise NewtonError(rel, it)
                dG = [sysm.dg(X[j]) for j in range(s)]
                corr = sp.bmat(
                    [
                        [-dt * (sp.diags(D[i][j]) @ dG[j]) for j in range(s)]
                        + [sp.csr_matrix((nx, nz)) for _ in range(s)]
                        for i in range(s)
                    ]
                    + [[sp.csr_matrix((nz, nx)) for _ in range(s)] + [sp.csr_matrix((nz, nz)) for _ in range(s)] for _ in range(s)],
                    format="csr",
                )
                J = DirectSolver(mat + corr, tol=self.lin_tol)
                W = W - J.solve(R)
                rep.linsolve_residual = max(rep.linsolve_residual, J.last_residual)
                it += 1
            rep.newton_iters = it
            rep.stage_residual = rel
            rep.nonlinear_solves = 1
            self.counters["nonlinear_solves"] += 1
        K = [(sysm.Axx @ X[j] + (sysm.Axz @ Z[j] if nz else 0.0) + G[j]) / sysm.E for j in range(s)]
        x1 = x0 + dt * sum(bvec[j] * K[j] for j in range(s))
        z1, r = sysm.solve_z(x1)
        rep.linsolve_residual = max(rep.linsolve_residual, r)
        if keep_stages:
            rep.stages = [(X[i].copy(), Z[i].copy()) for i in range(s)]
            rep.weights = tableau.b.copy()
        return x1, z1, rep

    # ------------------------------------------------------------ concrete
    def midpoint(self, x0, z0, t, dt, keep_stages=False):
        return self.step(MIDPOINT, x0, z0, t, dt, keep_stages)

    def compose(self, weights, x0, z0, t, dt):
        rep = StepReport()
        x, z, tt = x0, z0, t
        for w in weights:
            x, z, r = self.midpoint(x, z, tt, w * dt)
            tt += w * dt
            rep.merge(r)
        return x, z, rep

    def yoshida6(self, x0, z0, t, dt):
        return self.compose(YOSHIDA6_WEIGHTS, x0, z0, t, dt)

    def _accel(self, x, z):
        sysm = self.system
        pr = ~sysm.q_mask
        return ((sysm.Axx @ x + sysm.Axz @ z + sysm.g(x)) / sysm.E)[pr]

    def verlet(self, x0, z0, t, dt, keep_stages=False, accel0=None):
        """Explicit three-step Stormer/Verlet (displacement-trace method only).

        Returns ``(x1, z1, report)``; ``report.accel_end`` holds the final
        acceleration so a leapfrog loop can reuse it.
        """
        sysm = self.system
        if sysm.n_z == 0:
            raise ValueError("explicit Verlet needs the displacement-trace (ms_ldgh) system")
        if not np.array_equal(np.flatnonzero(sysm.q_mask), np.arange(sysm.n_x // 2)):
            raise ValueError("explicit Verlet needs x = [u, p]")
        nv = sysm.n_x // 2
        rep = StepReport()
        # step 1: constraint solve at u0 and half kick
        if accel0 is None:
            z0, r0 = sysm.solve_z(x0)
            rep.linsolve_residual = r0
            a0 = self._accel(x0, z0)
        else:
            a0 = accel0
        u0, p0 = x0[:nv], x0[nv:]
        p_half = p0 + 0.5 * dt * a0
        # step 2: drift
        u1 = u0 + dt * p_half
        # step 3: constraint solve at u1 and half kick
        x1 = np.concatenate([u1, p_half])
        z1, r1 = sysm.solve_z(x1)
        a1 = self._accel(x1, z1)
        x1[nv:] = p_half + 0.5 * dt * a1
        rep.linsolve_residual = max(rep.linsolve_residual, r1)
        rep.linear_solves = 2 if accel0 is None else 1
        self.counters["linear_solves"] += rep.linear_solves
        rep.accel_end = a1
        if keep_stages:
            rep.stages = [
                (np.concatenate([u0, p_half]), z0.copy()),
                (np.concatenate([u1, p_half]), z1.copy()),
            ]
            rep.weights = VERLET.b.copy()
        return x1, z1, rep


def run_verlet(integ: Integrator, x0, z0, t0, dt, n_steps, leapfrog=True, callback=None):
    """Advance ``n_steps`` Verlet steps.

    With ``leapfrog`` the closing half kick of one step and the opening half
    kick of the next are merged into a single kick on the staggered momentum;
    integer-time momenta are formed only for output.
    """
    sysm = integ.system
    nv = sysm.n_x // 2
    x, z = x0.copy(), z0
    if not leapfrog:
        for k in range(n_steps):
            x, z, rep = integ.verlet(x, z, t0 + k * dt, dt)
            if callback is not None:
                callback(k + 1, t0 + (k + 1) * dt, x, z, rep)
        return x, z
    z, _ = sysm.solve_z(x)
    a = integ._accel(x, z)
    p_half = x[nv:] + 0.5 * dt * a
    u = x[:nv].copy()
    for k in range(n_steps):
        u = u + dt * p_half
        xt = np.concatenate([u, p_half])
        z, res = sysm.solve_z(xt)
        a = integ._accel(xt, z)
        rep = StepReport(linsolve_residual=res, linear_solves=1)
        integ.counters["linear_solves"] += 1
        x = np.concatenate([u, p_half + 0.5 * dt * a])
        if callback is not None:
            callback(k + 1, t0 + (k + 1) * dt, x, z, rep)
        p_half = p_half + dt * a
    return x, z


# ------------------------------------------------------------------ wrappers
def _integrator(system, newton=None) -> Integrator:
    integ = getattr(system, "_integrator", None)
    if integ is None or (newton is not None and integ.newton != newton):
        integ = Integrator(system, newton)
        system._integrator = integ
    return integ


def _wrap(system, fn, state: FieldState, traces: TraceState | None, t, dt, **kw):
    x0, z0 = system.pack(state, traces)
    x1, z1, rep = fn(x0, z0, t, dt, **kw)
    s1, tr1 = system.unpack(x1, z1, t + dt)
    return s1, tr1, rep


def step_rk_generic(tableau, system, state, traces, t, dt, newton=None, keep_stages=False):
    if dt == 0:
        raise ValueError("time step must be nonzero")
    integ = _integrator(system, newton)
    return _wrap(system, lambda x, z, t_, d, **k: integ.step(tableau, x, z, t_, d, **k), state, traces, t, dt, keep_stages=keep_stages)


def step_midpoint(system, state, traces, t, dt, newton=None, keep_stages=False):
    return step_rk_generic(MIDPOINT, system, state, traces, t, dt, newton, keep_stages)


def step_yoshida6(system, state, traces, t, dt, newton=None):
    integ = _integrator(system, newton)
    return _wrap(system, integ.yoshida6, state, traces, t, dt)


def step_verlet(system, state, traces, t, dt, keep_stages=False):
    integ = _integrator(system)
    return _wrap(system, integ.verlet, state, traces, t, dt, keep_stages=keep_stages)


__all__ += ["run_verlet", "LinearSolveError"]

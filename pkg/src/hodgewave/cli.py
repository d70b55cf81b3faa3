"""Command-line driver.

    hodgewave run --config run.ini [--out-dir DIR]
    hodgewave check-tableaux [--out-dir DIR]
    hodgewave converge --config run.ini --levels N [--out-dir DIR]
    hodgewave mscl-check --config run.ini [--out-dir DIR]

Exit status: 0 success, 1 invalid configuration or arguments, 2 solver failure.

Configuration files have four sections, ``[mesh]``, ``[method]``, ``[time]``
and ``[output]``, holding ``key = value`` lines (see ``SCHEMA``).  Keys that
are not given take the defaults of the chosen ``problem``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import functools
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .assembly import MultisymplecticSystem, make_system
from .calculus import Penalties
from .diagnostics import (
    EXACT,
    discrete_hamiltonian,
    energy_identity_residual,
    global_hamiltonian,
    l2_error,
    mixed_witness_bracket,
    mscl_residual,
    sample_field,
)
from .fespace import MAX_DEGREE, FESpace, l2_project
from .linalg import LinearSolveError
from .mesh import MeshParseError, MeshTopologyError, build_periodic_rect_mesh, load_mesh
from .nonlinearity import get_nonlinearity
from .timeloop import (
    TABLEAUX,
    VERLET_NONSYMPLECTIC,
    YOSHIDA6_WEIGHTS,
    Integrator,
    NewtonConfig,
    NewtonError,
    StepReport,
    check_symplectic_prk,
    check_symplectic_rk,
    composition_conditions,
    composition_order_harmonic,
    get_tableau,
)

log = logging.getLogger("hodgewave")

TIMESERIES_COLUMNS = [
    "t",
    "H_global",
    "H_discrete",
    "l2err_u",
    "l2err_p",
    "l2err_sigma",
    "l2err_rho",
    "mscl_max_element_residual",
    "energy_identity_residual",
    "newton_iters_max",
    "linsolve_residual_max",
]

PROBLEMS = ("linear_plane_wave", "cubic_klein_gordon", "custom")
METHODS = ("ms_ldgh", "mixed_ldgh")
MSCL_TOL = 1e-11


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field, msg):
        super().__init__(f"{field}: {msg}")
        self.field = field


class SolverFailure(RuntimeError):
    pass


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


SCHEMA = {
    "mesh": {"nx": int, "ny": int, "lx": float, "ly": float, "periodic_x": _bool, "periodic_y": _bool, "file": str},
    "method": {
        "problem": str,
        "method": str,
        "degree": int,
        "alpha0": float,
        "alpha1": float,
        "nonlinearity": str,
        "solver": str,
        "lin_tol": float,
        "newton_tol": float,
        "newton_maxit": int,
        "seed": int,
    },
    "time": {"integrator": str, "dt": float, "t_final": float},
    "output": {
        "every": int,
        "errors": _bool,
        "mscl": _bool,
        "energy_identity": _bool,
        "fields": _bool,
        "hamiltonian": str,
        "cross_section_points": int,
        "cross_section_y": float,
        "name": str,
    },
}


@dataclass(frozen=True)
class RunConfig:
    problem: str = "linear_plane_wave"
    method: str = "ms_ldgh"
    integrator: str = "yoshida6"
    degree: int = 1
    nx: int = 40
    ny: int = 4
    lx: float = 1.0
    ly: float = 0.1
    periodic_x: bool = True
    periodic_y: bool = True
    file: str = ""
    alpha0: float = -0.05
    alpha1: float = 0.05
    nonlinearity: str = ""
    solver: str = "direct"
    lin_tol: float = 1e-13
    newton_tol: float = 1e-12
    newton_maxit: int = 25
    seed: int = 0
    dt: float = 0.025
    t_final: float = 5.0
    every: int = 1
    errors: bool = True
    mscl: bool = False
    energy_identity: bool = False
    fields: bool = True
    hamiltonian: str = "state"
    cross_section_points: int = 201
    cross_section_y: float = float("nan")
    name: str = "run"

    # -- derived ----------------------------------------------------------
    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def nonlin_name(self) -> str:
        if self.problem == "linear_plane_wave":
            return "zero"
        if self.problem == "cubic_klein_gordon":
            return "cubic"
        return self.nonlinearity or "zero"

    @property
    def exact(self):
        make = EXACT.get(self.problem)
        return _exact_instance(self.problem) if make is not None else None

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError("problem", f"must be one of {', '.join(PROBLEMS)}")
        if self.method not in METHODS:
            raise ConfigError("method", f"must be one of {', '.join(METHODS)}")
        ig = self.integrator
        if ig.startswith("rk:"):
            if ig[3:] not in TABLEAUX:
                raise ConfigError("integrator", f"unknown tableau {ig[3:]!r}; choose from {sorted(TABLEAUX)}")
        elif ig not in ("midpoint", "yoshida6", "verlet"):
            raise ConfigError("integrator", "must be midpoint, yoshida6, verlet or rk:<tableau>")
        if ig == "verlet" and self.method != "ms_ldgh":
            raise ConfigError("integrator", "verlet requires method = ms_ldgh")
        if not 0 <= self.degree <= MAX_DEGREE:
            raise ConfigError("degree", f"must lie in [0, {MAX_DEGREE}]")
        if not self.alpha0 < 0:
            raise ConfigError("alpha0", "must be negative")
        if not self.alpha1 > 0:
            raise ConfigError("alpha1", "must be positive")
        if self.nonlinearity:
            try:
                get_nonlinearity(self.nonlinearity)
            except ValueError as exc:
                raise ConfigError("nonlinearity", str(exc)) from None
            if self.problem != "custom" and self.nonlinearity != self.nonlin_name:
                raise ConfigError("nonlinearity", f"problem {self.problem} fixes nonlinearity = {self.nonlin_name}")
        if self.solver not in ("direct", "iterative"):
            raise ConfigError("solver", "must be direct or iterative")
        for k in ("lin_tol", "newton_tol"):
            if not getattr(self, k) > 0:
                raise ConfigError(k, "must be positive")
        if self.newton_maxit < 1:
            raise ConfigError("newton_maxit", "must be at least 1")
        if self.file:
            if not os.path.isfile(self.file):
                raise ConfigError("file", f"mesh file {self.file!r} not found")
        else:
            for k in ("nx", "ny"):
                if getattr(self, k) < 1:
                    raise ConfigError(k, "must be a positive integer")
            for k in ("lx", "ly"):
                if not getattr(self, k) > 0:
                    raise ConfigError(k, "must be positive")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt", "must be positive")
        if not (self.t_final >= 0 and math.isfinite(self.t_final)):
            raise ConfigError("t_final", "must be nonnegative")
        if abs(self.n_steps * self.dt - self.t_final) > 1e-9 * max(1.0, self.t_final):
            raise ConfigError("t_final", "must be an integer multiple of dt")
        if self.every < 1:
            raise ConfigError("every", "must be at least 1")
        if self.errors and self.exact is None:
            raise ConfigError("errors", "no exact solution for a custom problem")
        if self.mscl:
            if self.method != "ms_ldgh":
                raise ConfigError("mscl", "the conservation law residual needs method = ms_ldgh")
            if self.nonlin_name == "cubic":
                raise ConfigError("mscl", "needs a linear problem (variations must solve the same equation)")
        if self.energy_identity and (self.method != "mixed_ldgh" or self.nonlin_name != "zero"):
            raise ConfigError("energy_identity", "needs method = mixed_ldgh and a zero nonlinearity")
        if self.hamiltonian not in ("state", "broken"):
            raise ConfigError("hamiltonian", "must be state or broken")
        if self.cross_section_points < 2:
            raise ConfigError("cross_section_points", "must be at least 2")
        return self


@functools.lru_cache(maxsize=None)
def _exact_instance(problem):
    return EXACT[problem]()


PRESETS = {
    "linear_plane_wave": {},
    "cubic_klein_gordon": dict(
        integrator="verlet", degree=3, nx=10, ny=10, lx=1.0, ly=1.0, alpha0=-1.0, alpha1=1.0, dt=0.001, t_final=2.0
    ),
    "custom": dict(errors=False),
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    values = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(sec, f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(key, f"unknown key in [{sec}]")
            try:
                values[key] = SCHEMA[sec][key](raw.strip())
            except ValueError:
                raise ConfigError(key, f"cannot parse {raw!r}") from None
    problem = values.get("problem", RunConfig.problem)
    base = dict(PRESETS.get(problem, {}))
    base.update(values)
    return RunConfig(**base).validate()


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    cfg = parse_config(text)
    if cfg.file and not os.path.isabs(cfg.file):
        # relative mesh paths are taken relative to the config file
        alt = os.path.join(os.path.dirname(os.path.abspath(path)), cfg.file)
        if os.path.isfile(alt):
            cfg = replace(cfg, file=alt)
    return cfg


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------
class _Stepper:
    """One trajectory advanced by the configured integrator.

    ``advance`` returns the sub-steps taken, ``(x0, x1, report, h)``, so
    composition methods expose each midpoint step to the conservation check.
    """

    def __init__(self, integ: Integrator, name: str):
        self.integ = integ
        self.name = name
        self.tableau = get_tableau(name[3:]) if name.startswith("rk:") else None
        self._accel = None

    def advance(self, x, z, t, dt, keep=False):
        I = self.integ
        if self.name == "yoshida6":
            subs = []
            for w in YOSHIDA6_WEIGHTS:
                x1, z1, rep = I.midpoint(x, z, t, w * dt, keep_stages=keep)
                subs.append((x, x1, rep, w * dt))
                x, z, t = x1, z1, t + w * dt
            return x, z, subs
        if self.name == "midpoint":
            x1, z1, rep = I.midpoint(x, z, t, dt, keep_stages=keep)
        elif self.name == "verlet":
            x1, z1, rep = I.verlet(x, z, t, dt, keep_stages=keep, accel0=self._accel)
            self._accel = rep.accel_end
        else:
            x1, z1, rep = I.step(self.tableau, x, z, t, dt, keep_stages=keep)
        return x1, z1, [(x, x1, rep, dt)]


class Simulation:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        if cfg.file:
            try:
                with open(cfg.file, encoding="utf-8") as fh:
                    self.mesh = load_mesh(fh.read())
            except (MeshParseError, MeshTopologyError) as exc:
                raise ConfigError("file", str(exc)) from None
        else:
            self.mesh = build_periodic_rect_mesh(cfg.nx, cfg.ny, cfg.lx, cfg.ly, cfg.periodic_x, cfg.periodic_y)
        self.space = FESpace(self.mesh, cfg.degree)
        self.pen = Penalties(cfg.alpha0, cfg.alpha1)
        self.nonlin = get_nonlinearity(cfg.nonlin_name)
        self.system = make_system(cfg.method, self.space, self.pen, self.nonlin, solver=cfg.solver)
        self.ops = self.system.ops
        self.integ = Integrator(self.system, NewtonConfig(cfg.newton_tol, cfg.newton_maxit), lin_tol=cfg.lin_tol)
        self.rng = np.random.default_rng(cfg.seed)
        u0, p0 = self._initial_data()
        st, tr = self.system.initial(u0, p0, 0.0)
        self.x, self.z = self.system.pack(st, tr)
        self.t = 0.0
        self.k = 0
        self.stepper = _Stepper(self.integ, cfg.integrator)

    def _initial_data(self):
        ex = self.cfg.exact
        if ex is None:
            n = self.ops.nv
            return 0.1 * self.rng.standard_normal(n), 0.1 * self.rng.standard_normal(n)
        u0 = l2_project(lambda x, y: ex.u(0.0, x, y), self.space, 1)
        p0 = l2_project(lambda x, y: ex.p(0.0, x, y), self.space, 1)
        return u0, p0

    @property
    def is_ms(self):
        return isinstance(self.system, MultisymplecticSystem)

    def state(self):
        return self.system.unpack(self.x, self.z, self.t)

    def step(self, dt, keep=False):
        x0 = self.x
        self.x, self.z, subs = self.stepper.advance(self.x, self.z, self.t, dt, keep)
        self.k += 1
        self.t = self.k * dt
        if not np.all(np.isfinite(self.x)):
            raise SolverFailure(f"non-finite state at t = {self.t:.6g}")
        return x0, subs

    def diagnostics(self, errors=True, energy=False) -> dict:
        st, tr = self.state()
        row = {"t": self.t, "H_global": global_hamiltonian(self.ops, st, self.nonlin, self.cfg.hamiltonian)}
        if self.is_ms:
            row["H_discrete"] = discrete_hamiltonian(self.ops, st, tr, self.nonlin)
        if errors and self.cfg.exact is not None:
            e = l2_error(self.space, st, self.cfg.exact, self.t)
            row.update({f"l2err_{k}": v for k, v in e.items()})
        if energy:
            row["energy_identity_residual"] = energy_identity_residual(self.system, st)
        return row

    def variations(self):
        """Two seeded random trajectories of the same linear system."""
        out = []
        for _ in range(2):
            n = self.ops.nv
            st, tr = self.system.initial(self.rng.standard_normal(n), self.rng.standard_normal(n))
            x, z = self.system.pack(st, tr)
            out.append([x, z, _Stepper(self.integ, self.cfg.integrator)])
        return out


def _mscl_step(sim: Simulation, pair, t, dt):
    """Advance both variations one step; per-element residuals of every sub-step."""
    (xa, za, sa), (xb, zb, sb) = pair
    xa1, za1, subs_a = sa.advance(xa, za, t, dt, keep=True)
    xb1, zb1, subs_b = sb.advance(xb, zb, t, dt, keep=True)
    pair[0][:2] = xa1, za1
    pair[1][:2] = xb1, zb1
    res = []
    for (a0, a1, ra, h), (b0, b1, rb, _) in zip(subs_a, subs_b):
        res.append(mscl_residual(sim.system, (a0, a1, ra), (b0, b1, rb), h))
    return res


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def write_vtk(path, sim: Simulation, title="hodgewave"):
    """Legacy ASCII VTK; every triangle carries its own three vertices."""
    space = sim.space
    st, _ = sim.state()
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    pts = space.physical_points(corners).reshape(-1, 2)
    ne = sim.mesh.n_elements
    u = space.eval_at(st.u, 1, corners).reshape(-1, 2)
    p = space.eval_at(st.p, 1, corners).reshape(-1, 2)
    sig = space.eval_at(st.sigma, 0, corners).ravel()
    rho = space.eval_at(st.rho, 2, corners).ravel()
    f = _fmt
    out = ["# vtk DataFile Version 3.0", f"{title} t={f(sim.t)}", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {3 * ne} double")
    out += [f"{f(x)} {f(y)} 0" for x, y in pts]
    out.append(f"CELLS {ne} {4 * ne}")
    out += [f"3 {3 * e} {3 * e + 1} {3 * e + 2}" for e in range(ne)]
    out.append(f"CELL_TYPES {ne}")
    out += ["5"] * ne
    out.append(f"POINT_DATA {3 * ne}")
    for name, vals in (("sigma", sig), ("rho", rho)):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [f(v) for v in vals]
    for name, vals in (("u", u), ("p", p)):
        out.append(f"VECTORS {name} double")
        out += [f"{f(a)} {f(b)} 0" for a, b in vals]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def write_cross_section(path, sim: Simulation):
    """``u_y`` along a horizontal line, numeric and (if known) exact."""
    cfg = sim.cfg
    V = sim.mesh.vertices
    x0, x1 = V[:, 0].min(), V[:, 0].max()
    y0, y1 = V[:, 1].min(), V[:, 1].max()
    y = cfg.cross_section_y if math.isfinite(cfg.cross_section_y) else 0.5 * (y0 + y1)
    xs = np.linspace(x0, x1, cfg.cross_section_points)
    pts = np.column_stack([xs, np.full_like(xs, y)])
    st, _ = sim.state()
    try:
        num = sample_field(sim.space, st.u, 1, pts)[:, 1]
    except ValueError as exc:
        raise ConfigError("cross_section_y", str(exc)) from None
    ex = cfg.exact
    exact = ex.u(sim.t, pts[:, 0], pts[:, 1])[..., 1] if ex is not None else [None] * len(xs)
    rows = [{"x": a, "u_y_numeric": b, "u_y_exact": c} for a, b, c in zip(xs, num, exact)]
    write_csv(path, ["x", "u_y_numeric", "u_y_exact"], rows)


def run(cfg: RunConfig, out_dir=".") -> dict:
    """Execute a run; returns a summary and writes the output files."""
    os.makedirs(out_dir, exist_ok=True)
    t_start = time.perf_counter()
    sim = Simulation(cfg)
    pair = sim.variations() if cfg.mscl else None
    rows = [sim.diagnostics(cfg.errors, cfg.energy_identity)]
    acc = StepReport()
    mscl_max = None
    ts_path = os.path.join(out_dir, f"{cfg.name}_timeseries.csv")
    failure = None
    try:
        for k in range(1, cfg.n_steps + 1):
            t_prev = sim.t
            _, subs = sim.step(cfg.dt)
            for *_, rep, _h in subs:
                acc.merge(rep)
            if pair is not None:
                res = _mscl_step(sim, pair, t_prev, cfg.dt)
                m = max(float(np.abs(r).max()) for r in res)
                mscl_max = m if mscl_max is None else max(mscl_max, m)
            if k % cfg.every == 0 or k == cfg.n_steps:
                row = sim.diagnostics(cfg.errors, cfg.energy_identity)
                row["newton_iters_max"] = acc.newton_iters if not sim.system.is_linear else None
                row["linsolve_residual_max"] = acc.linsolve_residual
                row["mscl_max_element_residual"] = mscl_max
                rows.append(row)
                acc, mscl_max = StepReport(), None
    except (LinearSolveError, NewtonError, SolverFailure, FloatingPointError) as exc:
        failure = exc
    write_csv(ts_path, TIMESERIES_COLUMNS, rows)
    if failure is not None:
        raise SolverFailure(str(failure)) from failure
    if cfg.fields:
        write_vtk(os.path.join(out_dir, f"{cfg.name}_fields.vtk"), sim)
        write_cross_section(os.path.join(out_dir, f"{cfg.name}_cross_section.csv"), sim)
    H = np.array([r["H_global"] for r in rows])
    summary = {
        "steps": cfg.n_steps,
        "rows": len(rows),
        "H_global_range": float(np.ptp(H)),
        "seconds": time.perf_counter() - t_start,
        "timeseries": ts_path,
    }
    if sim.is_ms:
        summary["H_discrete_range"] = float(np.ptp([r["H_discrete"] for r in rows]))
    return summary


# ---------------------------------------------------------------------------
# studies and checks
# ---------------------------------------------------------------------------
def check_tableaux():
    """Rows ``(name, condition, passed, violation, expected)``."""
    out = []
    for t in TABLEAUX.values():
        if t.is_partitioned:
            ok, v = check_symplectic_prk(t)
            cond = "symplectic PRK"
        else:
            ok, v = check_symplectic_rk(t)
            cond = "symplectic RK"
        expected = t.name != "explicit_euler" and t is not VERLET_NONSYMPLECTIC
        out.append((t.name, cond, ok, v, expected))
    s1, s3, s5 = composition_conditions(YOSHIDA6_WEIGHTS)
    for cond, v in (("sum w = 1", s1 - 1.0), ("sum w^3 = 0", s3), ("sum w^5 = 0", s5)):
        out.append(("yoshida6", cond, abs(v) <= 1e-12, abs(v), True))
    order = composition_order_harmonic(YOSHIDA6_WEIGHTS)
    out.append(("yoshida6", "empirical order 6 +- 0.3", abs(order - 6) <= 0.3, order, True))
    return out


def convergence_study(cfg: RunConfig, levels: int):
    """Errors at ``t_final`` on ``levels`` uniformly refined meshes (h and dt halved)."""
    if levels < 1:
        raise ConfigError("levels", "must be at least 1")
    if cfg.exact is None:
        raise ConfigError("problem", "a convergence study needs an exact solution")
    if cfg.file:
        raise ConfigError("file", "refinement needs a structured mesh (nx, ny)")
    rows = []
    for k in range(levels):
        c = replace(cfg, nx=cfg.nx * 2**k, ny=cfg.ny * 2**k, dt=cfg.dt / 2**k, mscl=False, energy_identity=False)
        sim = Simulation(c)
        try:
            for _ in range(c.n_steps):
                sim.step(c.dt)
        except (LinearSolveError, NewtonError, FloatingPointError) as exc:
            raise SolverFailure(str(exc)) from exc
        st, _ = sim.state()
        e = l2_error(sim.space, st, c.exact, sim.t)
        row = {"level": k, "nx": c.nx, "ny": c.ny, "h": sim.mesh.h, "dt": c.dt}
        row.update({f"l2err_{n}": v for n, v in e.items()})
        if rows:
            prev = rows[-1]
            for n in e:
                a, b = prev[f"l2err_{n}"], row[f"l2err_{n}"]
                row[f"order_{n}"] = math.log(a / b) / math.log(prev["h"] / row["h"]) if a > 0 and b > 0 else None
        rows.append(row)
        log.info("level %d: h=%.4g  u error %.4e", k, row["h"], e["u"])
    return rows


CONVERGE_COLUMNS = ["level", "nx", "ny", "h", "dt"] + [f"l2err_{n}" for n in ("u", "p", "sigma", "rho")]
CONVERGE_COLUMNS += [f"order_{n}" for n in ("u", "p", "sigma", "rho")]


def mscl_check(cfg: RunConfig):
    """Conservation-law residuals of two random variations.

    For the displacement-trace method: per-step maxima of the per-element
    and all-element residuals.  For the velocity-trace method: the
    per-element flux-difference bracket at t = 0 for discontinuous data.
    """
    cfg = replace(cfg, mscl=False, energy_identity=False, errors=False)
    if cfg.nonlin_name == "cubic":
        raise ConfigError("nonlinearity", "the check needs a linear problem")
    sim = Simulation(cfg)
    if not sim.is_ms:
        r1 = sim.rng.standard_normal(sim.ops.nv)
        b = mixed_witness_bracket(sim.system, r1)
        return [{"element": e, "bracket": v} for e, v in enumerate(b)]
    pair = sim.variations()
    rows = []
    t = 0.0
    try:
        for k in range(1, cfg.n_steps + 1):
            res = _mscl_step(sim, pair, t, cfg.dt)
            t = k * cfg.dt
            rows.append(
                {
                    "step": k,
                    "t": t,
                    "max_element_residual": max(float(np.abs(r).max()) for r in res),
                    "global_residual": max(abs(float(r.sum())) for r in res),
                }
            )
    except (LinearSolveError, NewtonError, FloatingPointError) as exc:
        raise SolverFailure(str(exc)) from exc
    return rows


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def build_parser():
    p = _Parser(prog="hodgewave", description="LDG-H solvers for the 2D Hodge wave equation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run a simulation")
    r.add_argument("--config", required=True)
    sub.add_parser("check-tableaux", help="certify the shipped tableaux")
    c = sub.add_parser("converge", help="convergence study under uniform refinement")
    c.add_argument("--config", required=True)
    c.add_argument("--levels", type=int, required=True)
    m = sub.add_parser("mscl-check", help="local conservation-law residuals for random variations")
    m.add_argument("--config", required=True)
    for s in (r, c, m, sub.choices["check-tableaux"]):
        s.add_argument("--out-dir", default=".")
    return p


def _main(args) -> int:
    out = args.out_dir
    if args.command == "check-tableaux":
        rows = check_tableaux()
        for name, cond, ok, v, expected in rows:
            tag = "pass" if ok else "FAIL"
            note = "" if ok == expected else "  (unexpected)"
            print(f"{name:18s} {cond:26s} {tag}  value={v:.3e}{note}")
        os.makedirs(out, exist_ok=True)
        recs = [dict(tableau=a, condition=b, passed=int(c), value=d, expected_pass=int(e)) for a, b, c, d, e in rows]
        write_csv(os.path.join(out, "tableaux.csv"), ["tableau", "condition", "passed", "value", "expected_pass"], recs)
        return 0
    cfg = load_config(args.config)
    os.makedirs(out, exist_ok=True)
    if args.command == "run":
        s = run(cfg, out)
        msg = f"{s['steps']} steps in {s['seconds']:.1f}s; H range {s['H_global_range']:.3e}"
        if "H_discrete_range" in s:
            msg += f"; H_h range {s['H_discrete_range']:.3e}"
        print(msg)
        print(f"wrote {s['timeseries']}")
        return 0
    if args.command == "converge":
        rows = convergence_study(cfg, args.levels)
        write_csv(os.path.join(out, f"{cfg.name}_converge.csv"), CONVERGE_COLUMNS, rows)
        for r in rows:
            order = r.get("order_u")
            tail = f"  order {order:.2f}" if order is not None else ""
            print(f"h={r['h']:.4e}  |u-u_h|={r['l2err_u']:.4e}{tail}")
        return 0
    rows = mscl_check(cfg)
    path = os.path.join(out, f"{cfg.name}_mscl.csv")
    if rows and "bracket" in rows[0]:
        write_csv(path, ["element", "bracket"], rows)
        big = max(abs(r["bracket"]) for r in rows)
        print(f"max |flux-difference bracket| = {big:.3e} ({'not ' if big > MSCL_TOL else ''}multisymplectic)")
        return 0
    write_csv(path, ["step", "t", "max_element_residual", "global_residual"], rows)
    if rows:
        e = max(r["max_element_residual"] for r in rows)
        g = max(r["global_residual"] for r in rows)
        status = "pass" if max(e, g) <= MSCL_TOL else "FAIL"
        print(f"max element residual {e:.3e}, max global residual {g:.3e}: {status}")
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _main(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Reference computations that do not go through the package's own
quadrature or trace tables."""

import numpy as np
import sympy as sp

from hodgewave.calculus import eval_diff
from hodgewave.fespace import FESpace
from hodgewave.mesh import build_mesh, ref_map


def duffy_rule(n):
    """Collapsed Gauss rule on the reference triangle, exact to degree 2n-2."""
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    a, b = np.meshgrid(g, g, indexing="ij")
    wa, wb = np.meshgrid(w, w, indexing="ij")
    x = a.ravel()
    y = (b * (1.0 - a)).ravel()
    return np.column_stack([x, y]), (wa * wb * (1.0 - a)).ravel()


def random_triangle(rng):
    """A counterclockwise triangle with angles bounded away from zero."""
    while True:
        v = rng.uniform(-1.0, 1.0, size=(3, 2))
        e1, e2 = v[1] - v[0], v[2] - v[0]
        det = e1[0] * e2[1] - e1[1] * e2[0]
        if abs(det) > 0.3:
            return v if det > 0 else v[[0, 2, 1]]


def single_element_space(vertices, r):
    return FESpace(build_mesh(vertices, [[0, 1, 2]]), r)


def ibp_errors(space, tau, v, eta, nquad=None):
    """Absolute errors of the two per-element integration-by-parts identities
    on element 0, plus the magnitude of the terms involved."""
    r = space.degree
    mesh = space.mesh
    rm = ref_map(mesh, 0)
    n = nquad or (r + 2)
    xh, wh = duffy_rule(n)
    det = rm.det
    T = eval_diff(space, tau, 0, 0, xh)
    V = eval_diff(space, v, 1, 0, xh)
    E = eval_diff(space, eta, 2, 0, xh)
    curl_v = det * np.sum(wh * np.sum(T["curl"] * V["value"], axis=1))
    tau_rot = det * np.sum(wh * T["value"] * V["rot"])
    div_eta = det * np.sum(wh * V["div"] * E["value"])
    v_grad = det * np.sum(wh * np.sum(V["value"] * E["grad"], axis=1))

    g, gw = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (g + 1.0)
    b1 = b2 = 0.0
    verts = mesh.vertices[mesh.triangles[0]]
    for k in range(3):
        A, B = verts[k], verts[(k + 1) % 3]
        d = B - A
        L = np.hypot(*d)
        nrm = np.array([d[1], -d[0]]) / L  # outward for counterclockwise order
        X = A[None, :] + t[:, None] * d[None, :]
        xk = rm.to_reference(X)
        tv = eval_diff(space, tau, 0, 0, xk)["value"]
        vv = eval_diff(space, v, 1, 0, xk)["value"]
        ev = eval_diff(space, eta, 2, 0, xk)["value"]
        vxn = vv[:, 0] * nrm[1] - vv[:, 1] * nrm[0]
        b1 += 0.5 * L * np.sum(gw * tv * vxn)
        b2 += 0.5 * L * np.sum(gw * (vv @ nrm) * ev)
    err1 = abs(b1 - (curl_v - tau_rot))
    err2 = abs(b2 - (div_eta + v_grad))
    scale = max(1.0, abs(b1), abs(curl_v), abs(tau_rot), abs(b2), abs(div_eta), abs(v_grad))
    return err1, err2, scale


# ---------------------------------------------------------------------------
# symbolic exact solutions
# ---------------------------------------------------------------------------
t_, x_, y_ = sp.symbols("t x y", real=True)


def symbolic_fields(ux, uy):
    """p, sigma, rho and the residual operator pieces for a symbolic u."""
    p = (sp.diff(ux, t_), sp.diff(uy, t_))
    sigma = -(sp.diff(uy, x_) - sp.diff(ux, y_))
    rho = -(sp.diff(ux, x_) + sp.diff(uy, y_))
    # -p_t + curl sigma - grad rho, with curl s = (s_y, -s_x)
    lhs = (
        -sp.diff(p[0], t_) + sp.diff(sigma, y_) - sp.diff(rho, x_),
        -sp.diff(p[1], t_) - sp.diff(sigma, x_) - sp.diff(rho, y_),
    )
    return p, sigma, rho, lhs


def plane_wave_symbolic(k=4 * sp.pi):
    ux = sp.Integer(0)
    uy = sp.sin(k * (x_ - t_))
    p, sigma, rho, lhs = symbolic_fields(ux, uy)
    return (ux, uy), p, sigma, rho, lhs, (sp.Integer(0), sp.Integer(0))


def klein_gordon_symbolic(theta=None):
    th = sp.Symbol("theta", positive=True) if theta is None else theta
    ph = 2 * sp.pi * (x_ + y_) - th * t_
    ux = sp.cos(ph) / 2
    uy = sp.sin(ph) / 2
    p, sigma, rho, lhs = symbolic_fields(ux, uy)
    m = ux**2 + uy**2
    f = ((1 - m) * ux, (1 - m) * uy)
    return (ux, uy), p, sigma, rho, lhs, f, th


def lambdify(expr):
    fn = sp.lambdify((t_, x_, y_), expr, "numpy")
    return lambda t, x, y: np.broadcast_to(fn(t, x, y), np.broadcast(t, x, y).shape).astype(float)

"""Triangulations of rectangles with optional periodic gluing.

Facets carry a plus side (lower element index) and an optional minus side.
Periodic identification is done purely at the facet level: the two boundary
edges of a periodic pair become one facet record whose sides live on
opposite ends of the domain.  Fields are element-local (broken), so vertices
are never glued.

Local edge ``i`` of triangle ``(v0, v1, v2)`` runs from ``v_i`` to
``v_{i+1 mod 3}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mesh",
    "RefMap",
    "MeshParseError",
    "MeshTopologyError",
    "build_mesh",
    "build_periodic_rect_mesh",
    "load_mesh",
    "save_mesh",
    "facet_geometry",
    "ref_map",
]


class MeshParseError(ValueError):
    """Malformed ASCII mesh document."""

    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class MeshTopologyError(ValueError):
    """Inverted triangles, non-manifold edges or inconsistent periodic pairs."""


@dataclass(frozen=True)
class RefMap:
    """Affine map ``x = origin + jac @ xhat`` from the reference triangle."""

    element: int
    origin: np.ndarray
    jac: np.ndarray
    det: float
    inv_t: np.ndarray

    def to_physical(self, xhat):
        xhat = np.atleast_2d(xhat)
        return self.origin + xhat @ self.jac.T

    def to_reference(self, x):
        x = np.atleast_2d(x)
        return (x - self.origin) @ self.inv_t


@dataclass(eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    # facet arrays, one row per facet record
    facet_vertices: np.ndarray  # canonical (sorted) endpoints of the plus-side edge
    plus_side: np.ndarray  # (NF, 2) element, local edge
    minus_side: np.ndarray  # (NF, 2), -1 where absent
    unit_normal: np.ndarray  # out of the plus side
    length: np.ndarray
    # per facet and side: parameterisation of the physical edge copy, t in [0, 1]
    side_start: np.ndarray  # (NF, 2, 2)
    side_end: np.ndarray  # (NF, 2, 2)
    periodic_pairs: list = field(default_factory=list)  # canonical edge index pairs
    # element geometry
    origin: np.ndarray = None
    jac: np.ndarray = None
    det: np.ndarray = None
    inv_t: np.ndarray = None
    elem_facets: np.ndarray = None  # (NT, 3) facet of each local edge
    elem_sides: np.ndarray = None  # (NT, 3) 0 = plus, 1 = minus

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_facets(self) -> int:
        return len(self.length)

    @property
    def h(self) -> float:
        return float(self.length.max())

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * self.det

    @property
    def two_sided(self) -> np.ndarray:
        return self.minus_side[:, 0] >= 0

    @property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(~self.two_sided)

    def side_normals(self) -> np.ndarray:
        """Outward normal of each side, shape (NF, 2, 2); minus = -plus."""
        n = np.empty((self.n_facets, 2, 2))
        n[:, 0] = self.unit_normal
        n[:, 1] = -self.unit_normal
        return n

    def canonical_edges(self) -> np.ndarray:
        """Sorted vertex pairs of all geometric edges, in canonical order."""
        return _canonical_edges(self.triangles)


def _canonical_edges(triangles):
    loc = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    keys = np.sort(loc.reshape(-1, 2), axis=1)
    return np.unique(keys, axis=0)


def build_mesh(vertices, triangles, periodic_pairs=()) -> Mesh:
    """Assemble facet topology for a triangulation.

    ``periodic_pairs`` index the canonical edge enumeration (lexicographically
    sorted endpoint pairs); each pair must consist of two boundary edges that
    are translates of one another.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshTopologyError("vertices must have shape (NV, 2)")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshTopologyError("triangles must have shape (NT, 3)")
    nv = len(vertices)
    if len(triangles) == 0:
        raise MeshTopologyError("mesh has no triangles")
    if triangles.min() < 0 or triangles.max() >= nv:
        raise MeshTopologyError("triangle references a missing vertex")

    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    jac = np.stack([p1 - p0, p2 - p0], axis=2)  # columns are edge vectors
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    bad = np.flatnonzero(det <= 0)
    if bad.size:
        raise MeshTopologyError(
            f"triangle {bad[0]} has nonpositive signed area (clockwise or degenerate)"
        )
    inv = np.linalg.inv(jac)
    inv_t = np.transpose(inv, (0, 2, 1))

    # incidence of geometric edges
    incid: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for e, tri in enumerate(triangles):
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            key = (a, b) if a < b else (b, a)
            incid.setdefault(key, []).append((e, i))
    keys = sorted(incid)
    for k in keys:
        if len(incid[k]) > 2:
            raise MeshTopologyError(f"non-manifold edge {k}")
        if len(incid[k]) == 2:
            (e0, i0), (e1, i1) = incid[k]
            if triangles[e0, i0] == triangles[e1, i1]:
                raise MeshTopologyError(f"inconsistent orientation across edge {k}")

    partner: dict[int, int] = {}
    for a, b in periodic_pairs:
        a, b = int(a), int(b)
        if not (0 <= a < len(keys) and 0 <= b < len(keys)) or a == b:
            raise MeshTopologyError(f"invalid periodic pair ({a}, {b})")
        if a in partner or b in partner:
            raise MeshTopologyError(f"edge paired twice in ({a}, {b})")
        if len(incid[keys[a]]) != 1 or len(incid[keys[b]]) != 1:
            raise MeshTopologyError(f"periodic pair ({a}, {b}) is not on the boundary")
        partner[a] = b
        partner[b] = a

    def side_geom(e, i):
        a = triangles[e, i]
        b = triangles[e, (i + 1) % 3]
        return vertices[a], vertices[b], int(a), int(b)

    recs = []
    for c, k in enumerate(keys):
        if c in partner and partner[c] < c:
            continue
        sides = list(incid[k])
        if c in partner:
            sides += incid[keys[partner[c]]]
        sides.sort()
        recs.append((k, sides))

    nf = len(recs)
    facet_vertices = np.empty((nf, 2), dtype=np.int64)
    plus = np.empty((nf, 2), dtype=np.int64)
    minus = np.full((nf, 2), -1, dtype=np.int64)
    normal = np.empty((nf, 2))
    length = np.empty(nf)
    start = np.full((nf, 2, 2), np.nan)
    end = np.full((nf, 2, 2), np.nan)
    elem_facets = np.full((len(triangles), 3), -1, dtype=np.int64)
    elem_sides = np.full((len(triangles), 3), -1, dtype=np.int64)

    for f, (k, sides) in enumerate(recs):
        (e, i) = sides[0]
        A, B, ia, ib = side_geom(e, i)
        facet_vertices[f] = sorted((ia, ib))
        plus[f] = (e, i)
        d = B - A
        L = float(np.hypot(*d))
        length[f] = L
        normal[f] = (d[1] / L, -d[0] / L)
        lo = A if ia < ib else B
        hi = B if ia < ib else A
        start[f, 0], end[f, 0] = lo, hi
        elem_facets[e, i], elem_sides[e, i] = f, 0
        if len(sides) == 2:
            (e2, i2) = sides[1]
            A2, B2, _, _ = side_geom(e2, i2)
            d2 = B2 - A2
            L2 = float(np.hypot(*d2))
            n2 = np.array((d2[1] / L2, -d2[0] / L2))
            if abs(L2 - L) > 1e-12 * max(L, 1.0) or np.abs(n2 + normal[f]).max() > 1e-12:
                raise MeshTopologyError(f"facet {f}: sides are not opposite translates")
            shift = 0.5 * (A2 + B2) - 0.5 * (A + B)
            target = lo + shift
            if np.linalg.norm(A2 - target) <= np.linalg.norm(B2 - target):
                start[f, 1], end[f, 1] = A2, B2
            else:
                start[f, 1], end[f, 1] = B2, A2
            minus[f] = (e2, i2)
            elem_facets[e2, i2], elem_sides[e2, i2] = f, 1

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        facet_vertices=facet_vertices,
        plus_side=plus,
        minus_side=minus,
        unit_normal=normal,
        length=length,
        side_start=start,
        side_end=end,
        periodic_pairs=[tuple(sorted((int(a), int(b)))) for a, b in periodic_pairs],
        origin=p0.copy(),
        jac=jac,
        det=det,
        inv_t=inv_t,
        elem_facets=elem_facets,
        elem_sides=elem_sides,
    )


def build_periodic_rect_mesh(nx, ny, Lx, Ly, periodic_x=True, periodic_y=True) -> Mesh:
    """Structured mesh of ``[0, Lx] x [0, Ly]``, each cell split along its
    lower-left to upper-right diagonal."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive integers")
    if not (Lx > 0 and Ly > 0):
        raise ValueError("Lx and Ly must be positive")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def v(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            tris.append((v(i, j), v(i + 1, j), v(i + 1, j + 1)))
            tris.append((v(i, j), v(i + 1, j + 1), v(i, j + 1)))
    triangles = np.array(tris, dtype=np.int64)

    keys = _canonical_edges(triangles)
    index = {(int(a), int(b)): c for c, (a, b) in enumerate(keys)}

    def edge(a, b):
        return index[(a, b) if a < b else (b, a)]

    pairs = []
    if periodic_x:
        for j in range(ny):
            pairs.append((edge(v(0, j), v(0, j + 1)), edge(v(nx, j), v(nx, j + 1))))
    if periodic_y:
        for i in range(nx):
            pairs.append((edge(v(i, 0), v(i + 1, 0)), edge(v(i, ny), v(i + 1, ny))))
    return build_mesh(vertices, triangles, pairs)


def _strip(line):
    return line.split("#", 1)[0].strip()


def load_mesh(text: str) -> Mesh:
    """Parse the ASCII mesh format (see :func:`save_mesh`)."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = _strip(raw)
        if s:
            rows.append((lineno, s.split()))
    if not rows:
        raise MeshParseError(1, "empty document")

    def ints(lineno, toks, n):
        if len(toks) != n:
            raise MeshParseError(lineno, f"expected {n} integers, got {len(toks)} fields")
        try:
            return [int(t) for t in toks]
        except ValueError as exc:
            raise MeshParseError(lineno, str(exc)) from None

    lineno, toks = rows[0]
    nv, nt, npair = ints(lineno, toks, 3)
    if min(nv, nt, npair) < 0:
        raise MeshParseError(lineno, "negative count")
    need = 1 + nv + nt + npair
    if len(rows) < need:
        last = rows[-1][0]
        raise MeshParseError(last + 1, f"unexpected end of document ({len(rows)} of {need} records)")
    if len(rows) > need:
        raise MeshParseError(rows[need][0], "trailing data")
    verts = np.empty((nv, 2))
    for k in range(nv):
        lineno, toks = rows[1 + k]
        if len(toks) != 2:
            raise MeshParseError(lineno, "expected 'x y'")
        try:
            verts[k] = [float(t) for t in toks]
        except ValueError as exc:
            raise MeshParseError(lineno, str(exc)) from None
    tris = np.empty((nt, 3), dtype=np.int64)
    for k in range(nt):
        lineno, toks = rows[1 + nv + k]
        tris[k] = ints(lineno, toks, 3)
        if tris[k].min() < 0 or tris[k].max() >= nv:
            raise MeshParseError(lineno, "vertex index out of range")
    pairs = []
    for k in range(npair):
        lineno, toks = rows[1 + nv + nt + k]
        pairs.append(tuple(ints(lineno, toks, 2)))
    return build_mesh(verts, tris, pairs)


def save_mesh(mesh: Mesh) -> str:
    out = [f"{mesh.n_vertices} {mesh.n_elements} {len(mesh.periodic_pairs)}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    out += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    out += [f"{a} {b}" for a, b in mesh.periodic_pairs]
    return "\n".join(out) + "\n"


def facet_geometry(mesh: Mesh, facet: int) -> dict:
    if not 0 <= facet < mesh.n_facets:
        raise IndexError(f"facet {facet} out of range [0, {mesh.n_facets})")
    mid = 0.5 * (mesh.side_start[facet, 0] + mesh.side_end[facet, 0])
    return {
        "normal": mesh.unit_normal[facet].copy(),
        "length": float(mesh.length[facet]),
        "midpoint": mid,
    }


def ref_map(mesh: Mesh, element: int) -> RefMap:
    return RefMap(
        element=element,
        origin=mesh.origin[element],
        jac=mesh.jac[element],
        det=float(mesh.det[element]),
        inv_t=mesh.inv_t[element],
    )

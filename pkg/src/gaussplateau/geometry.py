"""Geometry of compact convex bodies in R^2 and R^3.

Vertex clouds are the canonical representation: every predicate reduces to
maximisations over vertices or to facet tests on the convex hull of the
cloud. Support samples and signed-distance grids are derived caches.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError, cKDTree

__all__ = [
    "ConvexBody",
    "DirectionSet",
    "GraphChart",
    "SdfGrid",
    "GeometryError",
    "sphere_directions",
    "convex_hull",
    "hausdorff_distance",
    "distance_and_project",
    "supporting_normals",
    "extract_graph_chart",
    "has_local_geodesic_property",
    "hemisphere_witness",
    "origin_in_hull",
]

EPS_UNIT = 1e-12          # unit-norm slack for directions
EPS_DUP = 1e-9            # angular duplicate tolerance (radians)
LGP_MARGIN = 1e-8         # strict-feasibility margin for the hemisphere LP


class GeometryError(ValueError):
    """Domain error raised by convex-kernel operations."""


# ---------------------------------------------------------------------------
# sphere discretisations
# ---------------------------------------------------------------------------

def _icosahedron():
    p = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v, axis=1)[:, None]
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return v, f


def icosphere(subdivisions):
    """Unit icosphere vertex/face arrays at the given subdivision level."""
    verts, faces = _icosahedron()
    verts = list(verts)
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                verts.append(m)
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        faces = np.array(new_faces)
    return np.array(verts), faces


def sphere_directions(dim, angular_res):
    """Uniform direction grid on the unit sphere of R^dim.

    2D: angles spaced by ``angular_res`` (radians).  3D: icosphere subdivided
    until the mean edge angle drops below ``angular_res``.
    """
    if angular_res <= 0:
        raise GeometryError("angular_res must be positive")
    if dim == 2:
        m = max(4, int(round(2.0 * np.pi / angular_res)))
        th = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)
        return np.column_stack([np.cos(th), np.sin(th)])
    if dim == 3:
        # base icosahedron edge ~1.107 rad, halved per subdivision
        level = 0
        edge = 1.107
        while edge > angular_res and level < 7:
            level += 1
            edge /= 2.0
        verts, _ = icosphere(level)
        return verts
    raise GeometryError(f"unsupported ambient dimension {dim}")


# ---------------------------------------------------------------------------
# direction sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectionSet:
    """Finite subset of the unit sphere with a semantic tag."""

    dim: int
    directions: np.ndarray          # (m, dim), unit rows
    kind: str = "generic"           # supporting_normals | link | dual | generic

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if d.size and d.shape[1] != self.dim:
            raise GeometryError("direction dimension mismatch")
        if d.size:
            norms = np.linalg.norm(d, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                d = d / norms[:, None]
            d = _dedupe_directions(d)
        object.__setattr__(self, "directions", d)

    def __len__(self):
        return 0 if self.directions.size == 0 else self.directions.shape[0]

    def contains_direction(self, u, tol_angle):
        if len(self) == 0:
            return False
        cosmax = float(np.max(self.directions @ np.asarray(u, dtype=float)))
        return cosmax >= np.cos(tol_angle)


def _dedupe_directions(d):
    if d.shape[0] <= 1:
        return d
    keep = []
    for i, u in enumerate(d):
        dup = False
        for j in keep:
            if np.dot(u, d[j]) > np.cos(EPS_DUP):
                dup = True
                break
        if not dup:
            keep.append(i)
    return d[keep]


def angular_hausdorff(a, b):
    """Symmetric angular Hausdorff gap (radians) between direction arrays."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return np.pi
    dots = np.clip(a @ b.T, -1.0, 1.0)
    ang = np.arccos(dots)
    return max(float(ang.min(axis=1).max()), float(ang.min(axis=0).max()))


# ---------------------------------------------------------------------------
# convex bodies
# ---------------------------------------------------------------------------

@dataclass
class SdfGrid:
    """Signed-distance samples on a regular grid (row-major)."""

    origin: np.ndarray
    spacing: float
    shape: tuple
    values: np.ndarray


class ConvexBody:
    """Compact convex set represented as the hull of a finite vertex cloud.

    The cloud itself is kept (dense boundary samples are useful downstream);
    hull facets, support data and sdf grids are lazy caches guarded by a
    lock so concurrent readers see consistent snapshots.
    """

    def __init__(self, vertices, dim=None):
        v = np.atleast_2d(np.asarray(vertices, dtype=float))
        if v.size == 0:
            raise GeometryError("vertex list must be nonempty")
        if dim is None:
            dim = v.shape[1]
        if v.shape[1] != dim or dim not in (2, 3):
            raise GeometryError("ambient dimension must be 2 or 3")
        self.dim = dim
        self.vertices = np.unique(np.round(v, 12), axis=0)
        self._lock = threading.RLock()
        self._hull = None
        self._rank_data = None
        self._support_cache = {}
        self._kdtree = None
        self.sdf = None

    # -- rank / degeneracy ---------------------------------------------------

    def _rank(self):
        with self._lock:
            if self._rank_data is None:
                c = self.vertices.mean(axis=0)
                a = self.vertices - c
                if self.vertices.shape[0] == 1:
                    rank, basis = 0, np.zeros((0, self.dim))
                else:
                    u, s, vt = np.linalg.svd(a, full_matrices=False)
                    scale = max(1.0, s.max())
                    rank = int(np.sum(s > 1e-10 * scale))
                    basis = vt[:rank]
                self._rank_data = (rank, c, basis)
            return self._rank_data

    @property
    def rank(self):
        return self._rank()[0]

    @property
    def is_degenerate(self):
        return self.rank < self.dim

    # -- hull cache ------------------------------------------------------------

    def hull(self):
        with self._lock:
            if self._hull is None:
                if self.is_degenerate:
                    raise GeometryError("degenerate body has no full-dimensional hull")
                self._hull = ConvexHull(self.vertices)
            return self._hull

    def hull_equations(self):
        """Outward facet equations a.x + b <= 0 of the hull."""
        return self.hull().equations

    def facet_normals(self):
        eq = self.hull_equations()
        return eq[:, :-1]

    def _tree(self):
        with self._lock:
            if self._kdtree is None:
                self._kdtree = cKDTree(self.vertices)
            return self._kdtree

    def diameter(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    # -- support function -------------------------------------------------------

    def support(self, directions):
        """max_v <v, u> for each direction row u."""
        d = np.atleast_2d(np.asarray(directions, dtype=float))
        return (d @ self.vertices.T).max(axis=1)

    def support_samples(self, angular_res):
        """Cached support values on the shared sphere grid."""
        key = round(float(angular_res), 12)
        with self._lock:
            hit = self._support_cache.get(key)
        if hit is not None:
            return hit
        dirs = sphere_directions(self.dim, angular_res)
        vals = self.support(dirs)
        with self._lock:
            self._support_cache[key] = (dirs, vals)
        return dirs, vals

    # -- membership --------------------------------------------------------------

    def contains(self, points, tol=1e-9):
        """Membership of each point, with slack ``tol`` on facet offsets."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.is_degenerate:
            eq = self.hull_equations()
            vals = p @ eq[:, :-1].T + eq[:, -1]
            return np.all(vals <= tol, axis=1)
        d, _ = _project_degenerate(self, p)
        return d <= tol

    def interior_contains(self, points, margin):
        """Strict membership with at least ``margin`` clearance to every facet."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_degenerate:
            return np.zeros(p.shape[0], dtype=bool)
        eq = self.hull_equations()
        vals = p @ eq[:, :-1].T + eq[:, -1]
        return np.all(vals < -margin, axis=1)

    def signed_distance(self, points):
        """Negative inside (clearance to the nearest facet), positive outside."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_degenerate:
            d, _ = _project_degenerate(self, p)
            return d
        eq = self.hull_equations()
        vals = p @ eq[:, :-1].T + eq[:, -1]
        worst = vals.max(axis=1)
        out = worst.copy()                 # exact clearance for inside points
        outside = worst > 0
        if np.any(outside):
            d, _ = _project_cloud(self, p[outside])
            out[outside] = d
        return out

    def boundary_distance(self, points):
        return np.abs(self.signed_distance(points))

    def sampled_sdf(self, spacing, padding=0.0):
        """Signed-distance grid cache (row-major, cubic cells)."""
        lo = self.vertices.min(axis=0) - padding
        hi = self.vertices.max(axis=0) + padding
        axes = [np.arange(lo[i], hi[i] + spacing / 2, spacing) for i in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        vals = np.empty(pts.shape[0])
        step = 20000
        for i in range(0, pts.shape[0], step):
            vals[i:i + step] = self.signed_distance(pts[i:i + step])
        grid = SdfGrid(origin=lo, spacing=float(spacing),
                       shape=tuple(len(ax) for ax in axes),
                       values=vals.reshape([len(ax) for ax in axes]))
        self.sdf = grid
        return grid

    def translate(self, shift):
        return ConvexBody(self.vertices + np.asarray(shift, dtype=float), dim=self.dim)

    def scale(self, factor, center=None):
        c = self.vertices.mean(axis=0) if center is None else np.asarray(center, float)
        return ConvexBody(c + factor * (self.vertices - c), dim=self.dim)


# ---------------------------------------------------------------------------
# hulls
# ---------------------------------------------------------------------------

def convex_hull(points, dim=None):
    """Minimal ConvexBody containing the points (degenerate hulls allowed)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.size == 0:
        raise GeometryError("empty point set")
    if dim is None:
        dim = p.shape[1]
    try:
        h = ConvexHull(p)
        return ConvexBody(p[h.vertices], dim=dim)
    except QhullError:
        body = ConvexBody(p, dim=dim)  # degenerate: keep extreme points only
        rank, c, basis = body._rank()
        if rank == 0:
            return ConvexBody(p[:1], dim=dim)
        coords = (p - c) @ basis.T
        if rank == 1:
            i, j = np.argmin(coords[:, 0]), np.argmax(coords[:, 0])
            return ConvexBody(p[[i, j]], dim=dim)
        h2 = ConvexHull(coords)
        return ConvexBody(p[h2.vertices], dim=dim)


# ---------------------------------------------------------------------------
# Hausdorff metric
# ---------------------------------------------------------------------------

def _point_array(obj):
    if isinstance(obj, ConvexBody):
        return obj.vertices
    a = np.atleast_2d(np.asarray(obj, dtype=float))
    if a.size == 0:
        raise GeometryError("empty set has no Hausdorff distance")
    return a


def hausdorff_distance(x, y, convention="sum"):
    """Hausdorff distance between point sets / bodies.

    The default convention is the sum of the two directed sup-inf distances;
    ``convention="max"`` gives the usual max form (differs by at most 2x).
    """
    a, b = _point_array(x), _point_array(y)
    if a.shape[1] != b.shape[1]:
        raise GeometryError("dimension mismatch")
    d_ab = cKDTree(b).query(a)[0].max()
    d_ba = cKDTree(a).query(b)[0].max()
    if convention == "sum":
        return float(d_ab + d_ba)
    if convention == "max":
        return float(max(d_ab, d_ba))
    raise GeometryError(f"unknown convention {convention!r}")


# ---------------------------------------------------------------------------
# exact projection onto a body
# ---------------------------------------------------------------------------

def _segment_project(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        proj = np.broadcast_to(a, p.shape).copy()
    else:
        t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
    d = np.linalg.norm(p - proj, axis=1)
    return d, proj


def _project_polygon2d(p, verts_ccw):
    """Closest point on a polygon boundary, vectorised over points x edges."""
    a = verts_ccw
    b = np.roll(verts_ccw, -1, axis=0)
    ab = b - a                                   # (E, 2)
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom == 0, 1.0, denom)
    best_d = np.full(p.shape[0], np.inf)
    best_y = np.zeros_like(p)
    chunk = max(1, int(4e6 / max(1, a.shape[0])))
    for i0 in range(0, p.shape[0], chunk):
        q = p[i0:i0 + chunk]                     # (m, 2)
        t = (q @ ab.T - np.einsum("ij,ij->i", a, ab)) / denom
        np.clip(t, 0.0, 1.0, out=t)              # (m, E)
        px = a[:, 0] + t * ab[:, 0]
        py = a[:, 1] + t * ab[:, 1]
        d2 = (q[:, 0:1] - px) ** 2 + (q[:, 1:2] - py) ** 2
        j = np.argmin(d2, axis=1)
        rows = np.arange(q.shape[0])
        best_d[i0:i0 + chunk] = np.sqrt(d2[rows, j])
        best_y[i0:i0 + chunk] = np.column_stack([px[rows, j], py[rows, j]])
    return best_d, best_y


def _project_triangles(p, tris):
    """Min distance/closest point from each p row to a set of triangles."""
    best_d = np.full(p.shape[0], np.inf)
    best_y = np.zeros_like(p)
    for (a, b, c) in tris:
        y = _closest_on_triangle(p, a, b, c)
        d = np.linalg.norm(p - y, axis=1)
        better = d < best_d
        best_d[better] = d[better]
        best_y[better] = y[better]
    return best_d, best_y


def _closest_on_triangle(p, a, b, c):
    # Ericson, Real-Time Collision Detection, vectorised over p
    ab, ac = b - a, c - a
    ap = p - a
    d1 = ap @ ab
    d2 = ap @ ac
    bp = p - b
    d3 = bp @ ab
    d4 = bp @ ac
    cp = p - c
    d5 = cp @ ab
    d6 = cp @ ac

    out = np.zeros_like(p)
    done = np.zeros(p.shape[0], dtype=bool)

    m = (d1 <= 0) & (d2 <= 0)
    out[m] = a
    done |= m

    m = (~done) & (d3 >= 0) & (d4 <= d3)
    out[m] = b
    done |= m

    vc = d1 * d4 - d3 * d2
    m = (~done) & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    v = np.where(d1 - d3 != 0, d1 / np.where(d1 - d3 == 0, 1.0, d1 - d3), 0.0)
    out[m] = a + v[m, None] * ab
    done |= m

    m = (~done) & (d6 >= 0) & (d5 <= d6)
    out[m] = c
    done |= m

    vb = d5 * d2 - d1 * d6
    m = (~done) & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    w = np.where(d2 - d6 != 0, d2 / np.where(d2 - d6 == 0, 1.0, d2 - d6), 0.0)
    out[m] = a + w[m, None] * ac
    done |= m

    va = d3 * d6 - d5 * d4
    m = (~done) & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom = (d4 - d3) + (d5 - d6)
    w = np.where(denom != 0, (d4 - d3) / np.where(denom == 0, 1.0, denom), 0.0)
    out[m] = b + w[m, None] * (c - b)
    done |= m

    m = ~done
    if np.any(m):
        denom = va + vb + vc
        denom = np.where(denom == 0, 1.0, denom)
        v = vb / denom
        w = vc / denom
        out[m] = a + v[m, None] * ab + w[m, None] * ac
    return out


def _project_degenerate(body, p):
    rank, c, basis = body._rank()
    if rank == 0:
        y = np.broadcast_to(body.vertices[0], p.shape).copy()
        return np.linalg.norm(p - y, axis=1), y
    coords = (p - c) @ basis.T
    vcoords = (body.vertices - c) @ basis.T
    if rank == 1:
        lo, hi = vcoords[:, 0].min(), vcoords[:, 0].max()
        t = np.clip(coords[:, 0], lo, hi)
        y = c + t[:, None] * basis[0]
        return np.linalg.norm(p - y, axis=1), y
    # rank 2 inside R^3: planar polygon
    sub = convex_hull(vcoords)
    dplane, ysub = _project_cloud(sub, coords)
    y = c + ysub @ basis
    return np.linalg.norm(p - y, axis=1), y


def _project_cloud(body, p):
    """Distance and closest point on the body for each query row."""
    if body.is_degenerate:
        return _project_degenerate(body, p)
    inside = body.contains(p, tol=0.0)
    d = np.zeros(p.shape[0])
    y = p.copy()
    outside = ~inside
    if np.any(outside):
        q = p[outside]
        h = body.hull()
        if body.dim == 2:
            dq, yq = _project_polygon2d(q, h.points[h.vertices])
        else:
            dq, yq = _project_chunked_triangles(q, h.points[h.simplices])
        d[outside] = dq
        y[outside] = yq
    return d, y


def _project_chunked_triangles(p, tris):
    if tris.shape[0] <= 64 or p.shape[0] <= 256:
        return _project_triangles(p, tris)
    cent = tris.mean(axis=1)
    rad = np.linalg.norm(tris - cent[:, None, :], axis=2).max(axis=1)
    tree = cKDTree(cent)
    k = min(32, tris.shape[0])
    dc, idx = tree.query(p, k=k)
    best_d = np.full(p.shape[0], np.inf)
    best_y = np.zeros_like(p)
    maxrad = rad.max()
    for j in range(k):
        cand = idx[:, j]
        need = dc[:, j] - maxrad <= best_d
        if not np.any(need):
            break
        rows = np.nonzero(need)[0]
        tsel = tris[cand[rows]]
        y = _closest_on_triangle_rows(p[rows], tsel)
        d = np.linalg.norm(p[rows] - y, axis=1)
        better = d < best_d[rows]
        rr = rows[better]
        best_d[rr] = d[better]
        best_y[rr] = y[better]
    return best_d, best_y


def _closest_on_triangle_rows(p, tris):
    """Closest point on tris[i] for p[i] (row-paired)."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, ac = b - a, c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ap, ab)
    d2 = np.einsum("ij,ij->i", ap, ac)
    bp = p - b
    d3 = np.einsum("ij,ij->i", bp, ab)
    d4 = np.einsum("ij,ij->i", bp, ac)
    cp = p - c
    d5 = np.einsum("ij,ij->i", cp, ab)
    d6 = np.einsum("ij,ij->i", cp, ac)

    out = np.zeros_like(p)
    done = np.zeros(p.shape[0], dtype=bool)

    m = (d1 <= 0) & (d2 <= 0)
    out[m] = a[m]
    done |= m

    m = (~done) & (d3 >= 0) & (d4 <= d3)
    out[m] = b[m]
    done |= m

    vc = d1 * d4 - d3 * d2
    denom = np.where(d1 - d3 == 0, 1.0, d1 - d3)
    m = (~done) & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    out[m] = a[m] + (d1 / denom)[m, None] * ab[m]
    done |= m

    m = (~done) & (d6 >= 0) & (d5 <= d6)
    out[m] = c[m]
    done |= m

    vb = d5 * d2 - d1 * d6
    denom = np.where(d2 - d6 == 0, 1.0, d2 - d6)
    m = (~done) & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    out[m] = a[m] + (d2 / denom)[m, None] * ac[m]
    done |= m

    va = d3 * d6 - d5 * d4
    denom = (d4 - d3) + (d5 - d6)
    denom = np.where(denom == 0, 1.0, denom)
    m = (~done) & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    out[m] = b[m] + ((d4 - d3) / denom)[m, None] * (c[m] - b[m])
    done |= m

    m = ~done
    if np.any(m):
        denom = va + vb + vc
        denom = np.where(denom == 0, 1.0, denom)
        v = vb / denom
        w = vc / denom
        out[m] = a[m] + v[m, None] * ab[m] + w[m, None] * ac[m]
    return out


def _order_ccw(verts):
    c = verts.mean(axis=0)
    ang = np.arctan2(verts[:, 1] - c[1], verts[:, 0] - c[0])
    return np.argsort(ang)


def distance_and_project(body, x):
    """Distance to the body and the unique closest point."""
    p = np.asarray(x, dtype=float)
    single = p.ndim == 1
    p2 = np.atleast_2d(p)
    d, y = _project_cloud(body, p2)
    if single:
        return float(d[0]), y[0]
    return d, y


# ---------------------------------------------------------------------------
# supporting normals
# ---------------------------------------------------------------------------

def supporting_normals(body, x, angular_res=np.pi / 180, tol=1e-9):
    """All sphere-grid directions supporting the body at boundary point x."""
    x = np.asarray(x, dtype=float)
    dirs, support = body.support_samples(angular_res)
    deficiency = support - dirs @ x
    mask = deficiency <= tol
    if not np.any(mask):
        raise GeometryError("no supporting normal at interior point")
    return DirectionSet(body.dim, dirs[mask], kind="supporting_normals")


# ---------------------------------------------------------------------------
# hemisphere / origin-in-hull tests
# ---------------------------------------------------------------------------

def hemisphere_witness(directions, margin=LGP_MARGIN):
    """Witness w with <u, w> < 0 for all rows u, or None.

    Solves max delta s.t. U w + delta <= 0, |w|_inf <= 1; the margin encodes
    the strictness of "strictly contained in a hemisphere".
    """
    u = np.atleast_2d(np.asarray(directions, dtype=float))
    if u.size == 0:
        return None
    m, d = u.shape
    # variables: w (d), delta (1); maximise delta
    c = np.zeros(d + 1)
    c[-1] = -1.0
    a_ub = np.hstack([u, np.ones((m, 1))])
    b_ub = np.zeros(m)
    bounds = [(-1.0, 1.0)] * d + [(0.0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        return None
    if res.x[-1] <= margin:
        return None
    w = res.x[:d]
    nw = np.linalg.norm(w)
    return w / nw if nw > 0 else None


def origin_in_hull(directions, margin=LGP_MARGIN):
    """True iff 0 in conv(directions) up to the strictness margin."""
    return hemisphere_witness(directions, margin=margin) is None


# ---------------------------------------------------------------------------
# local geodesic property
# ---------------------------------------------------------------------------

def has_local_geodesic_property(body, x, radii=None, angular_res=np.pi / 360,
                                membership_tol=None):
    """Open-segment-through-x test via the origin-in-hull characterisation.

    Samples D_r = {(y - x)/r : y in K on the sphere of radius r} on the
    direction grid and checks 0 in conv(D_r) for every radius below the
    auto threshold.  Interior points trivially pass.
    """
    x = np.asarray(x, dtype=float)
    if not bool(body.contains(x[None, :], tol=1e-7 * max(1.0, body.diameter()))[0]):
        raise GeometryError("point not in body")
    diam = body.diameter()
    if membership_tol is None:
        membership_tol = 1e-9 * max(1.0, diam)
    if bool(body.interior_contains(x[None, :], margin=membership_tol * 10)[0]) \
            and body.boundary_distance(x[None, :])[0] > 1e-6 * diam:
        return True
    if radii is None:
        radii = [diam * 2.0 ** (-j) for j in range(3, 9)]
    dirs = sphere_directions(body.dim, angular_res)
    for r in sorted(radii):
        pts = x[None, :] + r * dirs
        inside = body.contains(pts, tol=membership_tol)
        d_r = dirs[inside]
        if d_r.shape[0] == 0:
            return False
        if not origin_in_hull(d_r):
            return False
    return True


# ---------------------------------------------------------------------------
# graph charts
# ---------------------------------------------------------------------------

@dataclass
class GraphChart:
    """Boundary patch of a body written as a convex graph.

    ``frame`` rows are the chart axes in world coordinates; the last row is
    the graph axis (pointing into the body).  ``values`` holds f on a square
    grid over [-radius, radius]^(dim-1); NaN outside the chart disk.
    """

    base_point: np.ndarray
    frame: np.ndarray
    radius: float
    lipschitz: float
    grid: np.ndarray            # 1D axis coordinates
    values: np.ndarray          # (m,) in 2D bodies, (m, m) in 3D bodies
    theta: float = 0.0
    normal: np.ndarray = field(default=None)

    @property
    def dim(self):
        return self.frame.shape[0]

    def to_world(self, xprime, t):
        xp = np.atleast_2d(np.asarray(xprime, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        local = np.column_stack([xp, t])
        return self.base_point + local @ self.frame

    def to_chart(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        local = (p - self.base_point) @ self.frame.T
        return local[:, :-1], local[:, -1]

    def interpolate(self, xprime):
        """Bilinear interpolation of the chart graph (NaN outside)."""
        xp = np.atleast_2d(np.asarray(xprime, dtype=float))
        g = self.grid
        h = g[1] - g[0]
        if self.dim == 2:
            t = (xp[:, 0] - g[0]) / h
            i = np.clip(np.floor(t).astype(int), 0, len(g) - 2)
            w = t - i
            return (1 - w) * self.values[i] + w * self.values[i + 1]
        tx = (xp[:, 0] - g[0]) / h
        ty = (xp[:, 1] - g[0]) / h
        i = np.clip(np.floor(tx).astype(int), 0, len(g) - 2)
        j = np.clip(np.floor(ty).astype(int), 0, len(g) - 2)
        wx = tx - i
        wy = ty - j
        v = self.values
        return ((1 - wx) * (1 - wy) * v[i, j] + wx * (1 - wy) * v[i + 1, j]
                + (1 - wx) * wy * v[i, j + 1] + wx * wy * v[i + 1, j + 1])


def _complete_frame(axis):
    """Deterministic orthonormal frame whose last row is ``axis``."""
    d = axis.shape[0]
    idx = int(np.argmin(np.abs(axis)))
    e = np.zeros(d)
    e[idx] = 1.0
    u1 = e - axis * axis[idx]
    u1 /= np.linalg.norm(u1)
    if d == 2:
        return np.vstack([u1, axis])
    u2 = np.cross(axis, u1)
    return np.vstack([u1, u2, axis])


def _graph_heights(body, frame, base_point, xprime):
    """Lower graph heights of the hull over chart points (max of affines)."""
    eq = body.hull_equations()
    a = eq[:, :-1] @ frame.T          # facet normals in chart coordinates
    b = -(eq[:, -1] + eq[:, :-1] @ base_point)
    down = a[:, -1] < -1e-12
    if not np.any(down):
        raise GeometryError("no downward facets: chart axis invalid")
    a_d, b_d = a[down], b[down]
    xp = np.atleast_2d(xprime)
    # a_x . x' + a_z t <= b  with a_z < 0  =>  t >= (b - a_x . x') / a_z
    cand = (b_d[None, :] - xp @ a_d[:, :-1].T) / a_d[:, -1][None, :]
    return cand.max(axis=1)


def extract_graph_chart(body, x, theta, r=None, grid_n=33, shrink=0.7,
                        r_min_factor=1e-3):
    """Chart of the boundary near x as a convex Lipschitz graph.

    Requires every supporting normal on the boundary ball of radius r to lie
    within angle theta of the chart axis; r is auto-shrunk until that holds.
    """
    if not (0 <= theta < np.pi / 2):
        raise GeometryError("theta must lie in [0, pi/2)")
    x = np.asarray(x, dtype=float)
    if body.is_degenerate:
        raise GeometryError("chart extraction needs a full-dimensional body")

    # chart axis from the facet normals incident to the nearest hull vertex
    hull = body.hull()
    eq = hull.equations
    d2 = np.sum((hull.points[hull.vertices] - x) ** 2, axis=1)
    vid = hull.vertices[int(np.argmin(d2))]
    incident = np.any(hull.simplices == vid, axis=1)
    axis_out = eq[incident, :-1].mean(axis=0)
    nrm = np.linalg.norm(axis_out)
    if nrm < 1e-12:
        raise GeometryError("no admissible chart radius")
    axis_out /= nrm

    eq = body.hull_equations()
    fnormals = eq[:, :-1]
    fpoints = body.hull().points[body.hull().simplices]  # (F, dim, dim)
    fdist = np.linalg.norm(fpoints - x[None, None, :], axis=2).min(axis=1)

    diam = body.diameter()
    r_cur = float(r) if r is not None else diam / 4.0
    cos_t = np.cos(theta)
    while True:
        touched = fdist <= r_cur
        if np.any(touched):
            ok = np.all(fnormals[touched] @ axis_out >= cos_t - 1e-12)
        else:
            ok = True
        if ok:
            break
        r_cur *= shrink
        if r_cur < r_min_factor * diam:
            raise GeometryError("no admissible chart radius")

    c = np.tan(theta)
    rho = r_cur / np.sqrt(1.0 + 4.0 * c * c)
    frame = _complete_frame(-axis_out)

    grid = np.linspace(-rho, rho, grid_n)
    if body.dim == 2:
        vals = _graph_heights(body, frame, x, grid[:, None])
    else:
        gx, gy = np.meshgrid(grid, grid, indexing="ij")
        xp = np.column_stack([gx.ravel(), gy.ravel()])
        vals = _graph_heights(body, frame, x, xp)
        vals = vals.reshape(grid_n, grid_n)
        outside = gx ** 2 + gy ** 2 > rho ** 2 + 1e-15
        vals = np.where(outside, np.nan, vals)
    return GraphChart(base_point=x, frame=frame, radius=rho, lipschitz=c,
                      grid=grid, values=vals, theta=theta, normal=axis_out)

"""Spherical convexity: half-spaces, duals, links and normal sets.

All spherical sets are finite samples on the shared direction grid; set
equality downstream means symmetric-difference angular gap within twice the
grid resolution.  Strict inequalities in the definitions become margin
parameters tied to the resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import (
    ConvexBody,
    DirectionSet,
    GeometryError,
    hemisphere_witness,
    sphere_directions,
    supporting_normals,
)

__all__ = [
    "HalfSpace",
    "SphericalSet",
    "affine_projection",
    "inverse_affine_projection",
    "dual_set",
    "spherical_convex_hull",
    "link",
    "normals_of_intersection",
]


@dataclass(frozen=True)
class HalfSpace:
    """Open half-space {x : <x, normal> < height}."""

    normal: np.ndarray
    height: float = np.inf

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            n = n / np.linalg.norm(n)
        object.__setattr__(self, "normal", n)

    def contains(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return p @ self.normal < self.height


class SphericalSet:
    """Finite sample of a subset of the sphere with hemisphere bookkeeping."""

    def __init__(self, directions, kind="generic", margin=1e-9):
        if isinstance(directions, DirectionSet):
            ds = directions
        else:
            d = np.atleast_2d(np.asarray(directions, dtype=float))
            dim = d.shape[1] if d.size else 2
            ds = DirectionSet(dim, d, kind=kind)
        self.dirset = ds
        w = hemisphere_witness(ds.directions, margin=margin) if len(ds) else None
        self.witness = w
        self.strictly_in_hemisphere = w is not None

    @property
    def dim(self):
        return self.dirset.dim

    @property
    def directions(self):
        return self.dirset.directions

    def __len__(self):
        return len(self.dirset)


# ---------------------------------------------------------------------------
# affine projection P and its inverse Q
# ---------------------------------------------------------------------------

def affine_projection(u):
    """Map a southern direction (last coordinate < 0) to the plane: -x'/t."""
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u2 = np.atleast_2d(u)
    t = u2[:, -1]
    if np.any(t >= 0):
        raise GeometryError("affine projection needs last coordinate < 0")
    out = -u2[:, :-1] / t[:, None]
    return out[0] if single else out


def inverse_affine_projection(xprime):
    """Inverse map Q(x') = (x', -1)/sqrt(1 + |x'|^2)."""
    x = np.asarray(xprime, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    denom = np.sqrt(1.0 + np.sum(x2 ** 2, axis=1))
    out = np.column_stack([x2, -np.ones(x2.shape[0])]) / denom[:, None]
    return out[0] if single else out


# ---------------------------------------------------------------------------
# duality
# ---------------------------------------------------------------------------

def dual_set(x, angular_res=np.pi / 180, margin=None):
    """Grid directions making a strictly negative product with every member.

    The strictness margin defaults to sin(angular_res) so that grid
    refinement converges to the continuum dual; pass a non-positive margin
    for the closed reading (products <= 0 admitted), mirroring the
    open/closed exchange of duality.
    """
    if isinstance(x, SphericalSet):
        members = x.directions
        dim = x.dim
    else:
        ds = x if isinstance(x, DirectionSet) else None
        members = ds.directions if ds is not None else np.atleast_2d(np.asarray(x, float))
        dim = members.shape[1]
    if members.size == 0:
        raise GeometryError("dual of the empty set is undefined here")
    if margin is None:
        margin = np.sin(angular_res)
    grid = sphere_directions(dim, angular_res)
    prods = grid @ members.T
    mask = np.all(prods < -margin, axis=1)
    return SphericalSet(DirectionSet(dim, grid[mask], kind="dual"))


# ---------------------------------------------------------------------------
# spherical convex hull via P-conjugation
# ---------------------------------------------------------------------------

def _rotation_to_south(w):
    """Rotation R with R w = -e_last (deterministic)."""
    d = w.shape[0]
    target = np.zeros(d)
    target[-1] = -1.0
    v = w + target
    nv = np.linalg.norm(v)
    if nv < 1e-12:
        # w = e_last: rotate by pi about the first axis
        r = -np.eye(d)
        r[0, 0] = 1.0
        if d == 3:
            r = np.diag([1.0, -1.0, -1.0])
        return r
    v = v / nv
    # Householder reflection through the bisector maps w -> -e_last,
    # composed with a reflection to restore orientation is unnecessary here.
    return np.eye(d) - 2.0 * np.outer(v, v)


def spherical_convex_hull(x, angular_res=np.pi / 180):
    """Spherical hull of a hemispheric sample, by projecting, hulling in the
    plane, and pulling back grid directions that land inside.

    Membership is decided angularly: the closest hull point is pulled back
    to the sphere and compared against the grid resolution, so the plane's
    distortion away from the projection pole cannot inflate the set.
    """
    xs = x if isinstance(x, SphericalSet) else SphericalSet(x)
    if len(xs) == 0:
        raise GeometryError("hull of empty spherical set")
    if not xs.strictly_in_hemisphere:
        raise GeometryError("hull undefined: antipodal obstruction")
    dim = xs.dim
    rot = _rotation_to_south(xs.witness)
    rotated = xs.directions @ rot.T
    planar = np.atleast_2d(affine_projection(rotated))

    grid = sphere_directions(dim, angular_res)
    gr = grid @ rot.T
    south = gr[:, -1] < 0
    pts = affine_projection(gr[south])

    closest = _closest_in_hull(planar, pts)
    back = inverse_affine_projection(closest)
    cosang = np.clip(np.einsum("ij,ij->i", np.atleast_2d(back), gr[south]), -1, 1)
    inside = np.arccos(cosang) <= angular_res
    members = grid[south][inside]
    merged = np.vstack([xs.directions, members])
    return SphericalSet(DirectionSet(dim, merged, kind=xs.dirset.kind))


def _closest_in_hull(generators, queries):
    """Closest point of conv(generators) for every query row."""
    from .geometry import _project_polygon2d, _segment_project

    g = np.atleast_2d(generators)
    q = np.atleast_2d(queries)
    if g.shape[0] == 1:
        return np.broadcast_to(g[0], q.shape).copy()
    if g.shape[1] == 1:
        lo, hi = g.min(), g.max()
        return np.clip(q, lo, hi)
    try:
        hull = ConvexHull(g)
        verts = hull.points[hull.vertices]
        eq = hull.equations
        inside = np.all(q @ eq[:, :-1].T + eq[:, -1] <= 0, axis=1)
        _, proj = _project_polygon2d(q, verts)
        proj[inside] = q[inside]
        return proj
    except QhullError:
        c = g.mean(axis=0)
        a = g - c
        _, _, vt = np.linalg.svd(a, full_matrices=False)
        axis = vt[0]
        t = a @ axis
        lo, hi = g[np.argmin(t)], g[np.argmax(t)]
        _, proj = _segment_project(q, lo, hi)
        return proj


# ---------------------------------------------------------------------------
# links
# ---------------------------------------------------------------------------

def link(body, x, radii=None, angular_res=np.pi / 180, interior_margin=None):
    """Directions pointing from a boundary point into the interior."""
    if body.is_degenerate:
        raise GeometryError("link needs a body with nonempty interior")
    x = np.asarray(x, dtype=float)
    diam = body.diameter()
    if radii is None:
        radii = [diam * 2.0 ** (-j) for j in range(4, 9)]
    if interior_margin is None:
        interior_margin = 1e-9 * max(1.0, diam)
    grid = sphere_directions(body.dim, angular_res)
    keep = np.zeros(grid.shape[0], dtype=bool)
    for r in sorted(radii):
        pts = x[None, :] + r * grid
        keep |= body.interior_contains(pts, margin=interior_margin)
    return SphericalSet(DirectionSet(body.dim, grid[keep], kind="link"))


# ---------------------------------------------------------------------------
# supporting normals of an intersection
# ---------------------------------------------------------------------------

def normals_of_intersection(k1, k2, x, angular_res=np.pi / 180, tol=None):
    """Normal set of K1 n K2 at x, dispatching the three membership cases.

    Points within tolerance of both boundaries route to the hull case (the
    conservative superset).
    """
    x = np.asarray(x, dtype=float)
    if tol is None:
        tol = 1e-7 * max(1.0, k1.diameter(), k2.diameter())
    in1 = bool(k1.contains(x[None, :], tol=tol)[0])
    in2 = bool(k2.contains(x[None, :], tol=tol)[0])
    if not (in1 and in2):
        raise GeometryError("point not on the intersection boundary")
    b1 = k1.boundary_distance(x[None, :])[0] <= tol
    b2 = k2.boundary_distance(x[None, :])[0] <= tol
    if not (b1 or b2):
        raise GeometryError("point interior to the intersection")
    sup_tol = max(tol, 1e-9)
    if b1 and not b2:
        n = supporting_normals(k1, x, angular_res, tol=sup_tol)
        return SphericalSet(n)
    if b2 and not b1:
        n = supporting_normals(k2, x, angular_res, tol=sup_tol)
        return SphericalSet(n)
    n1 = supporting_normals(k1, x, angular_res, tol=sup_tol).directions
    n2 = supporting_normals(k2, x, angular_res, tol=sup_tol).directions
    union = DirectionSet(k1.dim, np.vstack([n1, n2]), kind="supporting_normals")
    return spherical_convex_hull(SphericalSet(union), angular_res=angular_res)

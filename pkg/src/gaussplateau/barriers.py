"""Barrier machinery: mollified distance fields, smoothed intersections,
excision of chart patches by constant-curvature graphs, and the
volume-minimising Plateau loop.

Excision replaces the boundary above a chart sublevel domain by the graph of
a Dirichlet solve of curvature k with raised boundary data, then glues the
cap into the vertex cloud; the loop drives every free boundary point to
sampled curvature k while the volume decreases monotonically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError, cKDTree

from .dirichlet import (
    CurvatureWeight,
    GraphProblem,
    SolverError,
    phi_for_curvature,
    solve_dirichlet,
)
from .domains import ImplicitDomain, Interval
from .geometry import (
    ConvexBody,
    GeometryError,
    GraphChart,
    convex_hull,
    extract_graph_chart,
    hausdorff_distance,
    has_local_geodesic_property,
)

__all__ = [
    "Mollifier",
    "mollify",
    "level_set_curvature",
    "CurvatureMatrixSet",
    "volume",
    "intersect_bodies",
    "smooth_intersection",
    "FrozenBoundary",
    "BarrierState",
    "excise",
    "classify_boundary_point",
    "solve_plateau",
    "BarrierError",
]


class BarrierError(RuntimeError):
    """Raised when a barrier operation cannot proceed."""


# ---------------------------------------------------------------------------
# mollifiers
# ---------------------------------------------------------------------------

def _bump(rho):
    out = np.zeros_like(rho)
    inside = rho < 1.0
    out[inside] = np.exp(1.0 / (rho[inside] ** 2 - 1.0))
    return out


@dataclass
class Mollifier:
    """Radial unit-mass bump supported in the ball of radius ``scale``."""

    scale: float
    profile: object = None         # callable on [0, 1); default smooth bump

    def __post_init__(self):
        if self.scale <= 0:
            raise BarrierError("mollifier scale must be positive")
        if self.profile is None:
            self.profile = _bump

    def discrete_kernel(self, spacing, dim):
        if self.scale < 2.0 * spacing:
            raise BarrierError("kernel under-resolved")
        m = int(np.floor(self.scale / spacing))
        ax = np.arange(-m, m + 1) * spacing
        grids = np.meshgrid(*([ax] * dim), indexing="ij")
        rho = np.sqrt(sum(g ** 2 for g in grids)) / self.scale
        w = self.profile(rho)
        total = w.sum()
        if total <= 0:
            raise BarrierError("degenerate mollifier profile")
        return w / total

    def check_unit_mass(self, dim, n_quad=121):
        """Quadrature check that the continuum kernel integrates to one."""
        h = 2.0 / n_quad
        ax = (np.arange(n_quad) + 0.5) * h - 1.0
        grids = np.meshgrid(*([ax] * dim), indexing="ij")
        rho = np.sqrt(sum(g ** 2 for g in grids))
        w = self.profile(rho)
        mass = w.sum() * h ** dim
        norm = self.profile(np.atleast_1d(0.0))[0]
        return mass, norm


def mollify(field, mollifier, spacing):
    """Discrete convolution with the normalised kernel (exact on constants,
    exact on affine fields wherever the kernel support is complete)."""
    f = np.asarray(field, dtype=float)
    kernel = mollifier.discrete_kernel(spacing, f.ndim)
    return ndimage.convolve(f, kernel, mode="nearest")


# ---------------------------------------------------------------------------
# level-set shape operator
# ---------------------------------------------------------------------------

def _node_derivatives(field, idx, spacing):
    dim = field.ndim
    grad = np.zeros(dim)
    hess = np.zeros((dim, dim))
    for i in range(dim):
        up = list(idx)
        dn = list(idx)
        up[i] += 1
        dn[i] -= 1
        grad[i] = (field[tuple(up)] - field[tuple(dn)]) / (2 * spacing)
        hess[i, i] = (field[tuple(up)] - 2 * field[tuple(idx)]
                      + field[tuple(dn)]) / spacing ** 2
        for j in range(i + 1, dim):
            pp = list(idx); pp[i] += 1; pp[j] += 1
            pm = list(idx); pm[i] += 1; pm[j] -= 1
            mp = list(idx); mp[i] -= 1; mp[j] += 1
            mm = list(idx); mm[i] -= 1; mm[j] -= 1
            val = (field[tuple(pp)] - field[tuple(pm)]
                   - field[tuple(mp)] + field[tuple(mm)]) / (4 * spacing ** 2)
            hess[i, j] = hess[j, i] = val
    return grad, hess


def _tangent_basis(normal):
    d = normal.shape[0]
    idx = int(np.argmin(np.abs(normal)))
    e = np.zeros(d)
    e[idx] = 1.0
    u1 = e - normal * normal[idx]
    u1 /= np.linalg.norm(u1)
    if d == 2:
        return u1[None, :]
    u2 = np.cross(normal, u1)
    return np.vstack([u1, u2])


def level_set_curvature(field, origin, spacing, x, grad_floor=1e-8):
    """Unit normal and shape-operator spectrum of a level set near x.

    The shape operator is the Hessian scaled by 1/|Df| and restricted to the
    tangent plane; its eigenvalue product is the Gaussian curvature.
    """
    f = np.asarray(field, dtype=float)
    x = np.asarray(x, dtype=float)
    idx = tuple(int(round(v)) for v in (x - np.asarray(origin)) / spacing)
    for i, (v, m) in enumerate(zip(idx, f.shape)):
        if v < 1 or v > m - 2:
            raise BarrierError("probe too close to the grid edge")
    grad, hess = _node_derivatives(f, idx, spacing)
    gnorm = float(np.linalg.norm(grad))
    if gnorm <= grad_floor:
        raise BarrierError("critical point: level set not a graph here")
    normal = grad / gnorm
    tan = _tangent_basis(normal)
    shape_op = tan @ (hess / gnorm) @ tan.T
    eig = np.linalg.eigvalsh(shape_op)
    return normal, eig


# ---------------------------------------------------------------------------
# curvature matrix sets
# ---------------------------------------------------------------------------

@dataclass
class CurvatureMatrixSet:
    """Matrices with bounded norm, nonneg spectrum, and a tangential
    determinant lower bound relative to a fixed direction."""

    k: float
    bound: float
    normal: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))

    def contains(self, a, tol=1e-9):
        a = np.asarray(a, dtype=float)
        if np.linalg.norm(a, ord=2) > self.bound + tol:
            return False
        if np.min(np.linalg.eigvalsh(a)) < -tol:
            return False
        tan = _tangent_basis(self.normal)
        restricted = tan @ a @ tan.T
        n = restricted.shape[0]
        det = float(np.linalg.det(restricted))
        return det >= self.k ** n - tol


# ---------------------------------------------------------------------------
# volume and intersections
# ---------------------------------------------------------------------------

def volume(body):
    """(n+1)-volume of the body (fan decomposition of its hull)."""
    if body.is_degenerate:
        return 0.0
    return float(body.hull().volume)


def _chebyshev_center(equations):
    a = equations[:, :-1]
    b = equations[:, -1]
    m, d = a.shape
    c = np.zeros(d + 1)
    c[-1] = -1.0
    a_ub = np.hstack([a, np.ones((m, 1))])
    res = linprog(c, A_ub=a_ub, b_ub=-b, bounds=[(None, None)] * d + [(0, None)],
                  method="highs")
    if not res.success or res.x[-1] <= 0:
        return None
    return res.x[:-1]


def intersect_bodies(k1, k2):
    """Exact vertex representation of the intersection of two hulls."""
    eqs = np.vstack([k1.hull_equations(), k2.hull_equations()])
    center = _chebyshev_center(eqs)
    if center is None:
        raise BarrierError("intersection has no interior")
    try:
        hs = HalfspaceIntersection(eqs, center)
    except QhullError as exc:
        raise BarrierError(f"intersection failed: {exc}") from None
    return convex_hull(hs.intersections)


def smooth_intersection(k1, k2, k, eps, r=None, s=None, grid_h=None,
                        m_index=1, max_grid_nodes=4_000_000, n_samples=400):
    """Round the intersection by a mollified-distance sublevel body.

    Picks a level r inside the admissible window, mollifies the distance
    field at scale s << r, and returns the sublevel body, which contains the
    intersection and stays within Hausdorff distance 3r/2 of it.  The
    returned body carries a ``smoothing_info`` dict with the curvature sweep.
    """
    if eps <= 0 or eps >= k:
        raise BarrierError("need 0 < eps < k")
    inter = intersect_bodies(k1, k2)
    if inter.is_degenerate:
        raise BarrierError("degenerate intersection")
    rho = eps / (k * (k - eps))
    if r is None:
        r = min(rho / 4.0, 2.0 / (3.0 * m_index))
    if s is None:
        # the kernel must straddle a few boundary facets to see the smooth
        # curvature through the sampling, but stay below r/2 so the body
        # remains within the 3r/2 Hausdorff window
        tree = cKDTree(inter.vertices)
        edge = float(np.median(tree.query(inter.vertices, k=2)[0][:, 1]))
        s = max(r / 8.0, 2.2 * edge)
        if s > r / 2.0:
            raise BarrierError(
                "smoothing window not found: boundary sampling too coarse")
    if grid_h is None:
        grid_h = s / 2.5
    pad = r + 4 * s
    lo = inter.vertices.min(axis=0) - pad
    hi = inter.vertices.max(axis=0) + pad
    dim = inter.dim
    shape = tuple(int(np.ceil((hi[i] - lo[i]) / grid_h)) + 1 for i in range(dim))
    if np.prod(shape) > max_grid_nodes:
        raise BarrierError("smoothing window not found: grid too large")
    axes = [lo[i] + np.arange(shape[i]) * grid_h for i in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    dist = np.empty(pts.shape[0])
    step = 40000
    for i in range(0, pts.shape[0], step):
        dist[i:i + step] = np.maximum(inter.signed_distance(pts[i:i + step]), 0.0)
    dist = dist.reshape(shape)
    moll = Mollifier(scale=s)
    dist_s = mollify(dist, moll, grid_h)

    boundary_pts = _extract_level_set(dist_s, lo, grid_h, r)
    if boundary_pts.shape[0] < dim + 1:
        raise BarrierError("smoothing window not found: empty level set")
    out = convex_hull(boundary_pts)

    idx = np.linspace(0, boundary_pts.shape[0] - 1,
                      min(n_samples, boundary_pts.shape[0])).astype(int)
    kappas = []
    for p in boundary_pts[idx]:
        try:
            _, eig = level_set_curvature(dist_s, lo, grid_h, p)
            kappas.append(float(np.prod(eig)))
        except BarrierError:
            continue
    info = {
        "r": float(r),
        "s": float(s),
        "grid_h": float(grid_h),
        "min_curvature": float(np.min(kappas)) if kappas else float("nan"),
        "hausdorff_to_intersection": hausdorff_distance(out, inter, convention="max"),
        "contains_intersection": bool(np.all(out.contains(inter.vertices, tol=1e-9))),
    }
    out.smoothing_info = info
    return out


def _extract_level_set(field, origin, spacing, level):
    from skimage import measure
    if field.ndim == 2:
        contours = measure.find_contours(field, level)
        if not contours:
            return np.zeros((0, 2))
        pts = np.vstack(contours)
        return origin[None, :] + pts * spacing
    verts, _faces, _, _ = measure.marching_cubes(field, level, spacing=(spacing,) * 3)
    return origin[None, :] + verts


# ---------------------------------------------------------------------------
# frozen boundary subsets
# ---------------------------------------------------------------------------

class FrozenBoundary:
    """Prescribed boundary subset: dense samples plus optional exact predicate."""

    def __init__(self, samples, predicate=None, collar=0.0):
        self.samples = np.atleast_2d(np.asarray(samples, dtype=float))
        self.predicate = predicate
        self.collar = float(collar)
        self._tree = cKDTree(self.samples)

    def contains(self, points, collar=None):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        tol = self.collar if collar is None else collar
        hit = self._tree.query(p)[0] <= tol
        if self.predicate is not None:
            hit |= np.asarray(self.predicate(p), dtype=bool)
        return hit

    def clearance(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return self._tree.query(p)[0]


@dataclass
class BarrierState:
    """One iterate of the Plateau loop."""

    body: ConvexBody
    frozen: FrozenBoundary
    k: float
    history: list = field(default_factory=list)
    hausdorff_increments: list = field(default_factory=list)

    def volumes(self):
        out = [h["volume_after"] for h in self.history]
        return out

    def free_vertices(self):
        v = self.body.vertices
        mask = ~self.frozen.contains(v)
        return v[mask]


# ---------------------------------------------------------------------------
# local curvature estimation on vertex clouds
# ---------------------------------------------------------------------------

def _vertex_normals(body):
    hull = body.hull()
    eq = hull.equations[:, :-1]
    v_normals = np.zeros_like(body.vertices)
    counts = np.zeros(body.vertices.shape[0])
    # map hull point indices back into the cloud (qhull preserves order)
    for f, simplex in enumerate(hull.simplices):
        for vi in simplex:
            v_normals[vi] += eq[f]
            counts[vi] += 1
    ok = counts > 0
    v_normals[ok] /= np.linalg.norm(v_normals[ok], axis=1)[:, None]
    return v_normals, ok


def _fit_quadric_curvature(vertices, x, normal, neighbor_idx, dim):
    """Gaussian curvature of the sampled boundary near x via a quadric fit."""
    tan = _tangent_basis(-normal)      # frame rows tangent, graph axis -normal
    frame = np.vstack([tan, -normal])
    rel = (vertices[neighbor_idx] - x) @ frame.T
    n = dim - 1
    min_pts = 8 if n == 2 else 5
    if rel.shape[0] < min_pts:
        raise BarrierError("not enough neighbours for a curvature fit")
    xp, t = rel[:, :-1], rel[:, -1]
    if n == 1:
        cols = [np.ones_like(t), xp[:, 0], 0.5 * xp[:, 0] ** 2]
    else:
        cols = [np.ones_like(t), xp[:, 0], xp[:, 1],
                0.5 * xp[:, 0] ** 2, 0.5 * xp[:, 1] ** 2, xp[:, 0] * xp[:, 1]]
    a = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(a, t, rcond=None)
    if n == 1:
        grad = np.array([coef[1]])
        hess = np.array([[coef[2]]])
    else:
        grad = coef[1:3]
        hess = np.array([[coef[3], coef[5]], [coef[5], coef[4]]])
    det = float(np.linalg.det(hess))
    kappa = det / (1.0 + float(grad @ grad)) ** ((n + 2) / 2.0)
    return kappa


def _neighbor_table(body, fit_radius=None):
    """Per-vertex neighbour lists within the curvature-fit radius."""
    v = body.vertices
    tree = cKDTree(v)
    if fit_radius is None:
        fit_radius = 3.5 * _local_spacing(body)
    lists = tree.query_ball_point(v, fit_radius)
    kmin = 14 if body.dim == 3 else 7
    out = []
    for i, lst in enumerate(lists):
        if len(lst) < kmin:
            _, idx = tree.query(v[i], k=min(kmin, v.shape[0]))
            lst = list(np.atleast_1d(idx))
        out.append(np.asarray(lst, dtype=int))
    return out


def _local_spacing(body):
    tree = cKDTree(body.vertices)
    d, _ = tree.query(body.vertices, k=min(4, body.vertices.shape[0]))
    return float(np.median(d[:, -1]))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def classify_boundary_point(state, x, tol_kappa=0.15, fit_radius=None,
                            lgp_check="auto"):
    """Tag a boundary point: frozen, lgp_singular, smooth_constant_k, or
    needs_excision."""
    x = np.asarray(x, dtype=float)
    if bool(state.frozen.contains(x[None, :])[0]):
        return "frozen", float("nan")
    body = state.body
    normals, _ = _vertex_normals(body)
    neighbors = _neighbor_table(body, fit_radius)
    tree = cKDTree(body.vertices)
    _, vi = tree.query(x)
    try:
        kappa = _fit_quadric_curvature(body.vertices, x, normals[vi],
                                       neighbors[vi], body.dim)
    except BarrierError:
        kappa = float("nan")
    run_lgp = lgp_check == "always" or (
        lgp_check == "auto" and not (kappa == kappa and kappa > 0.02 * state.k))
    if run_lgp and has_local_geodesic_property(body, x):
        return "lgp_singular", kappa
    if kappa == kappa and abs(kappa - state.k) <= tol_kappa * state.k:
        return "smooth_constant_k", kappa
    return "needs_excision", kappa


def _classify_all(state, tol_kappa, fit_radius=None):
    body = state.body
    verts = body.vertices
    frozen_mask = state.frozen.contains(verts)
    normals, _ = _vertex_normals(body)
    neighbors = _neighbor_table(body, fit_radius)
    tags = np.empty(verts.shape[0], dtype=object)
    kappas = np.full(verts.shape[0], np.nan)
    tags[frozen_mask] = "frozen"
    for i in np.nonzero(~frozen_mask)[0]:
        try:
            kappa = _fit_quadric_curvature(verts, verts[i], normals[i],
                                           neighbors[i], body.dim)
        except BarrierError:
            kappa = float("nan")
        kappas[i] = kappa
        if not (kappa == kappa and kappa > 0.02 * state.k) \
                and has_local_geodesic_property(body, verts[i]):
            tags[i] = "lgp_singular"
        elif kappa == kappa and abs(kappa - state.k) <= tol_kappa * state.k:
            tags[i] = "smooth_constant_k"
        else:
            tags[i] = "needs_excision"
    return tags, kappas


# ---------------------------------------------------------------------------
# excision
# ---------------------------------------------------------------------------

class _SmoothChartModel:
    """Mollified graph heights of the hull over a chart, with C^2 evaluation.

    Raw heights are exact maxima of the facet affines; mollifying them with a
    positive symmetric kernel keeps convexity exactly, and a cubic spline of
    the smoothed samples gives derivatives stable enough for strictly convex
    barrier fields at any solver resolution.
    """

    def __init__(self, body, chart, s, half_factor=0.72):
        from scipy.interpolate import CubicSpline, RectBivariateSpline
        from .geometry import _graph_heights

        self.chart = chart
        self.s = float(s)
        rho = chart.radius
        half = half_factor * rho
        hc = max(self.s / 3.0, 1e-6)
        m = int(np.ceil((half + self.s) / hc))
        ax = np.arange(-m, m + 1) * hc
        n = chart.dim - 1
        if n == 1:
            raw = _graph_heights(body, chart.frame, chart.base_point, ax[:, None])
            sm = mollify(raw, Mollifier(scale=max(self.s, 2.05 * hc)), hc)
            self._spline = CubicSpline(ax, sm)
            self._eval = lambda p: self._spline(np.atleast_2d(p)[:, 0])
        else:
            gx, gy = np.meshgrid(ax, ax, indexing="ij")
            pts = np.column_stack([gx.ravel(), gy.ravel()])
            raw = _graph_heights(body, chart.frame, chart.base_point, pts)
            raw = raw.reshape(gx.shape)
            sm = mollify(raw, Mollifier(scale=max(self.s, 2.05 * hc)), hc)
            sp = RectBivariateSpline(ax, ax, sm, kx=3, ky=3)
            self._spline = sp
            self._eval = lambda p: sp.ev(np.atleast_2d(p)[:, 0],
                                         np.atleast_2d(p)[:, 1])
        self.half = half

    def __call__(self, points):
        return np.asarray(self._eval(points), dtype=float)

    def ring_min(self, radius, count=128):
        if self.chart.dim == 2:
            vals = self(np.array([[-radius], [radius]]))
            return float(np.min(vals))
        ang = np.linspace(0, 2 * np.pi, count, endpoint=False)
        ring = radius * np.column_stack([np.cos(ang), np.sin(ang)])
        return float(np.min(self(ring)))

    def domain(self, delta):
        """Sublevel solve domain {smoothed height <= delta}."""
        rho = self.chart.radius
        if self.chart.dim == 2:
            xs = np.linspace(-0.9 * rho, 0.9 * rho, 257)
            vals = self(xs[:, None]) - delta
            below = vals <= 0
            if not np.any(below):
                raise BarrierError("excision level too low: empty sublevel")
            i0, i1 = np.nonzero(below)[0][[0, -1]]
            if i0 == 0 or i1 == len(xs) - 1:
                raise BarrierError("sublevel reaches the chart edge")
            x_lo = np.interp(0.0, [vals[i0], vals[i0 - 1]], [xs[i0], xs[i0 - 1]])
            x_hi = np.interp(0.0, [vals[i1], vals[i1 + 1]], [xs[i1], xs[i1 + 1]])
            return Interval(float(x_lo), float(x_hi))
        guard = 0.9 * rho

        def level(points):
            p = np.atleast_2d(points)
            vals = self(p) - delta
            ring = np.linalg.norm(p, axis=1) - guard
            return np.maximum(vals, ring)

        half = 0.95 * rho
        return ImplicitDomain(level, -half * np.ones(2), half * np.ones(2))


def excise(state, chart, delta=None, solver_h=None, smoothing=0.0, tol=None,
           barrier_shift=1e-9, delta_fraction=0.8, model=None):
    """Replace the chart patch above the delta-sublevel by a curvature-k cap.

    Solves the Dirichlet problem with boundary value delta (as a zero-data
    problem for f - delta), checks the solution stays above the chart graph,
    and rebuilds the vertex cloud.  Returns the new state; the input state is
    never mutated.
    """
    body = state.body
    k = state.k
    n = body.dim - 1
    if model is None:
        s = max(smoothing, 2.2 * _local_spacing(body))
        model = _SmoothChartModel(body, chart, s)
    if delta is None:
        edge_min = model.ring_min(0.85 * chart.radius)
        if edge_min <= 0:
            raise BarrierError("chart too flat for an excision level")
        delta = delta_fraction * edge_min

    corners_t = np.array([-1.5, 1.5]) * max(chart.lipschitz * chart.radius,
                                            0.1 * chart.radius)

    domain = model.domain(delta)
    if solver_h is None:
        if isinstance(domain, Interval):
            solver_h = (domain.b - domain.a) / 64.0
        else:
            lo, hi = domain.bbox
            solver_h = float(np.min(hi - lo)) / 40.0

    def barrier(points):
        return model(points) - delta - barrier_shift

    prob = GraphProblem(n=n, domain=domain, h=solver_h,
                        phi=phi_for_curvature(k), weight=CurvatureWeight(n),
                        barrier=barrier, tol=tol)
    try:
        sol = solve_dirichlet(prob, require_barrier_margin=False)
    except SolverError as exc:
        raise BarrierError(f"excision solve failed: {exc}") from None

    pts = sol.points
    fvals = sol.f_interior + delta          # lift the zero-data solution
    chart_vals = model(pts)
    if np.min(fvals - chart_vals) < -1e-6 * max(1.0, float(np.max(np.abs(fvals)))):
        raise BarrierError("excision rejected: solution fell below the chart")

    # frozen-set clearance of the chart cylinder
    if chart.dim == 3:
        cyl_probe = chart.to_world(pts[:: max(1, pts.shape[0] // 64)],
                                   np.zeros(pts[:: max(1, pts.shape[0] // 64)].shape[0]))
    else:
        cyl_probe = chart.to_world(pts, np.zeros(pts.shape[0]))
    if np.any(state.frozen.contains(cyl_probe)):
        raise BarrierError("excision rejected: chart overlaps the frozen set")

    new_body = _rebuild_after_excision(body, chart, domain, sol, delta, corners_t)

    vol_before = volume(body)
    vol_after = volume(new_body)
    if vol_after > vol_before * (1.0 + 1e-9):
        raise BarrierError("excision rejected: volume increased")

    increment = hausdorff_distance(body, new_body, convention="max")
    record = {
        "base_point": chart.base_point.tolist(),
        "delta": float(delta),
        "chart_radius": float(chart.radius),
        "mollification": float(model.s),
        "volume_before": vol_before,
        "volume_after": vol_after,
        "solver_residual": sol.diagnostics["residual_sup"],
        "hausdorff_increment": increment,
    }
    return BarrierState(body=new_body, frozen=state.frozen, k=k,
                        history=state.history + [record],
                        hausdorff_increments=state.hausdorff_increments + [increment])


def _rebuild_after_excision(body, chart, domain, sol, delta, corners_t):
    xp, t = chart.to_chart(body.vertices)
    lev = domain.level(xp) if not isinstance(domain, Interval) \
        else np.maximum(domain.a - xp[:, 0], xp[:, 0] - domain.b)
    in_footprint = lev <= 0
    in_slab = (t > corners_t[0]) & (t < corners_t[1])
    cap_height = _solution_heights(sol, domain, xp, delta)
    removed = in_footprint & in_slab & (t < cap_height)
    kept = body.vertices[~removed]

    graph_world = chart.to_world(sol.points, sol.f_interior + delta)
    ring_world = _boundary_ring(chart, domain, delta)
    cloud = np.vstack([kept, graph_world, ring_world])
    # prune swallowed samples so every kept vertex lies on the boundary
    return convex_hull(cloud, dim=body.dim)


def _solution_heights(sol, domain, xp, delta):
    """Nearest-node heights of the lifted solution at chart points."""
    pts = sol.points
    tree = cKDTree(pts)
    d, idx = tree.query(np.atleast_2d(xp))
    vals = sol.f_interior[idx] + delta
    far = d > 3.0 * sol.grid.h
    vals[far] = delta          # outside the solved footprint: seam height
    return vals


def _boundary_ring(chart, domain, delta, count=96):
    if isinstance(domain, Interval):
        xs = np.array([[domain.a], [domain.b]])
        return chart.to_world(xs, np.full(2, delta))
    # trace the zero level of the domain function along rays from the centre
    angles = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    lo = np.zeros(count)
    hi = np.full(count, 0.95 * chart.radius)
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        inside = domain.level(mid[:, None] * dirs) <= 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    ring = (0.5 * (lo + hi))[:, None] * dirs
    return chart.to_world(ring, np.full(count, delta))


# ---------------------------------------------------------------------------
# the Plateau loop
# ---------------------------------------------------------------------------

def _chart_at(state, x, theta_ladder, grid_n):
    """Widest admissible chart over a ladder of slope bounds."""
    d_frozen = float(state.frozen.clearance(x[None, :])[0])
    r_cap = min(0.9 * d_frozen, state.body.diameter() / 3.0)
    best = None
    last_err = None
    for theta in theta_ladder:
        try:
            chart = extract_graph_chart(state.body, x, theta, r=r_cap,
                                        grid_n=grid_n)
        except GeometryError as exc:
            last_err = exc
            continue
        if best is None or chart.radius > best.radius:
            best = chart
    if best is None:
        raise BarrierError(f"no chart at {x.tolist()}: {last_err}")
    return best


def solve_plateau(body, frozen, k, tol_hausdorff=1e-3, tol_kappa=0.15,
                  max_iters=120, theta_ladder=(1.0, 0.85, 0.7, 0.5, 0.35),
                  chart_grid_n=49, delta_fraction=0.8, smoothing=None,
                  fit_radius=None, log=None, rng_seed=0):
    """Volume-minimising excision loop for the prescribed-boundary problem.

    Iterates classify -> chart at the worst violator -> excise, until every
    free vertex carries sampled curvature k within tolerance or the Hausdorff
    increments fall below tolerance.  Deterministic for fixed inputs.
    """
    if isinstance(frozen, FrozenBoundary):
        fz = frozen
    else:
        fz = FrozenBoundary(np.atleast_2d(frozen))
    body = convex_hull(body.vertices, dim=body.dim)
    spacing = _local_spacing(body)
    if fz.collar == 0.0:
        fz = FrozenBoundary(fz.samples, predicate=fz.predicate,
                            collar=2.0 * spacing)
    if smoothing is None:
        smoothing = 2.2 * spacing
    if fit_radius is None:
        # curvature is judged at the scale the excisions smooth to
        fit_radius = max(1.3 * smoothing, 3.5 * spacing)
    state = BarrierState(body=body, frozen=fz, k=k)
    status = "max_iters"
    for it in range(max_iters):
        tags, kappas = _classify_all(state, tol_kappa, fit_radius)
        free = (tags != "frozen")
        n_excise = int(np.sum(tags == "needs_excision"))
        n_lgp = int(np.sum(tags == "lgp_singular"))
        if log is not None:
            log({"iteration": it, "volume": volume(state.body),
                 "classification": {
                     "frozen": int(np.sum(tags == "frozen")),
                     "smooth_constant_k": int(np.sum(tags == "smooth_constant_k")),
                     "needs_excision": n_excise,
                     "lgp_singular": n_lgp},
                 "min_free_kappa": float(np.nanmin(kappas[free])) if np.any(free) else None,
                 "max_free_kappa": float(np.nanmax(kappas[free])) if np.any(free) else None})
        if n_excise == 0 and n_lgp == 0:
            status = "converged"
            break
        if n_lgp > 0:
            state, resolved = _resolve_lgp(state, tags, kappas, theta_ladder,
                                           chart_grid_n)
            if resolved:
                continue
        order = _violator_order(state, tags, kappas)
        progressed = False
        for vi in order[:24]:
            x = state.body.vertices[vi]
            try:
                chart = _chart_at(state, x, theta_ladder, chart_grid_n)
                state = excise(state, chart, smoothing=smoothing,
                               delta_fraction=delta_fraction)
                progressed = True
                break
            except BarrierError:
                continue
        if not progressed:
            status = "stalled"
            break
        if len(state.hausdorff_increments) >= 3 and \
                max(state.hausdorff_increments[-3:]) < tol_hausdorff:
            status = "hausdorff_converged"
            break
    vols = [h["volume_before"] for h in state.history] + \
        ([state.history[-1]["volume_after"]] if state.history else [])
    for a, b in zip(vols, vols[1:]):
        if b > a * (1.0 + 1e-9):
            raise BarrierError("monotonicity violated")
    tags, kappas = _classify_all(state, tol_kappa, fit_radius)
    state.summary = {
        "status": status,
        "iterations": len(state.history),
        "final_volume": volume(state.body),
        "classification": {
            "frozen": int(np.sum(tags == "frozen")),
            "smooth_constant_k": int(np.sum(tags == "smooth_constant_k")),
            "needs_excision": int(np.sum(tags == "needs_excision")),
            "lgp_singular": int(np.sum(tags == "lgp_singular")),
        },
        "free_kappa_range": [
            float(np.nanmin(kappas[tags != "frozen"])) if np.any(tags != "frozen") else None,
            float(np.nanmax(kappas[tags != "frozen"])) if np.any(tags != "frozen") else None,
        ],
    }
    return state


def _violator_order(state, tags, kappas):
    idx = np.nonzero(tags == "needs_excision")[0]
    if idx.size == 0:
        return []
    excess = kappas[idx] - state.k
    excess = np.where(np.isnan(excess), -np.inf, excess)  # unfit points last
    verts = state.body.vertices[idx]
    keys = np.round(excess, 9)
    lex = [tuple(np.round(v, 9)) for v in verts]
    order = sorted(range(idx.size), key=lambda i: (-keys[i], lex[i]))
    return idx[order]


def _resolve_lgp(state, tags, kappas, theta_ladder, chart_grid_n):
    """Comparison solve at sub-curvature k/2 to reclassify spurious
    straight-segment points; certified contradictions become excisable."""
    idx = np.nonzero(tags == "lgp_singular")[0]
    changed = False
    for vi in idx:
        x = state.body.vertices[vi]
        try:
            chart = _chart_at(state, x, theta_ladder, chart_grid_n)
            s = 2.2 * _local_spacing(state.body)
            model = _SmoothChartModel(state.body, chart, s)
            edge_min = model.ring_min(chart.radius / 2.0)
            if edge_min <= 0:
                continue
            delta = 0.45 * edge_min
            domain = model.domain(delta)
            n = state.body.dim - 1
            if isinstance(domain, Interval):
                h = (domain.b - domain.a) / 48.0
            else:
                lo, hi = domain.bbox
                h = float(np.min(hi - lo)) / 32.0
            prob = GraphProblem(
                n=n, domain=domain, h=h, phi=phi_for_curvature(state.k / 2.0),
                weight=CurvatureWeight(n),
                barrier=lambda p: model(p) - delta - 1e-9)
            sol = solve_dirichlet(prob)
            gap = sol.f_interior + delta - model(sol.points)
            if np.min(gap) < -1e-9:
                tags[vi] = "needs_excision"
                changed = True
        except (BarrierError, SolverError, GeometryError):
            continue
    return state, changed

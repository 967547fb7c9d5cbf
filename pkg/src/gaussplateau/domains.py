"""Solver domains and cut-cell grid discretisations.

Grids live on the bounding box; interior nodes are unknowns, outside nodes
adjacent to the interior become ghosts whose values extrapolate the zero
boundary data through the exact domain boundary (quadratic where a second
interior node is available, linear otherwise).  All stencil operators are
assembled once per grid as sparse matrices acting on interior unknowns.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .geometry import ConvexBody, GeometryError

__all__ = [
    "Interval",
    "Disk",
    "Polygon",
    "ImplicitDomain",
    "Grid1D",
    "Grid2D",
    "fd_weights",
    "domain_from_body",
]


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

class Interval:
    """1D domain [a, b]."""

    dim = 1

    def __init__(self, a, b):
        if not b > a:
            raise GeometryError("empty interval")
        self.a, self.b = float(a), float(b)

    @property
    def bbox(self):
        return np.array([self.a]), np.array([self.b])


class Disk:
    dim = 2

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise GeometryError("disk radius must be positive")

    @property
    def bbox(self):
        return self.center - self.radius, self.center + self.radius

    def level(self, points):
        p = np.atleast_2d(points)
        return np.linalg.norm(p - self.center, axis=1) - self.radius


class Polygon:
    dim = 2

    def __init__(self, vertices):
        self.body = ConvexBody(np.asarray(vertices, dtype=float), dim=2)
        if self.body.is_degenerate:
            raise GeometryError("polygon domain must have nonempty interior")

    @property
    def bbox(self):
        v = self.body.vertices
        return v.min(axis=0), v.max(axis=0)

    def level(self, points):
        return self.body.signed_distance(np.atleast_2d(points))


class ImplicitDomain:
    """Sublevel domain {x : fn(x) <= 0} of a continuous level function."""

    dim = 2

    def __init__(self, fn, lo, hi):
        self.fn = fn
        self._lo = np.asarray(lo, dtype=float)
        self._hi = np.asarray(hi, dtype=float)

    @property
    def bbox(self):
        return self._lo, self._hi

    def level(self, points):
        return np.asarray(self.fn(np.atleast_2d(points)), dtype=float)


def domain_from_body(body):
    """2D solver domain from a convex body (polygonal boundary)."""
    if body.dim != 2:
        raise GeometryError("domain_from_body expects a planar body")
    return Polygon(body.vertices)


# ---------------------------------------------------------------------------
# finite-difference weights (Fornberg)
# ---------------------------------------------------------------------------

def fd_weights(xs, x0, order):
    """Weights w with sum w_i f(xs_i) ~ f^(order)(x0) on arbitrary nodes."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    if order >= n:
        raise ValueError("not enough nodes for requested derivative")
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = xs[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


# ---------------------------------------------------------------------------
# 1D grid
# ---------------------------------------------------------------------------

class Grid1D:
    """Uniform grid on [a, b] with Dirichlet endpoints and selectable order."""

    def __init__(self, domain, h, order=4):
        self.domain = domain
        n_cells = int(round((domain.b - domain.a) / h))
        if n_cells < 4:
            raise GeometryError("grid too coarse")
        self.h = (domain.b - domain.a) / n_cells
        self.nodes = np.linspace(domain.a, domain.b, n_cells + 1)[:, None]
        self.n_full = n_cells + 1
        self.interior_idx = np.arange(1, n_cells)
        self.n_interior = n_cells - 1
        self.order = order
        self._build_ops()

    def _build_ops(self):
        n_int = self.n_interior
        h = self.h
        width = 2 if self.order >= 4 else 1
        rows_x, cols_x, vals_x = [], [], []
        rows_xx, cols_xx, vals_xx = [], [], []
        for i in range(n_int):
            g = i + 1  # full-grid index
            lo = max(0, g - width)
            hi = min(self.n_full - 1, g + width)
            if hi - lo < 2 * width:   # shift the stencil inward at the ends
                if lo == 0:
                    hi = min(self.n_full - 1, lo + 2 * width)
                else:
                    lo = max(0, hi - 2 * width)
            nodes = np.arange(lo, hi + 1)
            xs = nodes * h
            w1 = fd_weights(xs, g * h, 1)
            w2 = fd_weights(xs, g * h, 2)
            for node, a1, a2 in zip(nodes, w1, w2):
                if node == 0 or node == self.n_full - 1:
                    continue  # boundary value is zero
                rows_x.append(i)
                cols_x.append(node - 1)
                vals_x.append(a1)
                rows_xx.append(i)
                cols_xx.append(node - 1)
                vals_xx.append(a2)
        shape = (n_int, n_int)
        self.ops = {
            "x": sparse.csr_matrix((vals_x, (rows_x, cols_x)), shape=shape),
            "xx": sparse.csr_matrix((vals_xx, (rows_xx, cols_xx)), shape=shape),
        }

    def full_from_interior(self, f_int):
        full = np.zeros(self.n_full)
        full[1:-1] = f_int
        return full

    def interior_points(self):
        return self.nodes[self.interior_idx]


# ---------------------------------------------------------------------------
# 2D cut-cell grid
# ---------------------------------------------------------------------------

def _bisect_crossing(level_fn, inside_pts, outside_pts, iters=52):
    """Fraction theta of the segment inside->outside where the level vanishes."""
    lo = np.zeros(inside_pts.shape[0])
    hi = np.ones(inside_pts.shape[0])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pts = inside_pts + mid[:, None] * (outside_pts - inside_pts)
        neg = level_fn(pts) <= 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


class Grid2D:
    """Cut-cell grid over a 2D domain with ghost extrapolation of zero data."""

    NEIGHBOR_OFFSETS = [(-1, 0), (1, 0), (0, -1), (0, 1),
                        (-1, -1), (-1, 1), (1, -1), (1, 1)]

    def __init__(self, domain, h, pad_cells=2):
        self.domain = domain
        self.h = float(h)
        lo, hi = domain.bbox
        lo = lo - pad_cells * h
        hi = hi + pad_cells * h
        nx = int(np.ceil((hi[0] - lo[0]) / h)) + 1
        ny = int(np.ceil((hi[1] - lo[1]) / h)) + 1
        self.shape = (nx, ny)
        self.origin = lo
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        self.nodes = np.column_stack([
            lo[0] + ix.ravel() * h, lo[1] + iy.ravel() * h])
        lev = domain.level(self.nodes)
        inside = lev < -1e-12 * max(1.0, float(np.abs(lev).max()))
        self.inside = inside.reshape(nx, ny)
        self.n_full = nx * ny
        flat_inside = self.inside.ravel()
        self.interior_idx = np.nonzero(flat_inside)[0]
        self.n_interior = self.interior_idx.size
        if self.n_interior < 4:
            raise GeometryError("grid too coarse for the domain")
        self._int_of_full = -np.ones(self.n_full, dtype=int)
        self._int_of_full[self.interior_idx] = np.arange(self.n_interior)
        self._build_extension()
        self._build_ops()

    # -- ghost extension -----------------------------------------------------

    def _flat(self, i, j):
        return i * self.shape[1] + j

    def _build_extension(self):
        nx, ny = self.shape
        inside = self.inside
        rows, cols, vals = [], [], []
        counts = {}
        entries = {}

        # gather (ghost <- interior) extrapolations along all 8 directions
        int_is, int_js = np.nonzero(inside)
        for di, dj in self.NEIGHBOR_OFFSETS:
            gi = int_is + di
            gj = int_js + dj
            valid = (gi >= 0) & (gi < nx) & (gj >= 0) & (gj < ny)
            ci, cj = int_is[valid], int_js[valid]
            gi, gj = gi[valid], gj[valid]
            ghost = ~inside[gi, gj]
            if not np.any(ghost):
                continue
            ci, cj, gi, gj = ci[ghost], cj[ghost], gi[ghost], gj[ghost]
            c_pts = self.nodes[self._flat(ci, cj)]
            g_pts = self.nodes[self._flat(gi, gj)]
            theta = _bisect_crossing(self.domain.level, c_pts, g_pts)
            theta = np.clip(theta, 1e-6, 1.0)
            # second interior node along the same ray, for quadratic data
            c2i, c2j = ci - di, cj - dj
            has2 = (c2i >= 0) & (c2i < nx) & (c2j >= 0) & (c2j < ny)
            has2_in = np.zeros_like(has2)
            has2_in[has2] = inside[c2i[has2], c2j[has2]]
            for m in range(ci.size):
                g = self._flat(gi[m], gj[m])
                c = self._flat(ci[m], cj[m])
                th = theta[m]
                ent = entries.setdefault(g, [])
                if has2_in[m]:
                    c2 = self._flat(c2i[m], c2j[m])
                    ent.append(((c, -2.0 * (1.0 - th) / th),
                                (c2, (1.0 - th) / (1.0 + th))))
                else:
                    ent.append(((c, (th - 1.0) / th), None))
                counts[g] = counts.get(g, 0) + 1

        for g, ent in entries.items():
            w = 1.0 / len(ent)
            for first, second in ent:
                rows.append(g)
                cols.append(self._int_of_full[first[0]])
                vals.append(w * first[1])
                if second is not None:
                    rows.append(g)
                    cols.append(self._int_of_full[second[0]])
                    vals.append(w * second[1])

        # identity on interior nodes
        rows.extend(self.interior_idx.tolist())
        cols.extend(range(self.n_interior))
        vals.extend([1.0] * self.n_interior)
        self.extension = sparse.csr_matrix(
            (vals, (rows, cols)), shape=(self.n_full, self.n_interior))
        self.ghost_idx = np.array(sorted(entries.keys()), dtype=int)

    # -- stencils ------------------------------------------------------------

    def _stencil(self, offsets_weights):
        nx, ny = self.shape
        rows, cols, vals = [], [], []
        int_is = self.interior_idx // ny
        int_js = self.interior_idx % ny
        for (di, dj), w in offsets_weights:
            rows.extend(range(self.n_interior))
            cols.extend((self._flat(int_is + di, int_js + dj)).tolist())
            vals.extend([w] * self.n_interior)
        s = sparse.csr_matrix((vals, (rows, cols)),
                              shape=(self.n_interior, self.n_full))
        return s

    def _build_ops(self):
        h = self.h
        sx = self._stencil([((1, 0), 1 / (2 * h)), ((-1, 0), -1 / (2 * h))])
        sy = self._stencil([((0, 1), 1 / (2 * h)), ((0, -1), -1 / (2 * h))])
        sxx = self._stencil([((1, 0), 1 / h ** 2), ((-1, 0), 1 / h ** 2),
                             ((0, 0), -2 / h ** 2)])
        syy = self._stencil([((0, 1), 1 / h ** 2), ((0, -1), 1 / h ** 2),
                             ((0, 0), -2 / h ** 2)])
        sxy = self._stencil([((1, 1), 1 / (4 * h ** 2)), ((-1, -1), 1 / (4 * h ** 2)),
                             ((1, -1), -1 / (4 * h ** 2)), ((-1, 1), -1 / (4 * h ** 2))])
        e = self.extension
        self.ops = {
            "x": (sx @ e).tocsr(),
            "y": (sy @ e).tocsr(),
            "xx": (sxx @ e).tocsr(),
            "yy": (syy @ e).tocsr(),
            "xy": (sxy @ e).tocsr(),
        }

    def full_from_interior(self, f_int):
        return self.extension @ f_int

    def interior_points(self):
        return self.nodes[self.interior_idx]

    def interior_grid_values(self, f_int, fill=np.nan):
        full = np.full(self.n_full, fill)
        full[self.interior_idx] = f_int
        return full.reshape(self.shape)

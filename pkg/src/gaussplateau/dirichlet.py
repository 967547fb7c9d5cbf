"""Dirichlet solver for the strictly convex curvature equation.

Solves det(D^2 f)^(1/n) = phi * G(Df) with zero boundary data by Newton
continuation: the gradient weight is interpolated to the trivial weight and
the right-hand side to the one solved exactly by a shrunk copy of the lower
barrier, then both are marched back along a uniform schedule with adaptive
bisection.  A-priori bound monitors (zeroth/first order against the barrier,
interior |f|*|D^2 f|) ride along as diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .domains import Disk, Grid1D, Grid2D, Interval
from .geometry import GeometryError

__all__ = [
    "SolverError",
    "UnitWeight",
    "CurvatureWeight",
    "phi_for_curvature",
    "cap_profile",
    "GraphProblem",
    "GraphSolution",
    "LinearizedOperator",
    "F_value_and_derivative",
    "gaussian_curvature_of_graph",
    "assemble_linearization",
    "solve_dirichlet",
    "verify_bounds",
    "holder_seminorm",
    "curvature_problem",
]

DAMPING_FLOOR = 2.0 ** -20
HESSIAN_CLAMP = 1e-10
SOFTMAX_SHARPNESS = 1e3


class SolverError(RuntimeError):
    """Raised when the continuation or its preconditions fail."""


# ---------------------------------------------------------------------------
# gradient weights
# ---------------------------------------------------------------------------

class UnitWeight:
    """G == 1 (plain determinant equation)."""

    def value(self, xi):
        return np.ones(np.atleast_2d(xi).shape[0])

    def grad(self, xi):
        return np.zeros_like(np.atleast_2d(xi))


class CurvatureWeight:
    """G(xi) = (1 + |xi|^2)^((n+2)/(2n)): the graph-curvature weight."""

    def __init__(self, n):
        self.n = n
        self.p = (n + 2) / (2.0 * n)

    def value(self, xi):
        xi = np.atleast_2d(xi)
        return (1.0 + np.sum(xi ** 2, axis=1)) ** self.p

    def grad(self, xi):
        xi = np.atleast_2d(xi)
        s = 1.0 + np.sum(xi ** 2, axis=1)
        return (2.0 * self.p) * (s ** (self.p - 1.0))[:, None] * xi


class _PathWeight:
    """Interpolated weight t*G + (1-t)."""

    def __init__(self, weight, t):
        self.weight = weight
        self.t = t

    def value(self, xi):
        return self.t * self.weight.value(xi) + (1.0 - self.t)

    def grad(self, xi):
        return self.t * self.weight.grad(xi)


def phi_for_curvature(k):
    """Right-hand side producing a curvature-k hypersurface (radius 1/sqrt(k))."""
    if k <= 0:
        raise SolverError("curvature target must be positive")
    return math.sqrt(k)


def cap_profile(k, rim_radius):
    """Closed-form spherical cap of curvature k over a centred disk/interval.

    Returns (fn, depth): fn(r2) = sqrt(R^2 - a^2) - sqrt(R^2 - r2) with
    R = 1/sqrt(k), vanishing at |x| = rim_radius.
    """
    r_sphere = 1.0 / math.sqrt(k)
    if r_sphere <= rim_radius:
        raise SolverError("no admissible lower barrier: curvature too large for the domain")
    c = math.sqrt(r_sphere ** 2 - rim_radius ** 2)

    def fn(r2):
        return c - np.sqrt(r_sphere ** 2 - r2)

    return fn, r_sphere - c


# ---------------------------------------------------------------------------
# matrix cone helpers
# ---------------------------------------------------------------------------

def F_value_and_derivative(a):
    """det(A)^(1/n) and its derivative (1/n) F(A) A^(-1) on the PD cone."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise SolverError("matrix outside the positive-definite cone") from None
    f = float(np.linalg.det(a)) ** (1.0 / n)
    df = (f / n) * np.linalg.inv(a)
    return f, df


def gaussian_curvature_of_graph(f, x, step=1e-5):
    """Extrinsic curvature det(D^2 f)/(1+|Df|^2)^((n+2)/2) of a graph.

    ``f`` is a callable probe or a GraphSolution; for solutions the value is
    taken at the nearest interior node (boundary nodes are rejected).
    """
    if isinstance(f, GraphSolution):
        return f.curvature_at(x)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        grad[i] = (f(x + ei) - f(x - ei)) / (2 * step)
        hess[i, i] = (f(x + ei) - 2 * f(x) + f(x - ei)) / step ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = step
            hess[i, j] = hess[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * step ** 2)
    det = float(np.linalg.det(hess))
    return det / (1.0 + float(grad @ grad)) ** ((n + 2) / 2.0)


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

@dataclass
class GraphProblem:
    """Dirichlet instance on a convex domain with zero boundary data."""

    n: int
    domain: object
    h: float
    phi: object                       # scalar | callable | interior array
    weight: object = None             # gradient weight G >= 1
    barrier: object = ("auto-cap", 1.2)
    tol: float = None
    grid_order: int = 2               # 1D stencil order; 4 available

    def __post_init__(self):
        if self.n not in (1, 2):
            raise SolverError("graph dimension must be 1 or 2")
        if self.weight is None:
            self.weight = CurvatureWeight(self.n)
        if self.tol is None:
            self.tol = 1e-8 if self.n == 1 else 1e-6

    def build_grid(self):
        if self.n == 1:
            if not isinstance(self.domain, Interval):
                raise SolverError("1D problems need an Interval domain")
            return Grid1D(self.domain, self.h, order=self.grid_order)
        return Grid2D(self.domain, self.h)

    def phi_values(self, points):
        if callable(self.phi):
            return np.asarray(self.phi(points), dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim == 0:
            return np.full(points.shape[0], float(phi))
        if phi.shape[0] != points.shape[0]:
            raise SolverError("phi array does not match the interior grid")
        return phi

    def barrier_values(self, points):
        spec = self.barrier
        if isinstance(spec, tuple) and spec and spec[0] == "auto-cap":
            scale = float(spec[1]) if len(spec) > 1 else 1.2
            return self._auto_cap(points, scale)
        if callable(spec):
            return np.asarray(spec(points), dtype=float)
        arr = np.asarray(spec, dtype=float)
        if arr.shape[0] != points.shape[0]:
            raise SolverError("barrier grid does not match the interior grid")
        return arr

    def _auto_cap(self, points, scale):
        phi_min = float(np.min(self.phi_values(points)))
        k = phi_min ** 2
        if self.n == 1:
            a, b = self.domain.a, self.domain.b
            half = 0.5 * (b - a)
            mid = 0.5 * (a + b)
            fn, _ = cap_profile(k, half)
            return scale * fn((points[:, 0] - mid) ** 2)
        if isinstance(self.domain, Disk):
            fn, _ = cap_profile(k, self.domain.radius)
            r2 = np.sum((points - self.domain.center) ** 2, axis=1)
            return scale * fn(r2)
        raise SolverError("auto-cap barrier needs a disk domain; supply a barrier grid")


def curvature_problem(n, domain, h, k, barrier_scale=1.2, tol=None):
    """Constant-curvature instance: phi = sqrt(k), graph-curvature weight."""
    return GraphProblem(n=n, domain=domain, h=h, phi=phi_for_curvature(k),
                        weight=CurvatureWeight(n), barrier=("auto-cap", barrier_scale),
                        tol=tol)


# ---------------------------------------------------------------------------
# discrete fields
# ---------------------------------------------------------------------------

class _Fields:
    """Derivative fields of an interior-unknown vector on a grid."""

    def __init__(self, grid, n):
        self.grid = grid
        self.n = n

    def __call__(self, f_int):
        ops = self.grid.ops
        if self.n == 1:
            fx = ops["x"] @ f_int
            fxx = ops["xx"] @ f_int
            return {"grad": fx[:, None], "fxx": fxx}
        fx = ops["x"] @ f_int
        fy = ops["y"] @ f_int
        fxx = ops["xx"] @ f_int
        fyy = ops["yy"] @ f_int
        fxy = ops["xy"] @ f_int
        return {"grad": np.column_stack([fx, fy]),
                "fxx": fxx, "fyy": fyy, "fxy": fxy}

    def in_cone(self, d):
        if self.n == 1:
            return bool(np.all(d["fxx"] > 0))
        det = d["fxx"] * d["fyy"] - d["fxy"] ** 2
        return bool(np.all(d["fxx"] > 0) and np.all(det > 0))

    def f_of(self, d):
        if self.n == 1:
            return d["fxx"]
        det = d["fxx"] * d["fyy"] - d["fxy"] ** 2
        return np.sqrt(np.maximum(det, 0.0))

    def hessian_array(self, d):
        m = d["fxx"].shape[0]
        h = np.empty((m, self.n, self.n))
        if self.n == 1:
            h[:, 0, 0] = d["fxx"]
        else:
            h[:, 0, 0] = d["fxx"]
            h[:, 1, 1] = d["fyy"]
            h[:, 0, 1] = h[:, 1, 0] = d["fxy"]
        return h


def _residual(fields, d, phi, weight):
    return fields.f_of(d) - phi * weight.value(d["grad"])


def _linearization_matrix(grid, fields, d, phi, weight):
    ops = grid.ops
    n = fields.n
    if n == 1:
        b11 = np.ones_like(d["fxx"])
        gw = phi * weight.grad(d["grad"])[:, 0]
        mat = sparse.diags(b11) @ ops["xx"] - sparse.diags(gw) @ ops["x"]
        b_field = b11[:, None, None]
    else:
        fxx = np.maximum(d["fxx"], HESSIAN_CLAMP)
        fyy = np.maximum(d["fyy"], HESSIAN_CLAMP)
        det = np.maximum(fxx * fyy - d["fxy"] ** 2, HESSIAN_CLAMP ** 2)
        root = np.sqrt(det)
        b11 = fyy / (2.0 * root)
        b22 = fxx / (2.0 * root)
        b12 = -d["fxy"] / (2.0 * root)
        gw = phi[:, None] * weight.grad(d["grad"])
        mat = (sparse.diags(b11) @ ops["xx"] + sparse.diags(b22) @ ops["yy"]
               + sparse.diags(2.0 * b12) @ ops["xy"]
               - sparse.diags(gw[:, 0]) @ ops["x"] - sparse.diags(gw[:, 1]) @ ops["y"])
        m = b11.shape[0]
        b_field = np.empty((m, 2, 2))
        b_field[:, 0, 0] = b11
        b_field[:, 1, 1] = b22
        b_field[:, 0, 1] = b_field[:, 1, 0] = b12
    return mat.tocsc(), b_field


@dataclass
class LinearizedOperator:
    """Sparse elliptic linearisation with its coefficient fields."""

    matrix: sparse.spmatrix
    coefficients: np.ndarray          # (N, n, n) second-order coefficients
    first_order: np.ndarray           # (N, n) gradient-term coefficients
    trace_lower: np.ndarray           # per-node trace of the DF coefficients

    def apply(self, g_int):
        return self.matrix @ g_int


def assemble_linearization(sol, prob=None):
    """Linearised operator at a solution (or interior iterate) of a problem."""
    if isinstance(sol, GraphSolution):
        f_int, grid, problem = sol.f_interior, sol.grid, sol.problem
    else:
        f_int, grid, problem = np.asarray(sol, dtype=float), None, prob
    if problem is None:
        raise SolverError("a problem is required to assemble the linearisation")
    if grid is None:
        grid = problem.build_grid()
    fields = _Fields(grid, problem.n)
    d = fields(f_int)
    if not fields.in_cone(d):
        raise SolverError("iterate left the positive-definite cone")
    pts = grid.interior_points()
    phi = problem.phi_values(pts)
    mat, b_field = _linearization_matrix(grid, fields, d, phi, problem.weight)
    gw = phi[:, None] * problem.weight.grad(d["grad"])
    trace = np.trace(b_field, axis1=1, axis2=2)
    return LinearizedOperator(matrix=mat, coefficients=b_field,
                              first_order=-gw, trace_lower=trace)


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------

@dataclass
class GraphSolution:
    """Discrete strictly convex solution with derived fields and monitors."""

    problem: GraphProblem
    grid: object
    f_interior: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray
    residual: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def points(self):
        return self.grid.interior_points()

    @property
    def f_full(self):
        return self.grid.full_from_interior(self.f_interior)

    def hessian_norms(self):
        return np.linalg.norm(self.hessian, ord=2, axis=(1, 2))

    def curvature_field(self):
        det = np.linalg.det(self.hessian)
        g2 = np.sum(self.gradient ** 2, axis=1)
        return det / (1.0 + g2) ** ((self.problem.n + 2) / 2.0)

    def curvature_at(self, x):
        pts = self.points
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d2 = np.sum((pts - x[None, :]) ** 2, axis=1)
        idx = int(np.argmin(d2))
        if d2[idx] > (2.0 * self.grid.h) ** 2:
            raise SolverError("probe point is not an interior node")
        return float(self.curvature_field()[idx])

    def value_at(self, x):
        pts = self.points
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = int(np.argmin(np.sum((pts - x[None, :]) ** 2, axis=1)))
        return float(self.f_interior[idx])


def _make_diagnostics(problem, grid, fields, f_int):
    d = fields(f_int)
    grad = d["grad"]
    hess = fields.hessian_array(d)
    hnorm = np.linalg.norm(hess, ord=2, axis=(1, 2))
    lam_max = np.linalg.eigvalsh(hess)[:, -1]
    return d, grad, hess, {
        "sup_abs_f": float(np.max(np.abs(f_int))),
        "sup_grad": float(np.max(np.linalg.norm(grad, axis=1))),
        "sup_hessian": float(np.max(hnorm)),
        "pogorelov": float(np.max(np.abs(f_int) * hnorm)),
        "lambda_max": lam_max,
        "hessian_asymmetry": 0.0,     # centred stencils give symmetric Hessians
    }


# ---------------------------------------------------------------------------
# Newton + continuation
# ---------------------------------------------------------------------------

def _newton(grid, fields, f, phi, weight, tol, max_iter=40):
    d = fields(f)
    if not fields.in_cone(d):
        raise SolverError("initial iterate left the positive-definite cone")
    res = _residual(fields, d, phi, weight)
    norm = float(np.max(np.abs(res)))
    iters = 0
    while norm > tol:
        if iters >= max_iter:
            raise SolverError(f"Newton stalled at residual {norm:.3e}")
        mat, _ = _linearization_matrix(grid, fields, d, phi, weight)
        delta = spsolve(mat, -res)
        lam = 1.0
        while True:
            f_new = f + lam * delta
            d_new = fields(f_new)
            if fields.in_cone(d_new):
                res_new = _residual(fields, d_new, phi, weight)
                norm_new = float(np.max(np.abs(res_new)))
                if norm_new < norm or norm_new <= tol:
                    break
            lam *= 0.5
            if lam < DAMPING_FLOOR:
                raise SolverError("Newton damping floor reached")
        f, d, res, norm = f_new, d_new, res_new, norm_new
        iters += 1
    return f, norm, iters


def _softmax3(a, b, c, beta=SOFTMAX_SHARPNESS):
    return np.logaddexp(np.logaddexp(beta * a, beta * b), beta * c) / beta


def _pick_delta(margins, ts, anchor):
    """Largest admissible decay constant from sweep margins.

    ``anchor`` = 0 uses factors (1 - t/delta), anchor = 1 uses
    (1 - (1-t)/delta); margins are min-over-grid ratios that must dominate.
    """
    delta = 1.0
    for t, m in zip(ts, margins):
        s = t if anchor == 0 else 1.0 - t
        if m < 1.0 and s > 0:
            delta = min(delta, 0.9 * s / (1.0 - m))
    return max(delta, 1e-6)


def solve_dirichlet(prob, tol=None, max_newton=40, alpha=0.5, t_step=1.0 / 16.0,
                    min_t_step=2.0 ** -12, require_barrier_margin=True,
                    callback=None):
    """Continuation solve of the Dirichlet problem above its lower barrier.

    ``require_barrier_margin=False`` lets the continuation proceed with a
    non-positive subsolution margin (the schedule remains well defined and
    the final residual check is unconditional); used for chart-derived
    barriers whose curvature touches the target exactly.
    """
    tol = prob.tol if tol is None else tol
    grid = prob.build_grid()
    fields = _Fields(grid, prob.n)
    pts = grid.interior_points()
    phi = prob.phi_values(pts)
    if np.any(phi <= 0):
        raise SolverError("phi must be positive")

    fhat = prob.barrier_values(pts)
    dhat = fields(fhat)
    if not fields.in_cone(dhat):
        raise SolverError("no admissible lower barrier: barrier not strictly convex")
    f_hat_field = fields.f_of(dhat)
    g_hat_full = prob.weight.value(dhat["grad"])
    barrier_margin = float(np.min(f_hat_field - phi * g_hat_full))
    if barrier_margin <= 0 and require_barrier_margin:
        raise SolverError("no admissible lower barrier")

    phi0 = alpha * f_hat_field          # exact for the shrunk barrier (homogeneity)

    ts_sweep = np.linspace(0.0, 1.0, 65)
    m0, m1 = [], []
    for t in ts_sweep:
        gt = _PathWeight(prob.weight, t).value(dhat["grad"])
        ratio = f_hat_field / gt
        m0.append(float(np.min(ratio / phi0)))
        m1.append(float(np.min(ratio / phi)))
    delta0 = _pick_delta(m0, ts_sweep, anchor=0)
    delta1 = _pick_delta(m1, ts_sweep, anchor=1)
    eps = 0.9 * min(float(np.min(phi)), float(np.min(phi0)))

    def phi_t(t):
        a = (1.0 - t / delta0) * phi0
        b = (1.0 - (1.0 - t) / delta1) * phi
        c = np.full_like(phi, eps)
        if t <= 0.0 or t >= 1.0:
            return np.maximum(np.maximum(a, b), c)
        return _softmax3(a, b, c)

    f = alpha * fhat
    t = 0.0
    newton_total = 0
    schedule = [0.0]
    while t < 1.0:
        t_next = min(1.0, t + t_step)
        step = t_next - t
        while True:
            try:
                f_new, res_norm, its = _newton(
                    grid, fields, f, phi_t(t_next), _PathWeight(prob.weight, t_next),
                    max(tol, 1e-11), max_iter=max_newton)
                break
            except SolverError:
                step *= 0.5
                if step < min_t_step:
                    raise SolverError(f"continuation stalled at t={t:.6f}") from None
                t_next = t + step
        f, t = f_new, t_next
        newton_total += its
        schedule.append(t)
        if callback is not None:
            callback(t, res_norm)

    # final solve on the exact data
    f, res_norm, its = _newton(grid, fields, f, phi, prob.weight, tol,
                               max_iter=max_newton)
    newton_total += its

    d, grad, hess, diag = _make_diagnostics(prob, grid, fields, f)
    res = _residual(fields, d, phi, prob.weight)
    diag.update({
        "residual_sup": float(np.max(np.abs(res))),
        "newton_iterations": newton_total,
        "t_schedule": schedule,
        "barrier_margin": barrier_margin,
        "delta0": delta0,
        "delta1": delta1,
        "epsilon_floor": eps,
        "above_barrier": bool(np.all(f >= fhat - 1e-9 * max(1.0, diag["sup_abs_f"]))),
        "tolerance": tol,
    })
    return GraphSolution(problem=prob, grid=grid, f_interior=f, gradient=grad,
                         hessian=hess, residual=res, diagnostics=diag)


# ---------------------------------------------------------------------------
# monitors
# ---------------------------------------------------------------------------

def verify_bounds(sol, prob=None):
    """A-priori bound report for a solution against its lower barrier."""
    prob = sol.problem if prob is None else prob
    grid = sol.grid
    fields = _Fields(grid, prob.n)
    pts = grid.interior_points()
    fhat = prob.barrier_values(pts)
    dhat = fields(fhat)
    ghat = np.linalg.norm(dhat["grad"], axis=1)
    gsol = np.linalg.norm(sol.gradient, axis=1)
    hnorm = sol.hessian_norms()
    report = {
        "sup_abs_f": float(np.max(np.abs(sol.f_interior))),
        "sup_abs_barrier": float(np.max(np.abs(fhat))),
        "sup_grad_f": float(np.max(gsol)),
        "sup_grad_barrier": float(np.max(ghat)),
        "pogorelov": float(np.max(np.abs(sol.f_interior) * hnorm)),
        "max_f": float(np.max(sol.f_interior)),
    }
    report["c0_ok"] = report["sup_abs_f"] <= report["sup_abs_barrier"] + 1e-12
    report["c1_ok"] = report["sup_grad_f"] <= report["sup_grad_barrier"] + 1e-12
    report["max_on_boundary_ok"] = report["max_f"] <= 1e-12
    return report


def holder_seminorm(values, points, alpha, sample_pairs=200000, seed=0):
    """Discrete Hoelder quotient sup |f(x)-f(y)| / |x-y|^alpha over node pairs."""
    if not (0.0 < alpha <= 1.0):
        raise SolverError("alpha must lie in (0, 1]")
    v = np.asarray(values, dtype=float)
    p = np.atleast_2d(np.asarray(points, dtype=float))
    m = v.shape[0]
    if m * (m - 1) // 2 <= sample_pairs:
        i, j = np.triu_indices(m, k=1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, m, size=sample_pairs)
        j = rng.integers(0, m, size=sample_pairs)
        keep = i != j
        i, j = i[keep], j[keep]
    num = np.abs(v[i] - v[j])
    den = np.linalg.norm(p[i] - p[j], axis=1) ** alpha
    return float(np.max(num / den)) if num.size else 0.0

"""Damage update with a Lipschitz slope bound.

Each step minimizes the incremental energy in the damage variable under three
constraint families: irreversibility (d cannot decrease), the cap d <= 1, and
a slope limit |d_i - d_j| <= edge_length / lc on every dual-graph edge. The
solve is split exactly as the bound estimates allow: an unconstrained local
minimization per element, shortest-path upper and lower bounds on the
constrained solution, and a convex program restricted to the connected
regions where the bounds still disagree. Everywhere else the local solution
is already optimal.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.sparse.linalg import spsolve

from .material import MaterialParams
from .mesh import LipMesh, Mesh

GAP_TOL = 1e-9  # bounds closer than this count as equal
KKT_TOL = 1e-8  # acceptance threshold for the region-solve optimality residual
LOCAL_TOL = 1e-12  # bracket width for the scalar local minimization


class RegionSolveError(RuntimeError):
    """Constrained region minimization failed to reach the required residual."""

    def __init__(self, region_index: int, residual: float, status: str):
        self.region_index = region_index
        self.residual = residual
        super().__init__(
            f"region {region_index}: solver status {status!r}, "
            f"optimality residual {residual:.3e} exceeds tolerance"
        )


# Raw polynomial forms of the constitutive functions, without the [0, 1]
# domain check of the material module: interior-point iterates may step
# marginally outside the box before the constraints pull them back.
def _g(d):
    return (1.0 - d) ** 2 + 0.1 * (1.0 - d) * d**3


def _dg(d):
    return -2.0 * (1.0 - d) + 0.1 * (3.0 * d * d - 4.0 * d**3)


def _ddg(d):
    return 2.0 + 0.6 * d - 1.2 * d * d


def _h(d):
    return 2.0 * d + 3.0 * d * d


def _dh(d):
    return 2.0 + 6.0 * d


@dataclass(frozen=True)
class DamageState:
    """Damage fields of one time step.

    ``d_n`` is the committed field of the previous step, ``d_loc`` the
    element-local minimizer, ``d_lower``/``d_upper`` the slope-bound
    estimates bracketing the constrained solution, and ``d`` the committed
    result satisfying ``d_n <= d_lower <= d <= d_upper <= 1``.
    """

    d: np.ndarray
    d_n: np.ndarray
    d_loc: np.ndarray
    d_lower: np.ndarray
    d_upper: np.ndarray

    @classmethod
    def initial(cls, n_elements: int, d0: np.ndarray | None = None) -> "DamageState":
        d = np.zeros(n_elements) if d0 is None else np.asarray(d0, dtype=float).copy()
        return cls(d=d, d_n=d.copy(), d_loc=d.copy(), d_lower=d.copy(), d_upper=d.copy())

    def advanced(self) -> "DamageState":
        """Commit ``d`` as the new previous-step field."""
        return replace(self, d_n=self.d.copy())


@dataclass(frozen=True)
class LipRegion:
    """A connected set of elements whose bound estimates disagree.

    ``edges`` couple local variable indices; constraints to elements outside
    the region use the frozen outside value and fold into per-variable boxes.
    """

    index: int
    elements: np.ndarray  # global element ids, sorted
    edges: np.ndarray  # (k, 2) local indices
    edge_limit: np.ndarray  # (k,) allowed |difference| per edge
    frozen_local: np.ndarray  # (q,) local index coupled to a frozen neighbor
    frozen_value: np.ndarray  # (q,) damage of that neighbor
    frozen_limit: np.ndarray  # (q,) allowed |difference|

    @property
    def size(self) -> int:
        return len(self.elements)


def _box_minimize(e_plus, yc, lo, hi, tol=LOCAL_TOL, max_iter=200):
    """Per-element minimizer of g(d) e_plus + yc h(d) over [lo, hi].

    The objective is strictly convex (its second derivative is bounded below
    by 6 yc), so the sign of the slope at the box ends decides between the
    ends and a safeguarded Newton search on the interior root of the slope.
    """
    e_plus = np.asarray(e_plus, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def slope(x):
        return e_plus * _dg(x) + yc * _dh(x)

    x = np.where(slope(lo) >= 0.0, lo, np.where(slope(hi) <= 0.0, hi, np.nan))
    free = np.isnan(x)
    if free.any():
        a = lo[free].copy()
        b = hi[free].copy()
        ep = e_plus[free]
        xm = 0.5 * (a + b)
        for _ in range(max_iter):
            fp = ep * _dg(xm) + yc * _dh(xm)
            pos = fp > 0.0
            b = np.where(pos, xm, b)
            a = np.where(pos, a, xm)
            if (b - a).max() < tol:
                break
            step = fp / (ep * _ddg(xm) + 6.0 * yc)
            xn = xm - step
            inside = (xn > a) & (xn < b)
            xm = np.where(inside, xn, 0.5 * (a + b))
        x[free] = 0.5 * (a + b)
    return x


def local_damage_field(e_plus, d_n, yc: float, tol: float = LOCAL_TOL) -> np.ndarray:
    """Element-wise minimization ignoring the slope constraints."""
    e_plus = np.asarray(e_plus, dtype=float)
    d_n = np.asarray(d_n, dtype=float)
    if e_plus.size and e_plus.min() < 0.0:
        raise ValueError(f"negative tensile energy density: {e_plus.min()}")
    if d_n.size and (d_n.min() < 0.0 or d_n.max() > 1.0):
        raise ValueError("previous damage out of [0, 1]")
    return _box_minimize(e_plus, yc, d_n, np.ones_like(d_n), tol=tol)


def local_damage_solve(e_plus: float, d_n: float, yc: float, tol: float = LOCAL_TOL) -> float:
    """Scalar form of :func:`local_damage_field`."""
    return float(local_damage_field(np.array([e_plus]), np.array([d_n]), yc, tol=tol)[0])


class BoundsSolver:
    """Shortest-path bounds on the slope-constrained minimizer.

    The lower bound ``min_y (d_loc(y) + dist(x, y) / lc)`` is a single-source
    shortest path on the dual graph extended by a virtual vertex connected to
    every vertex ``y`` with weight ``d_loc(y)``; the upper bound uses weight
    ``1 - d_loc(y)`` and flips the result. The sparse structure is built once
    and only the virtual-edge weights change between calls.
    """

    def __init__(self, lip: LipMesh, lc: float):
        if lc <= 0.0:
            raise ValueError(f"length scale must be positive, got {lc}")
        self.lip = lip
        self.lc = lc
        n = lip.n_vertices
        e = lip.edges
        w = lip.edge_length / lc
        self._n = n
        rows = np.concatenate([e[:, 0], e[:, 1], np.full(n, n, dtype=np.int64)])
        cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n, dtype=np.int64)])
        self._rows = rows
        self._cols = cols
        self._static = np.concatenate([w, w])

    def _distance_from_virtual(self, seed_weights: np.ndarray) -> np.ndarray:
        n = self._n
        data = np.concatenate([self._static, seed_weights])
        graph = sp.coo_matrix((data, (self._rows, self._cols)), shape=(n + 1, n + 1)).tocsr()
        dist = dijkstra(graph, directed=True, indices=n)
        return dist[:n]

    def compute(self, d_loc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d_loc = np.asarray(d_loc, dtype=float)
        if d_loc.shape != (self._n,):
            raise ValueError(f"damage field has shape {d_loc.shape}, expected ({self._n},)")
        lower = self._distance_from_virtual(d_loc)
        upper = 1.0 - self._distance_from_virtual(1.0 - d_loc)
        # restore the exact bracketing that holds in exact arithmetic
        lower = np.clip(np.minimum(lower, d_loc), 0.0, 1.0)
        upper = np.clip(np.maximum(upper, d_loc), 0.0, 1.0)
        return lower, upper


def compute_bounds(lip: LipMesh, d_loc, lc: float) -> tuple[np.ndarray, np.ndarray]:
    """One-shot bound computation (see :class:`BoundsSolver`)."""
    return BoundsSolver(lip, lc).compute(d_loc)


def extract_regions(
    lip: LipMesh, d_loc, d_lower, d_upper, gap_tol: float = GAP_TOL
) -> list[LipRegion]:
    """Connected components of the set where the bounds disagree."""
    d_loc = np.asarray(d_loc, dtype=float)
    gap = np.asarray(d_upper) - np.asarray(d_lower) > gap_tol
    if not gap.any():
        return []
    idx = np.nonzero(gap)[0]
    sub = lip.adjacency()[idx][:, idx]
    n_comp, labels = connected_components(sub, directed=False)

    comp = np.full(lip.n_vertices, -1, dtype=np.int64)
    comp[idx] = labels
    local = np.full(lip.n_vertices, -1, dtype=np.int64)
    elements = []
    for c in range(n_comp):
        els = idx[labels == c]
        local[els] = np.arange(len(els))
        elements.append(els)

    inner: list[list] = [[] for _ in range(n_comp)]
    inner_lim: list[list] = [[] for _ in range(n_comp)]
    froz: list[list] = [[] for _ in range(n_comp)]
    froz_val: list[list] = [[] for _ in range(n_comp)]
    froz_lim: list[list] = [[] for _ in range(n_comp)]
    e0 = lip.edges[:, 0]
    e1 = lip.edges[:, 1]
    limit_all = lip.edge_length  # scaled by 1/lc by the caller's solver
    touched = np.nonzero(gap[e0] | gap[e1])[0]
    for k in touched:
        a, b = e0[k], e1[k]
        if gap[a] and gap[b]:
            c = comp[a]
            inner[c].append((local[a], local[b]))
            inner_lim[c].append(limit_all[k])
        elif gap[a]:
            c = comp[a]
            froz[c].append(local[a])
            froz_val[c].append(d_loc[b])
            froz_lim[c].append(limit_all[k])
        else:
            c = comp[b]
            froz[c].append(local[b])
            froz_val[c].append(d_loc[a])
            froz_lim[c].append(limit_all[k])

    regions = []
    for c in range(n_comp):
        regions.append(
            LipRegion(
                index=c,
                elements=elements[c],
                edges=np.array(inner[c], dtype=np.int64).reshape(-1, 2),
                edge_limit=np.array(inner_lim[c], dtype=float),
                frozen_local=np.array(froz[c], dtype=np.int64),
                frozen_value=np.array(froz_val[c], dtype=float),
                frozen_limit=np.array(froz_lim[c], dtype=float),
            )
        )
    return regions


def _region_boxes(region: LipRegion, state: DamageState, lc: float):
    """Per-variable lower/upper caps including folded frozen-edge constraints."""
    els = region.elements
    lo = np.maximum(state.d_n[els], state.d_lower[els])
    hi = np.minimum(1.0, state.d_upper[els])
    if len(region.frozen_local):
        lim = region.frozen_limit / lc
        np.maximum.at(lo, region.frozen_local, region.frozen_value - lim)
        np.minimum.at(hi, region.frozen_local, region.frozen_value + lim)
    bad = lo > hi + 1e-10
    if bad.any():
        k = int(np.nonzero(bad)[0][0])
        raise RegionSolveError(
            region.index, float((lo - hi)[k]), f"empty box for element {els[k]}"
        )
    return lo, np.maximum(hi, lo)


def _active_set_polish(x, z, w, ep, yc, g_sp, h_arr, ei, ej, n, m, max_newton=4):
    """Refine an interior-point iterate by Newton steps on its active set.

    An interior-point solver stops a mean-gap short of the constraints it
    ends up on, which leaves flat (small-area) elements visibly off the
    optimum. This guesses the active set from complementarity, restores the
    active constraints exactly and re-solves the stationarity system on that
    manifold. Returns the improved primal/dual pair, or None when the guess
    fails a rank, step-size, sign or feasibility check; the caller keeps
    whichever point has the smaller optimality residual.
    """
    import warnings

    slack = g_sp @ x - h_arr
    active = z > -slack
    # Active rows are often linearly dependent: a bound produced by a
    # shortest path is pinned both by its box row and by the active edges
    # along the path. A maximal independent subset is a spanning forest of
    # active edges plus at most one box anchor per tree; any further row
    # only splits the same multipliers. Prefer rows with larger z.
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    keep = np.zeros(active.size, dtype=bool)
    edge_rows = np.where(active[2 * n :])[0] + 2 * n
    edge_rows = edge_rows[np.argsort(-z[edge_rows], kind="stable")]
    for r in edge_rows:
        k = (r - 2 * n) % m
        ra, rb = find(ei[k]), find(ej[k])
        if ra != rb:
            parent[ra] = rb
            keep[r] = True
    anchored = np.zeros(n, dtype=bool)
    box_rows = np.where(active[: 2 * n])[0]
    box_rows = box_rows[np.argsort(-z[box_rows], kind="stable")]
    for r in box_rows:
        root = find(r % n)
        if not anchored[root]:
            anchored[root] = True
            keep[r] = True

    a_mat = g_sp[keep].tocsc()
    b_vec = h_arr[keep]
    na = a_mat.shape[0]
    x = x.copy()
    nu = np.zeros(na)
    for _ in range(max_newton):
        grad = w * (_dg(x) * ep + yc * _dh(x))
        hdiag = w * (_ddg(x) * ep + 6.0 * yc)
        if na:
            kkt = sp.bmat([[sp.diags(hdiag), a_mat.T], [a_mat, None]], format="csc")
            rhs = np.concatenate([-grad, b_vec - a_mat @ x])
            with warnings.catch_warnings():
                # a rank-deficient guess surfaces as inf/nan, rejected below
                warnings.simplefilter("ignore")
                try:
                    step = spsolve(kkt, rhs)
                except RuntimeError:
                    return None
            if not np.all(np.isfinite(step)):
                return None
            p, nu = step[:n], step[n:]
        else:
            p = -grad / hdiag
        if np.abs(p).max() > 0.05:
            return None  # too far from the optimum for a pure Newton step
        x = x + p
        if np.abs(p).max() < 1e-15:
            break
    if na and nu.min() < -1e-10:
        return None  # a guessed-active constraint wants to release
    if (g_sp @ x - h_arr).max() > 1e-11:
        return None  # a guessed-inactive constraint got violated
    z_new = np.zeros_like(z)
    if na:
        z_new[keep] = np.maximum(nu, 0.0)
    return x, z_new


def constrained_damage_solve(
    region: LipRegion,
    e_plus: np.ndarray,
    areas: np.ndarray,
    state: DamageState,
    params: MaterialParams,
    kkt_tol: float = KKT_TOL,
    max_iter: int = 100,
) -> np.ndarray:
    """Minimize the damage energy of one region under box and slope constraints.

    Returns the damage values for ``region.elements``. The result is accepted
    only if the explicit first-order optimality residual of the scaled problem
    is below ``kkt_tol``; otherwise :class:`RegionSolveError` is raised.
    """
    if region.size == 0:
        raise ValueError("empty region")
    els = region.elements
    ep = np.asarray(e_plus, dtype=float)[els]
    yc = params.yc
    lo, hi = _region_boxes(region, state, params.lc)
    if len(region.edges) == 0:
        # decoupled variables: exact per-element box minimization
        return _box_minimize(ep, yc, lo, hi)

    w = np.asarray(areas, dtype=float)[els]
    # scale so that objective gradients are O(1): |g'| <= 2, h' <= 8 on [0, 1]
    w = w / (w * (2.0 * ep + 8.0 * yc)).max()

    from cvxopt import matrix, solvers, spmatrix

    n = region.size
    m = len(region.edges)
    limit = region.edge_limit / params.lc
    ei = region.edges[:, 0]
    ej = region.edges[:, 1]

    # rows: x <= hi, -x <= -lo, x_i - x_j <= c, x_j - x_i <= c
    g_rows = np.concatenate(
        [
            np.arange(n),
            np.arange(n, 2 * n),
            np.repeat(np.arange(2 * n, 2 * n + m), 2),
            np.repeat(np.arange(2 * n + m, 2 * n + 2 * m), 2),
        ]
    )
    g_cols = np.concatenate(
        [
            np.arange(n),
            np.arange(n),
            np.stack([ei, ej], axis=1).ravel(),
            np.stack([ej, ei], axis=1).ravel(),
        ]
    )
    g_vals = np.concatenate(
        [
            np.ones(n),
            -np.ones(n),
            np.tile([1.0, -1.0], m),
            np.tile([1.0, -1.0], m),
        ]
    )
    g_mat = spmatrix(g_vals, g_rows.tolist(), g_cols.tolist(), (2 * n + 2 * m, n))
    h_vec = matrix(np.concatenate([hi, -lo, limit, limit]))
    x0 = np.clip(state.d_loc[els], lo, hi)

    def objective(x=None, z=None):
        if x is None:
            return 0, matrix(x0)
        xv = np.array(x).ravel()
        f = float(w @ (_g(xv) * ep + yc * _h(xv)))
        grad = w * (_dg(xv) * ep + yc * _dh(xv))
        df = matrix(grad).T
        if z is None:
            return f, df
        hess = z[0] * w * (_ddg(xv) * ep + 6.0 * yc)
        return f, df, spmatrix(hess, range(n), range(n))

    options = {
        "show_progress": False,
        "maxiters": max_iter,
        "abstol": 1e-12,
        "reltol": 1e-12,
        "feastol": 1e-10,
    }
    try:
        sol = solvers.cp(objective, G=g_mat, h=h_vec, options=options)
    except (ValueError, ArithmeticError) as exc:
        raise RegionSolveError(region.index, float("nan"), f"solver failure: {exc}") from exc

    x = np.array(sol["x"]).ravel()
    z = np.array(sol["zl"]).ravel()
    g_sp = sp.coo_matrix((g_vals, (g_rows, g_cols)), shape=(2 * n + 2 * m, n)).tocsr()
    h_arr = np.array(h_vec).ravel()

    def kkt_residual(xv, zv):
        grad = w * (_dg(xv) * ep + yc * _dh(xv))
        slack = g_sp @ xv - h_arr
        return max(
            np.abs(grad + g_sp.T @ zv).max(),
            max(0.0, slack.max()),
            max(0.0, -zv.min()) if len(zv) else 0.0,
            np.abs(zv * slack).max(),
        )

    residual = kkt_residual(x, z)
    polished = _active_set_polish(x, z, w, ep, yc, g_sp, h_arr, ei, ej, n, m)
    if polished is not None:
        xp, zp = polished
        rp = kkt_residual(xp, zp)
        if np.isfinite(rp) and rp < residual:
            x, residual = xp, rp
    # the explicit residual is the acceptance contract; the solver's own
    # status label is advisory (it may stop at "unknown" one step short of
    # its internal gap target while already far below kkt_tol)
    if not np.isfinite(residual) or residual > kkt_tol:
        raise RegionSolveError(region.index, float(residual), sol["status"])
    return np.clip(x, lo, hi)


def damage_update(
    mesh: Mesh,
    lip: LipMesh,
    e_plus: np.ndarray,
    state: DamageState,
    params: MaterialParams,
    *,
    bounds_solver: BoundsSolver | None = None,
    gap_tol: float = GAP_TOL,
    kkt_tol: float = KKT_TOL,
    local_tol: float = LOCAL_TOL,
    max_iter: int = 100,
) -> DamageState:
    """One full damage step: local solve, bounds, then region solves.

    Returns a new state with updated ``d``, ``d_loc`` and bounds; ``d_n`` is
    carried over unchanged (commit it with :meth:`DamageState.advanced`).
    """
    d_loc = local_damage_field(e_plus, state.d_n, params.yc, tol=local_tol)
    solver = bounds_solver if bounds_solver is not None else BoundsSolver(lip, params.lc)
    d_lower, d_upper = solver.compute(d_loc)
    d = d_loc.copy()
    work = replace(state, d_loc=d_loc, d_lower=d_lower, d_upper=d_upper)
    for region in extract_regions(lip, d_loc, d_lower, d_upper, gap_tol):
        d[region.elements] = constrained_damage_solve(
            region, e_plus, mesh.element_area, work, params, kkt_tol=kkt_tol, max_iter=max_iter
        )
    return replace(work, d=d)


def slope_ratio(lip: LipMesh, d: np.ndarray, lc: float) -> float:
    """Largest |damage jump| over an edge relative to its allowed limit."""
    if lip.n_edges == 0:
        return 0.0
    jump = np.abs(d[lip.edges[:, 0]] - d[lip.edges[:, 1]])
    return float((jump * lc / lip.edge_length).max())

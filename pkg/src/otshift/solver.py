"""Exact and entropic solvers for dense transportation problems.

The exact solver is a primal network simplex on the bipartite transportation
graph (rows = samples, columns = classes) with Bland's anti-cycling rule.
Dense costs, fractional marginals, and zero-demand columns are all fine.
Two-column problems take a sorting shortcut that produces the same kind of
certificate (basic plan plus exact dual potentials) a simplex run would.

The entropic solver is Sinkhorn scaling with a mandatory log-domain mode for
costs that are large relative to the regularization strength.

Both solvers are deterministic: identical inputs give bitwise identical
plans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CostMatrix, Predictions, TransportPlan, argmax_labels
from .errors import (
    DimensionMismatch,
    NegativeEntry,
    NonFiniteEntry,
    NumericalUnderflow,
    UnbalancedProblem,
    ValidationError,
)

BALANCE_TOL = 1e-9

# Reduced costs above -PRICE_TOL count as optimal.  Scaled by the cost
# magnitude inside the solver.
PRICE_TOL = 1e-11


@dataclass(frozen=True)
class TransportProblem:
    """A balanced transportation instance: dense costs plus both marginals."""

    cost: CostMatrix
    row_masses: np.ndarray
    col_masses: np.ndarray

    def __post_init__(self):
        if not isinstance(self.cost, CostMatrix):
            object.__setattr__(self, "cost", CostMatrix(np.asarray(self.cost, float)))
        a = np.asarray(self.row_masses, dtype=float)
        b = np.asarray(self.col_masses, dtype=float)
        if a.ndim != 1 or b.ndim != 1:
            raise DimensionMismatch("marginals must be vectors")
        if a.shape[0] != self.cost.n or b.shape[0] != self.cost.k:
            raise DimensionMismatch(
                f"cost is {self.cost.n}x{self.cost.k} but marginals have "
                f"{a.shape[0]} rows and {b.shape[0]} columns"
            )
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise NonFiniteEntry("marginals contain non-finite entries")
        if np.any(a < 0) or np.any(b < 0):
            raise NegativeEntry("marginals contain negative entries")
        if abs(a.sum() - b.sum()) > BALANCE_TOL:
            raise UnbalancedProblem(
                f"total supply {a.sum():.12g} != total demand {b.sum():.12g}"
            )
        object.__setattr__(self, "row_masses", a)
        object.__setattr__(self, "col_masses", b)

    @property
    def n(self) -> int:
        return self.cost.n

    @property
    def k(self) -> int:
        return self.cost.k


@dataclass(frozen=True)
class LpDiagnostics:
    """Optimality certificate data for an exact solve.

    ``duality_gap`` is the signed difference primal - dual; for a true
    optimum it is zero up to roundoff.
    """

    primal_objective: float
    dual_objective: float
    duality_gap: float
    marginal_residual: float
    slackness_residual: float
    iterations: int
    positive_entries: int


@dataclass(frozen=True)
class SinkhornDiagnostics:
    iterations: int
    marginal_residual: float
    converged: bool
    log_domain: bool


def _normalize_duals(u: np.ndarray, v: np.ndarray):
    # potentials are unique only up to a constant shift; pin u[0] = 0 so
    # duals are comparable across solves of related problems
    shift = u[0]
    return u - shift, v + shift


def _finish(problem: TransportProblem, plan: np.ndarray, u: np.ndarray,
            v: np.ndarray, iterations: int):
    u, v = _normalize_duals(u, v)
    C = problem.cost.values
    objective = float(np.sum(plan * C))
    dual_objective = float(problem.row_masses @ u + problem.col_masses @ v)
    row_res = np.abs(plan.sum(axis=1) - problem.row_masses).max()
    col_res = np.abs(plan.sum(axis=0) - problem.col_masses).max()
    support = plan > 0
    if support.any():
        slack = np.abs((C - u[:, None] - v[None, :])[support]).max()
    else:
        slack = 0.0
    diag = LpDiagnostics(
        primal_objective=objective,
        dual_objective=dual_objective,
        duality_gap=objective - dual_objective,
        marginal_residual=float(max(row_res, col_res)),
        slackness_residual=float(slack),
        iterations=iterations,
        positive_entries=int(support.sum()),
    )
    plan_obj = TransportPlan(coupling=plan, row_duals=u, col_duals=v,
                             objective=objective)
    return plan_obj, diag


def _solve_single_column(problem: TransportProblem):
    a = problem.row_masses
    C = problem.cost.values
    plan = a[:, None].copy()
    u = C[:, 0].copy()
    v = np.zeros(1)
    return _finish(problem, plan, u, v, iterations=0)


def _solve_two_columns(problem: TransportProblem):
    """Exact vertex solution for k = 2 by sorting on cost differences.

    Sending a row to column 2 instead of column 1 changes the objective by
    delta_i = C[i,1] - C[i,0], so an optimal plan fills column 2's demand
    with the smallest deltas first.  At most one row straddles the cut.
    """
    C = problem.cost.values
    a = problem.row_masses
    m = len(a)
    delta = C[:, 1] - C[:, 0]
    order = np.argsort(delta, kind="stable")
    cum = np.cumsum(a[order])
    total = float(cum[-1]) if m else 0.0
    b1 = float(min(problem.col_masses[1], total))

    f1 = np.zeros(m)
    if b1 <= 0.0:
        v1 = float(delta.min())
    elif b1 >= total:
        f1[:] = a
        v1 = float(delta.max())
    else:
        p = int(np.searchsorted(cum, b1, side="left"))
        p = min(p, m - 1)
        sel = order[:p]
        f1[sel] = a[sel]
        prev = float(cum[p - 1]) if p > 0 else 0.0
        f1[order[p]] = min(max(b1 - prev, 0.0), float(a[order[p]]))
        v1 = float(delta[order[p]])
    f0 = np.maximum(a - f1, 0.0)
    plan = np.stack([f0, f1], axis=1)
    u = np.minimum(C[:, 0], C[:, 1] - v1)
    v = np.array([0.0, v1])
    return _finish(problem, plan, u, v, iterations=0)


def _northwest_basis(a: np.ndarray, b: np.ndarray):
    """Staircase initial basis: exactly m + k - 1 arcs forming a tree."""
    m, k = len(a), len(b)
    ar = a.copy()
    br = b.copy()
    arcs = []
    i = j = 0
    while True:
        arcs.append((i, j))
        t = min(ar[i], br[j])
        ar[i] -= t
        br[j] -= t
        if i == m - 1 and j == k - 1:
            break
        if j == k - 1:
            i += 1
        elif i == m - 1:
            j += 1
        elif ar[i] <= br[j]:
            i += 1
        else:
            j += 1
    return arcs


def _tree_duals(m, k, C, adj):
    """Potentials from the basis tree: u[0] = 0, C[i,j] = u[i] + v[j] on arcs."""
    u = np.zeros(m)
    v = np.zeros(k)
    seen = np.zeros(m + k, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        node = stack.pop()
        for nbr in adj[node]:
            if seen[nbr]:
                continue
            seen[nbr] = True
            if node < m:
                v[nbr - m] = C[node, nbr - m] - u[node]
            else:
                u[nbr] = C[nbr, node - m] - v[node - m]
            stack.append(nbr)
    return u, v


def _tree_path(m, adj, start, goal):
    """Node path from start to goal along the basis tree."""
    parent = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nbr in adj[node]:
            if nbr not in parent:
                parent[nbr] = node
                stack.append(nbr)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def _flows_from_tree(m, k, arcs, a, b):
    """Unique basic flows for a spanning tree, by peeling leaves.

    Recomputing from the marginals (rather than trusting incrementally
    updated flows) keeps the final plan free of pivot-accumulated drift.
    """
    resid = np.concatenate([a, b])
    adj = [[] for _ in range(m + k)]
    for idx, (i, j) in enumerate(arcs):
        adj[i].append((m + j, idx))
        adj[m + j].append((i, idx))
    degree = np.array([len(x) for x in adj])
    removed = [False] * len(arcs)
    flows = np.zeros(len(arcs))
    stack = [node for node in range(m + k) if degree[node] == 1]
    while stack:
        node = stack.pop()
        live = [(nbr, e) for nbr, e in adj[node] if not removed[e]]
        if not live:
            continue
        nbr, e = live[0]
        flows[e] = resid[node]
        removed[e] = True
        resid[nbr] -= resid[node]
        resid[node] = 0.0
        degree[nbr] -= 1
        if degree[nbr] == 1:
            stack.append(nbr)
    return np.maximum(flows, 0.0)


def _network_simplex(problem: TransportProblem, max_pivots: int | None = None):
    """Primal network simplex with Dantzig pricing and a Bland fallback.

    Most-negative-reduced-cost pricing does the bulk of the work; after a
    long streak of degenerate (zero-step) pivots the entering rule drops to
    Bland's lowest-index choice until the next improving pivot, which rules
    out cycling.  Ties in either rule break to the lowest flat arc index, so
    the pivot sequence is deterministic.
    """
    C = problem.cost.values
    a = problem.row_masses
    b = problem.col_masses
    m, k = C.shape
    scale = max(1.0, float(np.abs(C).max()))
    tol = PRICE_TOL * scale
    if max_pivots is None:
        max_pivots = 50 * (m + k) * max(m, k) + 1000

    arcs = _northwest_basis(a, b)
    basis = set()
    flow = {}
    # incremental flows feed the ratio test only; final flows are recomputed
    # exactly from the tree
    adj = [set() for _ in range(m + k)]
    ar, br = a.copy(), b.copy()
    for (i, j) in arcs:
        t = min(ar[i], br[j])
        flow[i * k + j] = t
        ar[i] -= t
        br[j] -= t
        basis.add(i * k + j)
        adj[i].add(m + j)
        adj[m + j].add(i)

    degenerate_streak = 0
    bland_mode = False
    streak_limit = m + k
    pivots = 0
    while True:
        u, v = _tree_duals(m, k, C, adj)
        reduced = C - u[:, None] - v[None, :]
        flat = reduced.ravel()
        if bland_mode:
            eligible = flat < -tol
            enter = int(np.argmax(eligible))
            if not eligible[enter]:
                break
        else:
            enter = int(np.argmin(flat))
            if flat[enter] >= -tol or enter in basis:
                break
        if pivots >= max_pivots:
            raise RuntimeError(
                f"network simplex failed to converge within {max_pivots} pivots"
            )
        ie, je = divmod(enter, k)

        path = _tree_path(m, adj, m + je, ie)
        # cycle = entering arc plus the tree path back; arcs along the path
        # alternate sign starting with minus (they share column je's side)
        cycle = [(enter, +1)]
        sign = -1
        for t in range(len(path) - 1):
            x, y = path[t], path[t + 1]
            if x < m:
                aid = x * k + (y - m)
            else:
                aid = y * k + (x - m)
            cycle.append((aid, sign))
            sign = -sign

        theta = None
        leave = None
        for aid, s in cycle:
            if s < 0:
                f = flow[aid]
                if theta is None or f < theta - 1e-15 or (f < theta + 1e-15 and aid < leave):
                    theta = f
                    leave = aid
        theta = max(theta, 0.0)

        for aid, s in cycle:
            if aid == enter:
                continue
            flow[aid] += s * theta
        flow[enter] = theta
        del flow[leave]
        basis.remove(leave)
        basis.add(enter)
        li, lj = divmod(leave, k)
        adj[li].discard(m + lj)
        adj[m + lj].discard(li)
        adj[ie].add(m + je)
        adj[m + je].add(ie)
        pivots += 1

        if theta > 0.0:
            degenerate_streak = 0
            bland_mode = False
        else:
            degenerate_streak += 1
            if degenerate_streak > streak_limit:
                bland_mode = True

    final_arcs = sorted((divmod(aid, k) for aid in basis))
    flows = _flows_from_tree(m, k, final_arcs, a, b)
    plan = np.zeros((m, k))
    for f, (i, j) in zip(flows, final_arcs):
        plan[i, j] = f
    u, v = _tree_duals(m, k, C, adj)
    return _finish(problem, plan, u, v, iterations=pivots)


def solve_exact(problem: TransportProblem):
    """Minimum-cost transport plan with an optimality certificate.

    Returns ``(TransportPlan, LpDiagnostics)``.  The plan is a basic (vertex)
    solution: at most n + k - 1 strictly positive entries, marginals matched
    to machine precision, and dual potentials with zero slack on the support.
    """
    if problem.k == 1:
        return _solve_single_column(problem)
    if problem.k == 2:
        return _solve_two_columns(problem)
    return _network_simplex(problem)


def _logsumexp(M: np.ndarray, axis: int) -> np.ndarray:
    mx = np.max(M, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(over="ignore"):
        s = np.sum(np.exp(M - safe), axis=axis)
    with np.errstate(divide="ignore"):
        out = safe.squeeze(axis=axis) + np.log(s)
    return out


def solve_entropic(problem: TransportProblem, reg: float, max_iter: int = 5000,
                   tol: float = 1e-9, mode: str = "auto"):
    """Entropy-regularized transport via Sinkhorn scaling.

    ``mode`` is one of ``auto``, ``standard``, ``log``.  Auto switches to the
    log-domain iteration whenever max(cost)/reg exceeds 30, which is where
    the standard iteration starts flirting with exp underflow (a clamped
    zero probability costs about 27.6).  Standard mode raises
    NumericalUnderflow instead of returning garbage.
    """
    if reg <= 0:
        raise ValidationError(f"reg must be positive, got {reg}")
    if mode not in ("auto", "standard", "log"):
        raise ValidationError(f"unknown entropic mode {mode!r}")
    C = problem.cost.values
    a = problem.row_masses
    b = problem.col_masses
    use_log = mode == "log" or (mode == "auto" and float(C.max()) / reg > 30.0)

    if not use_log:
        K = np.exp(-C / reg)
        u = np.where(a > 0, 1.0, 0.0)
        v = np.where(b > 0, 1.0, 0.0)
        iterations = 0
        residual = np.inf
        for it in range(1, max_iter + 1):
            Kv = K @ v
            if np.any((Kv == 0) & (a > 0)) or not np.all(np.isfinite(Kv)):
                raise NumericalUnderflow(
                    "row scaling underflowed; use log mode or increase reg"
                )
            u = np.divide(a, Kv, out=np.zeros_like(a), where=Kv > 0)
            Ku = K.T @ u
            if np.any((Ku == 0) & (b > 0)) or not np.all(np.isfinite(Ku)):
                raise NumericalUnderflow(
                    "column scaling underflowed; use log mode or increase reg"
                )
            v = np.divide(b, Ku, out=np.zeros_like(b), where=Ku > 0)
            iterations = it
            plan = u[:, None] * K * v[None, :]
            residual = max(
                np.abs(plan.sum(axis=1) - a).max(),
                np.abs(plan.sum(axis=0) - b).max(),
            )
            if residual <= tol:
                break
        plan = u[:, None] * K * v[None, :]
        with np.errstate(divide="ignore"):
            f = reg * np.log(np.where(u > 0, u, 1.0))
            g = reg * np.log(np.where(v > 0, v, 1.0))
    else:
        with np.errstate(divide="ignore"):
            la = np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), -np.inf)
            lb = np.where(b > 0, np.log(np.where(b > 0, b, 1.0)), -np.inf)
        f = np.where(a > 0, 0.0, -np.inf)
        g = np.where(b > 0, 0.0, -np.inf)
        iterations = 0
        residual = np.inf
        for it in range(1, max_iter + 1):
            f = reg * (la - _logsumexp((g[None, :] - C) / reg, axis=1))
            g = reg * (lb - _logsumexp((f[:, None] - C) / reg, axis=0))
            iterations = it
            with np.errstate(invalid="ignore"):
                plan = np.exp(
                    np.where(
                        np.isneginf(f[:, None]) | np.isneginf(g[None, :]),
                        -np.inf,
                        (f[:, None] + g[None, :] - C) / reg,
                    )
                )
            residual = max(
                np.abs(plan.sum(axis=1) - a).max(),
                np.abs(plan.sum(axis=0) - b).max(),
            )
            if residual <= tol:
                break
        f = np.where(np.isneginf(f), 0.0, f)
        g = np.where(np.isneginf(g), 0.0, g)

    f, g = _normalize_duals(f, g)
    diag = SinkhornDiagnostics(
        iterations=iterations,
        marginal_residual=float(residual),
        converged=bool(residual <= tol),
        log_domain=use_log,
    )
    plan_obj = TransportPlan(coupling=plan, row_duals=f, col_duals=g,
                             objective=float(np.sum(plan * C)))
    return plan_obj, diag


def plan_to_predictions(plan: TransportPlan, method: str = "transport") -> Predictions:
    """Hard labels from a plan: row argmax, ties to the lowest class index."""
    return Predictions(labels=argmax_labels(plan.coupling), k=plan.k, method=method)

"""Electrical networks on truncated trees: adapted conductances, effective
conductance, capacity-constrained flows and survival bounds for percolation.

Edges are indexed by their child vertex.  Weight arrays have one slot per
vertex; the root slot is ignored.
"""

from dataclasses import dataclass
import math

import numpy as np
from numba import njit

from .errors import ZeroFlow
from .tree import min_cutset_value


@njit(cache=True, nogil=True)
def _series(a, b):
    if a == np.inf:
        return b
    if b == np.inf:
        return a
    if a <= 0.0 or b <= 0.0:
        return 0.0
    return 1.0 / (1.0 / a + 1.0 / b)


@njit(cache=True, nogil=True)
def _ceff(order, parent, depth, child_ptr, c, max_depth):
    n = parent.shape[0]
    s = np.zeros(n)
    for idx in range(order.shape[0] - 1, -1, -1):
        v = order[idx]
        d = depth[v]
        if d > max_depth:
            continue
        if d == max_depth:
            s[v] = np.inf
        elif child_ptr[v + 1] == child_ptr[v]:
            s[v] = 0.0
        # interior values were accumulated by the children already
        if d > 0:
            s[parent[v]] += _series(c[v], s[v])
    return s


def subtree_conductances(tree, c, depth):
    """``S[v]``: conductance from ``v`` to generation ``depth`` inside the subtree of ``v``.

    Depth-``depth`` vertices are grounded (``S = inf``); dead-end leaves above
    the boundary have ``S = 0``.
    """
    if depth < 1:
        raise ValueError("truncation depth must be at least 1")
    if depth > tree.max_depth:
        raise ValueError("truncation depth exceeds the tree")
    return _ceff(tree.order, tree.parent, tree.depth, tree.child_ptr,
                 np.asarray(c, dtype=np.float64), int(depth))


def effective_conductance(tree, c, depth):
    """Effective conductance between the root and generation ``depth``.

    Reduced by the series law along each edge and the parallel law over
    siblings.  Infinite conductances act as shorts.
    """
    return float(subtree_conductances(tree, c, depth)[tree.root])


def symmetric_effective_conductance(child_counts, level_c, depth):
    """Effective conductance of a spherically symmetric network, level by level.

    ``child_counts[d]`` is the number of children of each generation-``d``
    vertex and ``level_c[d]`` the conductance of every generation-``d`` edge
    (index 0 unused).  Needs no explicit tree, so depth is not limited by
    memory.
    """
    s = math.inf
    for d in range(depth, 0, -1):
        s = child_counts[d - 1] * float(_series(float(level_c[d]), s))
    return s


def _psi_arrays(tree, psi):
    """Per-vertex ``psi`` and ``log Psi``; ``psi`` may be an array or expose ``values(tree)``."""
    vals = psi.values(tree) if hasattr(psi, "values") else np.asarray(psi, dtype=float)
    vals = np.array(vals, dtype=float)
    vals[tree.root] = 1.0
    with np.errstate(divide="ignore"):
        lv = np.log(vals)
    log_big = np.zeros(tree.n_vertices)
    for d in range(1, tree.max_depth + 1):
        vs = tree.vertices_at(d)
        log_big[vs] = log_big[tree.parent[vs]] + lv[vs]
    return vals, log_big


def adapted_conductances(tree, psi):
    """``c(e) = Psi(e) / (1 - psi(e))``, with ``c = 1`` at generation 1.

    Returns ``(c, shorts)``; edges beyond generation 1 with ``psi = 1`` get
    ``c = inf`` and are flagged in the boolean array ``shorts``.
    """
    vals, log_big = _psi_arrays(tree, psi)
    c = np.ones(tree.n_vertices)
    deep = tree.depth > 1
    one = deep & (vals >= 1.0)
    live = deep & ~one
    with np.errstate(divide="ignore", over="ignore"):
        c[live] = np.exp(log_big[live]) / (1.0 - vals[live])
    c[one] = np.inf
    c[tree.root] = np.nan
    return c, one


def adapted_conductance(tree, psi, e):
    c, _ = adapted_conductances(tree, psi)
    return float(c[e])


@dataclass(frozen=True)
class FlowAssignment:
    """A flow from the root to the truncation boundary.

    ``theta`` is the unit flow (strength 1).  ``raw_strength`` and
    ``raw_energy`` describe the capacity-constrained max-flow before
    normalisation.
    """

    theta: np.ndarray
    strength: float
    energy: float
    raw_strength: float
    raw_energy: float
    path_sum_bound: float
    gamma: float
    depth: int

    def kirchhoff_residual(self, tree):
        """Largest ``|theta_e - sum of child flows|`` over interior vertices."""
        inflow = np.zeros(tree.n_vertices)
        np.add.at(inflow, tree.parent[tree.depth > 1], self.theta[tree.depth > 1])
        mask = (tree.depth >= 1) & (tree.depth < self.depth)
        mask &= np.diff(tree.child_ptr) > 0
        if not np.any(mask):
            return 0.0
        return float(np.max(np.abs(self.theta[mask] - inflow[mask])))


@njit(cache=True, nogil=True)
def _flow_dp(order, parent, depth, child_ptr, cap, max_depth):
    n = parent.shape[0]
    f = np.zeros(n)
    below = np.zeros(n)
    for idx in range(order.shape[0] - 1, 0, -1):
        v = order[idx]
        d = depth[v]
        if d > max_depth:
            continue
        if d == max_depth:
            f[v] = cap[v]
        elif child_ptr[v + 1] == child_ptr[v]:
            f[v] = 0.0
        else:
            f[v] = min(cap[v], below[v])
        below[parent[v]] += f[v]
    return f, below


def build_unit_flow(tree, psi, gamma, depth):
    """Max-flow under capacities ``u(e) * c(e)``, normalised to unit strength.

    ``u = 1/k`` on the ``k`` generation-1 edges and ``(1 - psi) * Psi**(gamma-1)``
    beyond, so that ``u(e) * c(e) = Psi(e)**gamma``.  The flow through an edge
    is ``min(capacity, sum of flows through child edges)``, split among the
    children proportionally to their flow values.
    """
    if not gamma > 1:
        raise ValueError("gamma must exceed 1")
    if depth < 1 or depth > tree.max_depth:
        raise ValueError("truncation depth out of range")
    vals, log_big = _psi_arrays(tree, psi)
    c, _ = adapted_conductances(tree, vals)
    first = tree.vertices_at(1) if tree.max_depth >= 1 else np.array([], int)
    k1 = max(1, first.shape[0])
    u = np.zeros(tree.n_vertices)
    cap = np.zeros(tree.n_vertices)
    deep = tree.depth > 1
    with np.errstate(over="ignore", invalid="ignore"):
        u[deep] = (1.0 - vals[deep]) * np.exp((gamma - 1.0) * log_big[deep])
        cap[deep] = np.exp(gamma * log_big[deep])
    u[first] = 1.0 / k1
    cap[first] = 1.0 / k1
    f, below = _flow_dp(tree.order, tree.parent, tree.depth, tree.child_ptr, cap, int(depth))
    strength = float(f[first].sum())
    if not strength > 0:
        raise ZeroFlow("capacity max-flow is zero")
    theta = np.zeros(tree.n_vertices)
    theta[first] = f[first]
    for d in range(2, depth + 1):
        vs = tree.vertices_at(d)
        p = tree.parent[vs]
        tot = below[p]
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(tot > 0, f[vs] / tot, 0.0)
        theta[vs] = theta[p] * share
    live = (tree.depth >= 1) & (tree.depth <= depth)
    with np.errstate(divide="ignore", invalid="ignore"):
        e_terms = np.where(np.isinf(c[live]), 0.0, theta[live] ** 2 / c[live])
    raw_energy = float(e_terms.sum())
    acc = np.zeros(tree.n_vertices)
    for d in range(1, depth + 1):
        vs = tree.vertices_at(d)
        acc[vs] = acc[tree.parent[vs]] + u[vs]
    path_sum = float(acc[tree.vertices_at(depth)].max()) if depth <= tree.max_depth else math.nan
    return FlowAssignment(theta / strength, 1.0, raw_energy / strength ** 2,
                          strength, raw_energy, path_sum, float(gamma), int(depth))


@dataclass(frozen=True)
class SurvivalBounds:
    lower: float
    upper: float
    c_eff: float
    c_q: float
    shorts: int

    @property
    def ordered(self):
        return 0.0 <= self.lower <= self.upper <= 1.0

    @property
    def diagnostic(self):
        if self.ordered:
            return ""
        return (f"lower bound {self.lower:.6g} exceeds upper bound {self.upper:.6g}; "
                "both target the infinite-tree limit")


def survival_bounds(tree, psi, depth, c_q=1.0):
    """Bounds on the probability that the percolation cluster reaches ``depth``.

    Lower: ``C_eff / (1 + C_eff) / c_q`` on the adapted network.  Upper: the
    minimum over cutsets of ``sum Psi(e)``.  When every generation-1 edge
    leads into a fully shorted subtree the lower bound is reported as
    ``1 / c_q``.
    """
    if c_q < 1:
        raise ValueError("C_Q must be at least 1")
    vals, log_big = _psi_arrays(tree, psi)
    c, shorts = adapted_conductances(tree, vals)
    s = subtree_conductances(tree, c, depth)
    first = tree.vertices_at(1)
    ceff = float(s[tree.root])
    if first.shape[0] and np.all(np.isinf(s[first])):
        lower = 1.0 / c_q
    elif math.isinf(ceff):
        lower = 1.0 / c_q
    else:
        lower = ceff / (1.0 + ceff) / c_q
    upper = min(1.0, min_cutset_value(tree, np.exp(log_big), depth))
    return SurvivalBounds(lower, upper, ceff, float(c_q), int(shorts[tree.depth <= depth].sum()))

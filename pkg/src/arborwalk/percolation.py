"""Percolation on trees driven by an edge function ``psi``.

In independent percolation an edge is open with probability ``psi(e)``
given that its parent edge is open; the cluster is the set of open edges
connected to the root.  ``RT(T, psi)`` is the largest ``gamma`` for which
the cutset infimum of ``Psi**gamma`` stays positive, ``Psi`` being the
product of ``psi`` along the root path.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from numba import njit

from . import mdrw
from .conductance import cumulative_resistance, psi_rc_values
from .errors import ConstraintViolation, Inconclusive
from .rng import derive_key, fold, uniform_at
from .tree import (GAMMA_MAX, GAMMA_MIN, LevelProfile, RootedTree, critical_exponent,
                   default_depths, estimate_branching_ruin, log_min_cutset_value)

RC = "RC"
MDRW = "MDRW"
DELTA = "DELTA"
CONSTANT = "CONSTANT"
CUSTOM = "CUSTOM"

_PERC_TAG = 5


@dataclass(frozen=True)
class PsiFunction:
    """An edge function with values in ``[0, 1]``.

    ``level`` maps a generation array to values for depth-only kinds;
    ``vertex`` maps a tree to per-vertex values (root slot 1).
    """

    kind: str
    params: dict
    level: object = None
    vertex: object = None

    @property
    def depth_only(self):
        return self.level is not None

    def values(self, tree):
        if self.vertex is not None:
            out = np.array(self.vertex(tree), dtype=float)
        else:
            out = np.array(self.level(tree.depth.astype(float)), dtype=float)
        out[tree.root] = 1.0
        return out

    def log_level_values(self, max_depth):
        """``log psi`` per generation ``0..max_depth`` (index 0 is 0)."""
        if not self.depth_only:
            raise ValueError(f"{self.kind} psi is not a function of depth alone")
        n = np.arange(max_depth + 1, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.log(np.asarray(self.level(n), dtype=float))
        out[0] = 0.0
        return out

    def label(self):
        return ";".join(f"{k}={v}" for k, v in self.params.items())

    @classmethod
    def constant(cls, c):
        if not 0 <= c <= 1:
            raise ValueError("constant must lie in [0, 1]")
        return cls(CONSTANT, {"c": float(c)}, level=lambda n: np.full(np.shape(n), float(c)))

    @classmethod
    def delta(cls, delta, n0=1):
        """``1 - delta / |e|`` beyond generation ``n0`` and 1 up to it (clipped at 0)."""
        if delta <= 0:
            raise ValueError("delta must be positive")
        if n0 < 1:
            raise ValueError("n0 must be at least 1")

        def level(n):
            n = np.asarray(n, dtype=float)
            with np.errstate(divide="ignore"):
                v = np.clip(1.0 - delta / np.maximum(n, 1.0), 0.0, 1.0)
            return np.where(n <= n0, 1.0, v)

        return cls(DELTA, {"delta": float(delta), "n0": int(n0)}, level=level)

    @classmethod
    def mdrw(cls, config):
        params = {"lambda": config.lam, "M": config.cap}
        if config.is_homogeneous:
            M = int(config.cookies[0])
            return cls(MDRW, params,
                       level=lambda n: mdrw.psi_m_lambda_value(n, M, config.lam))
        return cls(MDRW, params, vertex=lambda t: np.exp(mdrw.log_psi_values(t, config)))

    @classmethod
    def rc(cls, field):
        return cls(RC, {"m": field.law.m, "p1": field.law.p1, "seed": field.seed},
                   vertex=lambda t: psi_rc_values(t, field))

    @classmethod
    def custom(cls, fn, **params):
        """``fn(tree)`` returns per-vertex values."""
        return cls(CUSTOM, params, vertex=fn)


def log_big_psi(tree, psi):
    vals = psi.values(tree)
    with np.errstate(divide="ignore"):
        lv = np.log(vals)
    out = np.zeros(tree.n_vertices)
    for d in range(1, tree.max_depth + 1):
        vs = tree.vertices_at(d)
        out[vs] = out[tree.parent[vs]] + lv[vs]
    return out


@dataclass(frozen=True)
class Cluster:
    """Open edges connected to the root, as a vertex mask (root included)."""

    tree: RootedTree
    open: np.ndarray
    depth: int
    reached: int = field(default=0)

    def edges(self):
        m = self.open.copy()
        m[self.tree.root] = False
        return np.flatnonzero(m)

    def survived(self, n=None):
        return self.reached >= (self.depth if n is None else n)

    def pruned(self, n=None):
        """Cluster vertices with an open descendant at generation ``n``."""
        n = self.depth if n is None else n
        t = self.tree
        keep = self.open & (t.depth == n)
        for d in range(n, 0, -1):
            vs = t.vertices_at(d)
            vs = vs[keep[vs]]
            keep[t.parent[vs]] = True
        return keep

    def as_tree(self, n=None):
        """The pruned cluster as a tree of its own, with the vertex map."""
        return self.tree.induced(self.pruned(n))


@njit(cache=True, nogil=True)
def _percolate(key, order, parent, depth, psi, max_depth, open_):
    reached = 0
    for idx in range(1, order.shape[0]):
        v = order[idx]
        d = depth[v]
        if d > max_depth:
            break
        if not open_[parent[v]]:
            continue
        if uniform_at(fold(key, v), 0) < psi[v]:
            open_[v] = True
            if d > reached:
                reached = d
    return reached


@njit(cache=True, nogil=True)
def _survival_runs(base_key, root, child_ptr, child_idx, psi, max_depth, n_runs, stack, sdepth):
    """Depth-first search per run that stops at the first open vertex at ``max_depth``."""
    out = np.empty(n_runs, np.int64)
    for r in range(n_runs):
        key = fold(base_key, r)
        top = 0
        stack[0] = root
        sdepth[0] = 0
        best = 0
        while top >= 0:
            v = stack[top]
            d = sdepth[top]
            top -= 1
            if d > best:
                best = d
                if best >= max_depth:
                    break
            for k in range(child_ptr[v], child_ptr[v + 1]):
                c = child_idx[k]
                if uniform_at(fold(key, c), 0) < psi[c]:
                    top += 1
                    stack[top] = c
                    sdepth[top] = d + 1
        out[r] = best
    return out


def run_key(seed, run=0):
    return int(fold(np.uint64(derive_key(seed, _PERC_TAG)), run))


def independent_percolation(tree, psi, key, depth):
    """One cluster explored to generation ``depth``; edge ``v`` reads substream ``(key, v)``."""
    if depth > tree.max_depth:
        raise ValueError("depth exceeds the tree")
    vals = psi.values(tree) if isinstance(psi, PsiFunction) else np.asarray(psi, dtype=float)
    open_ = np.zeros(tree.n_vertices, np.bool_)
    open_[tree.root] = True
    reached = _percolate(np.uint64(key), tree.order, tree.parent, tree.depth,
                         np.asarray(vals, dtype=np.float64), int(depth), open_)
    return Cluster(tree, open_, int(depth), int(reached))


@dataclass(frozen=True)
class SurvivalEstimate:
    depth: int
    survival: float
    ci_lo: float
    ci_hi: float
    se: float
    runs: int


def _wilson(k, n, depth, z=1.96):
    p = k / n
    se = math.sqrt(p * (1 - p) / n)
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return SurvivalEstimate(depth, p, max(0.0, mid - half), min(1.0, mid + half), se, n)


def survival_depths(tree, psi, depth, runs, seed):
    """Deepest generation reached by each run (capped at ``depth``).

    Run ``r`` uses the same edge uniforms as ``independent_percolation`` with
    ``run_key(seed, r)``.
    """
    if depth > tree.max_depth:
        raise ValueError("depth exceeds the tree")
    vals = psi.values(tree) if isinstance(psi, PsiFunction) else np.asarray(psi, dtype=float)
    stack = np.empty(tree.n_vertices, np.int64)
    sdepth = np.empty(tree.n_vertices, np.int64)
    return _survival_runs(np.uint64(derive_key(seed, _PERC_TAG)), tree.root, tree.child_ptr,
                          tree.child_idx, np.asarray(vals, dtype=np.float64), int(depth),
                          int(runs), stack, sdepth)


def survival_curve(tree, psi, depths, runs, seed):
    depths = sorted(int(d) for d in depths)
    best = survival_depths(tree, psi, depths[-1], runs, seed)
    return [_wilson(int(np.sum(best >= d)), runs, d) for d in depths]


def survival_estimate(tree, psi, depth, runs, seed):
    """Probability that the cluster reaches generation ``depth``, with a Wilson interval."""
    return survival_curve(tree, psi, [depth], runs, seed)[0]


# -- the RT criterion ---------------------------------------------------

@dataclass(frozen=True)
class RTResult:
    lo: float
    hi: float
    verdict: str
    divergent: bool = False


def rt_value(family, psi, depths=None, tol=0.01):
    """Bracket ``RT(T, psi)`` by bisection and classify it against 1.

    ``family`` is a :class:`RootedTree` (exact cutset DP) or, for depth-only
    ``psi``, a :class:`LevelProfile` (per-level aggregation).
    """
    if depths is None:
        depths = default_depths(family.max_depth)
    depths = [int(d) for d in depths]
    if isinstance(family, LevelProfile):
        log_big = np.cumsum(psi.log_level_values(family.max_depth))

        def values(g):
            with np.errstate(invalid="ignore"):
                return family.log_cutset_values(g * log_big, depths)
    else:
        lb = log_big_psi(family, psi)

        def values(g):
            with np.errstate(invalid="ignore"):
                w = g * lb
            return np.array([log_min_cutset_value(family, w, d) for d in depths])
    try:
        est = critical_exponent(values, depths, GAMMA_MIN, GAMMA_MAX, tol)
    except Inconclusive:
        return RTResult(math.nan, math.nan, "UNDECIDED")
    if est.divergent or est.lo > 1:
        verdict = "RT>1"
    elif est.hi < 1:
        verdict = "RT<1"
    else:
        verdict = "UNDECIDED"
    return RTResult(est.lo, est.hi, verdict, est.divergent)


# -- delta percolation ----------------------------------------------------

SUBCRITICAL_CEILING = 0.02

@dataclass(frozen=True)
class DeltaRow:
    delta: float
    n0: int
    survival: SurvivalEstimate
    shallow: SurvivalEstimate
    subcritical_signature: bool
    cluster_brr_lo: float
    cluster_brr_hi: float
    clusters_measured: int
    target: float

    @property
    def brr_consistent(self):
        """Estimate-against-estimate check of ``br_r(cluster) >= b - 2 delta``."""
        return self.clusters_measured > 0 and self.cluster_brr_hi >= self.target


def delta_percolation_suite(tree, b, deltas, depth, runs, seed, *, n0=1, clusters=3,
                            tol=0.05):
    """Survival and cluster growth for ``psi = 1 - delta/|e|`` across ``deltas``.

    For each ``delta`` the report holds survival at ``depth`` and at
    ``depth // 4`` (a non-increasing curve ending below
    ``SUBCRITICAL_CEILING`` marks the subcritical signature) and the range of
    branching-ruin estimates over up to ``clusters`` surviving clusters,
    compared with ``b - 2 delta``.
    """
    rows = []
    for delta in deltas:
        psi = PsiFunction.delta(delta, n0)
        shallow, deep = survival_curve(tree, psi, [max(1, depth // 4), depth], runs, seed)
        best = survival_depths(tree, psi, depth, runs, seed)
        survivors = np.flatnonzero(best >= depth)[:clusters]
        los, his = [], []
        for r in survivors:
            cl = independent_percolation(tree, psi, run_key(seed, int(r)), depth)
            sub, _ = cl.as_tree(depth)
            est = estimate_branching_ruin(sub, tol=tol)
            los.append(math.inf if est.divergent else est.lo)
            his.append(math.inf if est.divergent else est.hi)
        rows.append(DeltaRow(float(delta), int(n0), deep, shallow,
                             bool(deep.survival <= shallow.survival
                                  and deep.ci_hi < SUBCRITICAL_CEILING),
                             min(los) if los else math.nan, max(his) if his else math.nan,
                             len(survivors), float(b - 2 * delta)))
    return rows


# -- barrier percolation ----------------------------------------------------

def check_barrier_epsilon(eps, m, b):
    """Validate ``eps`` against the constraints of the ``(m, b)`` regime."""
    if not 0 < eps < min(1.0, b):
        raise ConstraintViolation(f"eps={eps} must lie in (0, min(1, b))")
    regimes = []
    if b * m > 1:
        regimes.append("bm>1")
        if (1 + eps) * (1 + (m + 3) * eps) / m > b - 2 * eps:
            raise ConstraintViolation(
                f"eps={eps} violates (1+e)(1+(m+3)e)/m <= b-2e for m={m}, b={b}")
    if b > 1:
        regimes.append("b>1")
        if (1 + 4 * eps) * (1 + eps) > b - 2 * eps:
            raise ConstraintViolation(f"eps={eps} violates (1+4e)(1+e) <= b-2e for b={b}")
    if not regimes:
        raise ConstraintViolation(f"no transient regime applies to m={m}, b={b}")
    return regimes


def barrier_open(tree, field, eps, depth):
    """Per-edge barrier rule (without connectivity)."""
    m = field.law.m
    n = tree.depth.astype(float)
    r = cumulative_resistance(tree, field)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / field.value
        a = inv <= n ** ((1 + eps) / m)
        bnd = r <= n ** (max(1.0, 1.0 / m) + (m + 3) / m * eps)
    ok = a & bnd
    ok[tree.depth == 1] = True
    ok[tree.depth > depth] = False
    ok[tree.root] = True
    return ok


def barrier_percolation(tree, field, eps, depth, *, b=None):
    """Deterministic cluster of edges that pass both barriers along their root path.

    With ``b`` given, ``eps`` is validated for the ``(m, b)`` regime first.
    """
    if b is not None:
        check_barrier_epsilon(eps, field.law.m, b)
    if depth > tree.max_depth:
        raise ValueError("depth exceeds the tree")
    ok = barrier_open(tree, field, eps, depth)
    reached = 0
    for d in range(1, depth + 1):
        vs = tree.vertices_at(d)
        ok[vs] &= ok[tree.parent[vs]]
        if ok[vs].any():
            reached = d
    return Cluster(tree, ok, int(depth), reached)


def barrier_survival_curve(tree, law, eps, depths, n_env, seed, *, b=None):
    """Fraction of environments whose barrier cluster reaches each depth in ``depths``."""
    from .conductance import sample_environment

    if b is not None:
        check_barrier_epsilon(eps, law.m, b)
    depths = sorted(int(d) for d in depths)
    reached = np.empty(n_env, np.int64)
    for env in range(n_env):
        field = sample_environment(tree, law, seed, env)
        reached[env] = barrier_percolation(tree, field, eps, depths[-1]).reached
    return [_wilson(int(np.sum(reached >= d)), n_env, d) for d in depths]


def barrier_survival(tree, law, eps, depth, n_env, seed, *, b=None):
    """Fraction of environments whose barrier cluster reaches ``depth``."""
    return barrier_survival_curve(tree, law, eps, [depth], n_env, seed, b=b)[0]

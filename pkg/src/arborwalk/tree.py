"""Rooted trees, generators, cutset dynamic programming and growth estimators.

A :class:`RootedTree` is a finite truncation of an infinite rooted tree held
as flat integer arrays.  Edges are identified with their child endpoint, so
an edge weighting is simply a float array indexed by vertex (the root slot is
ignored) and the generation of an edge is ``depth[child]``.

Trees too large to materialise (sphere sizes ``n**b`` out to depth 2000, or
``3**n``) are handled through :class:`LevelProfile`, which keeps only the
log sphere sizes and evaluates depth-only weightings by per-level
aggregation.
"""

from dataclasses import dataclass
import math

import numpy as np
from numba import njit

from .errors import Inconclusive, TreeBudgetError, TreeParseError

DEFAULT_VERTEX_BUDGET = 50_000_000

# decay classification of v_N(gamma) over the probed depths
SLOPE_TOL = 0.1
RELATIVE_FLOOR = 1e-6
GAMMA_MIN = 1e-3
GAMMA_MAX = 64.0


@njit(cache=True, nogil=True)
def _bfs(root, child_ptr, child_idx, n):
    order = np.empty(n, np.int32)
    depth = np.full(n, -1, np.int32)
    order[0] = root
    depth[root] = 0
    head = 0
    tail = 1
    while head < tail:
        v = order[head]
        head += 1
        for k in range(child_ptr[v], child_ptr[v + 1]):
            c = child_idx[k]
            order[tail] = c
            depth[c] = depth[v] + 1
            tail += 1
    return order[:tail], depth


@njit(cache=True, nogil=True)
def _round_robin_arrays(sizes):
    n = 0
    for s in sizes:
        n += s
    parent = np.empty(n, np.int32)
    child_ptr = np.zeros(n + 1, np.int64)
    child_idx = np.empty(max(n - 1, 0), np.int32)
    parent[0] = -1
    off = 0
    pos = 0
    for lvl in range(sizes.shape[0]):
        s = sizes[lvl]
        nxt = sizes[lvl + 1] if lvl + 1 < sizes.shape[0] else 0
        base = off + s
        for i in range(s):
            child_ptr[off + i] = pos
            for k in range(i, nxt, s):
                child_idx[pos] = base + k
                parent[base + k] = off + i
                pos += 1
        off += s
    child_ptr[n] = pos
    return parent, child_ptr, child_idx


class RootedTree:
    """Immutable finite rooted tree.

    Attributes
    ----------
    parent : int32[n]       parent id, -1 at the root
    depth : int32[n]        generation |v|
    child_ptr : int64[n+1]  children of v are child_idx[child_ptr[v]:child_ptr[v+1]]
    child_idx : int32[n-1]  children, sorted by id within each vertex
    order : int32[n]        level order starting at the root (parents before children)
    level_sizes : int64[D+1]
    """

    def __init__(self, parent, root=0, *, kind="custom", params=None):
        parent = np.asarray(parent, dtype=np.int64)
        n = parent.shape[0]
        if n == 0:
            raise ValueError("a tree needs at least its root")
        if not 0 <= root < n or parent[root] != -1:
            raise ValueError("root must be a vertex whose parent is -1")
        nonroot = np.flatnonzero(np.arange(n) != root)
        if np.any((parent[nonroot] < 0) | (parent[nonroot] >= n)):
            raise ValueError("every non-root vertex needs a parent in range")
        counts = np.bincount(parent[nonroot], minlength=n)
        child_ptr = np.zeros(n + 1, np.int64)
        np.cumsum(counts, out=child_ptr[1:])
        # stable sort by parent keeps children ordered by id
        child_idx = nonroot[np.argsort(parent[nonroot], kind="stable")].astype(np.int32)
        order, depth = _bfs(root, child_ptr, child_idx, n)
        if order.shape[0] != n:
            raise ValueError("parent map has a cycle or unreachable vertices")
        self._init(root, parent.astype(np.int32), depth, child_ptr, child_idx, order, kind, params)

    def _init(self, root, parent, depth, child_ptr, child_idx, order, kind, params):
        self.root = int(root)
        self.parent = parent
        self.depth = depth
        self.child_ptr = child_ptr
        self.child_idx = child_idx
        self.order = order
        self.kind = kind
        self.params = dict(params or {})
        for arr in (parent, depth, child_ptr, child_idx, order):
            arr.setflags(write=False)
        self.level_sizes = np.bincount(depth, minlength=1).astype(np.int64)
        self.level_sizes.setflags(write=False)

    @classmethod
    def _round_robin(cls, sizes, kind, params):
        """Level-numbered tree; child ``k`` of a level hangs from parent ``k mod s``.

        ``s`` is the size of the level above, so the remainder goes to the
        lowest-indexed parents.
        """
        sizes = np.asarray(sizes, dtype=np.int64)
        parent, child_ptr, child_idx = _round_robin_arrays(sizes)
        depth = np.repeat(np.arange(sizes.shape[0], dtype=np.int32), sizes)
        order = np.arange(parent.shape[0], dtype=np.int32)
        tree = cls.__new__(cls)
        tree._init(0, parent, depth, child_ptr, child_idx, order, kind, params)
        return tree

    @classmethod
    def _from_level_sizes(cls, sizes, kind, params):
        """Breadth-first numbered tree with contiguous child blocks."""
        sizes = np.asarray(sizes, dtype=np.int64)
        n = int(sizes.sum())
        counts = np.zeros(n, np.int32)
        start = 0
        for lvl in range(sizes.shape[0] - 1):
            s, nxt = int(sizes[lvl]), int(sizes[lvl + 1])
            q, r = divmod(nxt, s)
            counts[start:start + s] = q
            counts[start:start + r] += 1
            start += s
        child_ptr = np.zeros(n + 1, np.int64)
        np.cumsum(counts, out=child_ptr[1:])
        parent = np.empty(n, np.int32)
        parent[0] = -1
        parent[1:] = np.repeat(np.arange(n, dtype=np.int32), counts)
        depth = np.repeat(np.arange(sizes.shape[0], dtype=np.int32), sizes)
        child_idx = np.arange(1, n, dtype=np.int32)
        order = np.arange(n, dtype=np.int32)
        tree = cls.__new__(cls)
        tree._init(0, parent, depth, child_ptr, child_idx, order, kind, params)
        return tree

    # -- basic queries -------------------------------------------------
    @property
    def n_vertices(self):
        return int(self.parent.shape[0])

    @property
    def n_edges(self):
        return self.n_vertices - 1

    @property
    def max_depth(self):
        return int(self.level_sizes.shape[0] - 1)

    def children(self, v):
        return self.child_idx[self.child_ptr[v]:self.child_ptr[v + 1]]

    def n_children(self, v):
        return int(self.child_ptr[v + 1] - self.child_ptr[v])

    def edges(self):
        """Edge ids (child endpoints) in breadth-first order."""
        return self.order[1:]

    def path(self, v):
        """Vertices from the root to ``v`` inclusive."""
        out = [int(v)]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out[::-1]

    def vertices_at(self, d):
        return np.flatnonzero(self.depth == d)

    def is_spherically_symmetric(self):
        counts = np.diff(self.child_ptr)
        for d in range(self.max_depth):
            c = counts[self.depth == d]
            if c.min() != c.max():
                return False
        return True

    def profile(self):
        return LevelProfile(np.log(self.level_sizes.astype(float)))

    # -- derived trees -------------------------------------------------
    def induced(self, keep):
        """Subtree on the vertices flagged in ``keep`` (must be closed under parents).

        Returns ``(tree, ids)`` where ``ids[i]`` is the original id of new vertex ``i``.
        """
        keep = np.asarray(keep, dtype=bool).copy()
        keep[self.root] = True
        ids = self.order[keep[self.order]]
        if np.any(~keep[self.parent[ids[1:]]]):
            raise ValueError("kept vertex set is not closed under taking parents")
        remap = np.full(self.n_vertices, -1, np.int64)
        remap[ids] = np.arange(ids.shape[0])
        new_parent = np.full(ids.shape[0], -1, np.int64)
        new_parent[1:] = remap[self.parent[ids[1:]]]
        return RootedTree(new_parent, 0, kind=self.kind, params=self.params), ids

    def truncate(self, n):
        if n >= self.max_depth:
            return self
        tree, _ = self.induced(self.depth <= n)
        return tree

    # -- serialisation -------------------------------------------------
    def serialize(self):
        lines = [f"root {self.root}"]
        for v in self.order[1:]:
            lines.append(f"{int(v)} {int(self.parent[v])}")
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return (f"RootedTree(kind={self.kind!r}, n_vertices={self.n_vertices}, "
                f"max_depth={self.max_depth})")


# -- generators ---------------------------------------------------------

def sphere_sizes(b, depth):
    """Level sizes ``max(1, round(n**b))`` with halves rounded up."""
    n = np.arange(1, depth + 1, dtype=float)
    s = np.maximum(1.0, np.floor(n ** b + 0.5))
    return np.concatenate([[1], s]).astype(np.int64)


def _check_budget(total, budget):
    if total > budget:
        raise TreeBudgetError(f"tree would have {total} vertices, budget is {budget}")


def build_spherically_symmetric(b, depth, *, budget=DEFAULT_VERTEX_BUDGET):
    """Tree whose level ``n`` holds ``max(1, round(n**b))`` vertices.

    Children are dealt round-robin: child ``k`` of level ``n + 1`` hangs from
    vertex ``k mod s_n`` of level ``n``.  Counts are therefore as even as
    possible, the remainder goes to the lowest ids, and every vertex above
    the last level has at least one child.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if not math.isfinite(b) or b < 0:
        raise ValueError("growth exponent must be finite and non-negative")
    total = 1 + sum(max(1, math.floor(k ** b + 0.5)) for k in range(1, depth + 1))
    _check_budget(total, budget)
    return RootedTree._round_robin(sphere_sizes(b, depth), "sphere",
                                        {"b": float(b), "depth": int(depth)})


def build_regular(d, depth, *, budget=DEFAULT_VERTEX_BUDGET):
    """Every vertex above generation ``depth`` gets exactly ``d`` children."""
    if d < 1 or int(d) != d:
        raise ValueError("arity must be a positive integer")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    d = int(d)
    total = depth + 1 if d == 1 else (d ** (depth + 1) - 1) // (d - 1)
    _check_budget(total, budget)
    sizes = [d ** k for k in range(depth + 1)]
    return RootedTree._from_level_sizes(sizes, "regular", {"d": d, "depth": int(depth)})


def build_path(depth):
    return build_regular(1, depth)


# -- tree files ---------------------------------------------------------

def load_tree(stream):
    """Parse the ``root <id>`` / ``<child> <parent>`` line format.

    Vertex ids are compacted to ``0..n-1``: the root becomes 0 and the i-th
    child record becomes vertex i.
    """
    if isinstance(stream, str):
        stream = stream.splitlines()
    root_label = None
    records = []
    for lineno, raw in enumerate(stream, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        tokens = text.split()
        if tokens[0] == "root":
            if len(tokens) != 2:
                raise TreeParseError("syntax", "expected 'root <id>'", lineno)
            if root_label is not None:
                raise TreeParseError("duplicate_root", "root declared twice", lineno)
            if records:
                raise TreeParseError("missing_root", "records before the root declaration", lineno)
            root_label = tokens[1]
            continue
        if len(tokens) != 2:
            raise TreeParseError("syntax", "expected '<child_id> <parent_id>'", lineno)
        if root_label is None:
            raise TreeParseError("missing_root", "no 'root <id>' line before records", lineno)
        records.append((lineno, tokens[0], tokens[1]))
    if root_label is None:
        raise TreeParseError("missing_root", "no 'root <id>' line")

    ids = {root_label: 0}
    lines = {}
    for lineno, child, _ in records:
        if child == root_label:
            raise TreeParseError("cycle", f"root {child} listed with a parent", lineno)
        if child in ids:
            raise TreeParseError("duplicate_child", f"vertex {child} has two parents", lineno)
        ids[child] = len(ids)
        lines[ids[child]] = lineno
    parent = np.full(len(ids), -1, np.int64)
    for lineno, child, par in records:
        if par not in ids:
            raise TreeParseError("orphan", f"parent {par} of {child} is never defined", lineno)
        parent[ids[child]] = ids[par]

    reached = np.zeros(len(ids), bool)
    reached[0] = True
    # vertices whose parent chain reaches the root; the rest sit on or below a cycle
    for v in range(1, len(ids)):
        seen = []
        on_chain = set()
        u = v
        while not reached[u] and u not in on_chain:
            seen.append(u)
            on_chain.add(u)
            u = int(parent[u])
        if reached[u]:
            reached[seen] = True
        else:
            loop = seen[seen.index(u):]
            first = min(loop, key=lambda x: lines[x])
            raise TreeParseError("cycle", "vertex chain loops without reaching the root",
                                 lines[first])
    return RootedTree(parent, 0, kind="file")


def save_tree(tree, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(tree.serialize())


# -- cutset dynamic programming ----------------------------------------

@njit(cache=True, nogil=True)
def _cutset_dp(order, parent, depth, w, max_depth):
    n = order.shape[0]
    acc = np.zeros(parent.shape[0])
    has = np.zeros(parent.shape[0], np.bool_)
    total = 0.0
    for idx in range(n - 1, 0, -1):
        v = order[idx]
        d = depth[v]
        if d > max_depth:
            continue
        f = w[v]
        if d < max_depth and has[v] and acc[v] < f:
            f = acc[v]
        if d == 1:
            total += f
        else:
            p = parent[v]
            acc[p] += f
            has[p] = True
    return total


@njit(cache=True, nogil=True)
def _log_cutset_dp(order, parent, depth, logw, max_depth):
    n = order.shape[0]
    acc = np.full(parent.shape[0], -np.inf)
    total = -np.inf
    for idx in range(n - 1, 0, -1):
        v = order[idx]
        d = depth[v]
        if d > max_depth:
            continue
        f = logw[v]
        if d < max_depth and acc[v] > -np.inf and acc[v] < f:
            f = acc[v]
        if d == 1:
            total = np.logaddexp(total, f)
        else:
            p = parent[v]
            acc[p] = np.logaddexp(acc[p], f)
    return total


def min_cutset_value(tree, w, depth=None):
    """Minimum of ``sum(w[e] for e in cutset)`` over cutsets of the truncation.

    ``F(e) = min(w(e), sum of F over child edges)`` with ``F(e) = w(e)`` on leaf
    edges; the result sums ``F`` over generation-1 edges.  Object arrays (e.g.
    of ``fractions.Fraction``) are evaluated exactly in pure Python.
    """
    depth = tree.max_depth if depth is None else int(depth)
    if depth < 1 or tree.max_depth < 1:
        raise ValueError("tree truncation must have depth at least 1")
    w = np.asarray(w)
    if w.dtype != object:
        return float(_cutset_dp(tree.order, tree.parent, tree.depth,
                                w.astype(np.float64), depth))
    acc = {}
    total = 0
    for v in tree.order[:0:-1]:
        v = int(v)
        d = int(tree.depth[v])
        if d > depth:
            continue
        f = w[v]
        if d < depth and v in acc and acc[v] < f:
            f = acc[v]
        if d == 1:
            total += f
        else:
            p = int(tree.parent[v])
            acc[p] = acc.get(p, 0) + f
    return total


def log_min_cutset_value(tree, logw, depth=None):
    """Natural log of :func:`min_cutset_value` for weights given in log space."""
    depth = tree.max_depth if depth is None else int(depth)
    return float(_log_cutset_dp(tree.order, tree.parent, tree.depth,
                                np.asarray(logw, dtype=np.float64), depth))


def sphere_sum(tree, w, depth):
    return float(np.asarray(w, dtype=float)[tree.depth == depth].sum())


# -- level profiles -----------------------------------------------------

@dataclass(frozen=True)
class LevelProfile:
    """Log sphere sizes ``log_sizes[n] = log s_n`` of a tree, ``n = 0..N``.

    Depth-only weightings are evaluated by per-level aggregation: the value at
    depth ``N`` is ``min over 1 <= n <= N of s_n * w_n``, the best sphere
    cutset.  This equals the cutset DP for spherically symmetric trees and is
    an upper bound for any other tree with these level sizes.
    """

    log_sizes: np.ndarray
    kind: str = "profile"

    @classmethod
    def sphere(cls, b, depth):
        n = np.arange(1, depth + 1, dtype=float)
        s = np.maximum(1.0, np.floor(n ** b + 0.5))
        return cls(np.concatenate([[0.0], np.log(s)]), "sphere")

    @classmethod
    def regular(cls, d, depth):
        return cls(np.arange(depth + 1) * math.log(d), "regular")

    @property
    def max_depth(self):
        return int(self.log_sizes.shape[0] - 1)

    def log_cutset_values(self, log_w, depths):
        """``log v_N`` at each requested depth for level log-weights ``log_w[n]``."""
        terms = self.log_sizes[1:] + np.asarray(log_w, dtype=float)[1:]
        running = np.minimum.accumulate(terms)
        return running[np.asarray(depths, dtype=int) - 1]


# -- growth estimators --------------------------------------------------

@dataclass(frozen=True)
class BranchingEstimate:
    """Bracket ``[lo, hi]`` for a critical exponent, or the divergent sentinel."""

    lo: float
    hi: float
    divergent: bool = False

    def overlaps(self, a, b):
        return self.lo <= b and self.hi >= a

    def __str__(self):
        if self.divergent:
            return f"DIVERGENT (>= {self.lo:g})"
        return f"[{self.lo:.4f}, {self.hi:.4f}]"


def classify_decay(depths, log_values, slope_tol=SLOPE_TOL, floor=RELATIVE_FLOOR):
    """Classify ``v_N`` over the probed depths as decaying, bounded or growing.

    Uses the least-squares slope of ``log v_N`` against ``log N``.
    """
    y = np.asarray(log_values, dtype=float)
    if np.any(np.isneginf(y)):
        return "decaying"
    slope = np.polyfit(np.log(np.asarray(depths, dtype=float)), y, 1)[0]
    if slope < -slope_tol:
        return "decaying"
    if slope > slope_tol:
        return "growing"
    if y[-1] - y[0] >= math.log(floor):
        return "bounded"
    raise Inconclusive(f"flat slope {slope:.3g} but v_N fell by more than {floor:g}")


def default_depths(max_depth, k=4):
    ds = sorted({max(1, max_depth >> j) for j in range(k)})
    if len(ds) < 3:
        raise ValueError("need a truncation deep enough for three distinct probe depths")
    return ds


def critical_exponent(log_values_at, depths, lo, hi, tol):
    """Bisect for ``sup{gamma : v_N(gamma) bounded away from 0}``.

    ``log_values_at(gamma)`` returns ``log v_N(gamma)`` at ``depths``.
    """
    if len(depths) < 3 or any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError("need at least three increasing depths")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if classify_decay(depths, log_values_at(hi)) != "decaying":
        return BranchingEstimate(hi, math.inf, divergent=True)
    if classify_decay(depths, log_values_at(lo)) == "decaying":
        return BranchingEstimate(0.0, lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if classify_decay(depths, log_values_at(mid)) == "decaying":
            hi = mid
        else:
            lo = mid
    return BranchingEstimate(lo, hi)


def _depth_log_values(family, depths, level_logw, vertex_logw=None):
    """``log v_N`` for a depth-only weighting (or per-vertex weights on a tree)."""
    if isinstance(family, LevelProfile):
        return family.log_cutset_values(level_logw, depths)
    logw = level_logw[family.depth] if vertex_logw is None else vertex_logw
    return np.array([log_min_cutset_value(family, logw, d) for d in depths])


def _setup(family, depths):
    if depths is None:
        depths = default_depths(family.max_depth)
    depths = [int(d) for d in depths]
    if depths[-1] > family.max_depth:
        raise ValueError("probe depth exceeds the tree")
    levels = np.arange(family.max_depth + 1, dtype=float)
    levels[0] = 1.0
    return depths, levels


def estimate_branching_ruin(family, depths=None, tol=0.01):
    """Estimate the branching-ruin number with weights ``|e|**-gamma``.

    ``family`` is a :class:`RootedTree` (exact cutset DP at each truncation)
    or a :class:`LevelProfile` (per-level aggregation).
    """
    depths, levels = _setup(family, depths)
    log_n = np.log(levels)
    return critical_exponent(lambda g: _depth_log_values(family, depths, -g * log_n),
                             depths, GAMMA_MIN, GAMMA_MAX, tol)


def estimate_branching(family, depths=None, tol=0.01):
    """Estimate the branching number with weights ``gamma**-|e|``; never below 1."""
    depths, levels = _setup(family, depths)
    levels[0] = 0.0
    est = critical_exponent(lambda g: _depth_log_values(family, depths, -levels * math.log(g)),
                            depths, 1.0, GAMMA_MAX, tol)
    if est.divergent:
        return est
    return BranchingEstimate(max(1.0, est.lo), max(1.0, est.hi))

"""Rubin's construction of the embedded digging walk from exponential clocks.

Each oriented edge ``(nu, mu)`` carries i.i.d. clocks ``Y(nu, mu, k)``.  The
first clock on a parent-to-child edge is a sum of ``m_mu + 1`` unit
exponentials; all others are unit exponentials.  A walk at ``nu`` that has
crossed ``(nu, mu)`` ``k`` times sees the alarm
``sum(Y(nu, mu, i) for i <= k) / r(nu, mu)`` with ``r = lam**-(max depth) + 1``
and jumps to the neighbour whose alarm rings first.  Restricting the walk to
a subtree simply drops the alarms of the removed edges, which couples the
walks on all subtrees driven by one bank.

Clocks are pure functions of ``(seed, nu, mu, k)``, so a bank never needs to
store them; :class:`ClockBank` keeps a cache only for the coupling contract of
its Python-level ``clock`` accessor.
"""

from dataclasses import dataclass
import math

import numpy as np
from numba import njit
from scipy import stats

from .errors import BudgetExceeded, InsufficientSamples, NonAdjacent
from .rng import derive_key, fold, uniform_at

DEFAULT_STEP_BUDGET = 10_000_000
_BANK_TAG = 4


@njit(cache=True, nogil=True)
def _clock(seed_key, nu, mu, k, shape):
    key = fold(fold(fold(seed_key, nu), mu), k)
    s = 0.0
    for j in range(shape):
        s -= math.log(uniform_at(key, j))
    return s


@njit(cache=True, nogil=True)
def _shape(parent, cookies, root, nu, mu, k):
    if k == 0 and parent[mu] == nu:
        if mu == root:
            return 1
        return 1 + (cookies[0] if cookies.shape[0] == 1 else cookies[mu])
    return 1


def bank_key(seed, bank=0):
    """Key of bank number ``bank`` in the population seeded by ``seed``."""
    return derive_key(seed, _BANK_TAG, bank)


class ClockBank:
    """Clock family for one seed, with a first-write-wins cache."""

    def __init__(self, key, tree, config):
        self.key = int(key)
        self.tree = tree
        self.config = config
        self.cache = {}
        self._cookies = np.ascontiguousarray(config.cookies, dtype=np.int64)

    @classmethod
    def from_seed(cls, seed, tree, config, bank=0):
        return cls(bank_key(seed, bank), tree, config)

    def rate(self, nu, mu):
        d = max(int(self.tree.depth[nu]), int(self.tree.depth[mu]))
        return self.config.lam ** (-d + 1)

    def clock(self, nu, mu, k):
        nu, mu, k = int(nu), int(mu), int(k)
        t = self.tree
        if not (t.parent[mu] == nu or t.parent[nu] == mu):
            raise NonAdjacent(f"vertices {nu} and {mu} are not neighbours")
        if k < 0:
            raise ValueError("clock index must be non-negative")
        hit = self.cache.get((nu, mu, k))
        if hit is not None:
            return hit
        shape = _shape(t.parent, self._cookies, t.root, nu, mu, k)
        value = float(_clock(np.uint64(self.key), nu, mu, k, shape))
        return self.cache.setdefault((nu, mu, k), value)


# -- extension on a path ----------------------------------------------------

@njit(cache=True, nogil=True)
def _kahan_add(s, comp, i, x):
    y = x - comp[i]
    t = s[i] + y
    comp[i] = (t - s[i]) - y
    s[i] = t


@njit(cache=True, nogil=True)
def _path_race(seed_key, path, pdepth, parent, cookies, root, lam, budget):
    """Extension on ``path[0] .. path[L]`` started at ``path[0]``.

    Returns 1 if ``path[L]`` is hit before the walk comes back to
    ``path[0]``, 0 otherwise, and -1 when the budget runs out.
    """
    L = path.shape[0] - 1
    if L == 0:
        return 1
    up_s = np.zeros(L + 1)
    up_c = np.zeros(L + 1)
    up_k = np.zeros(L + 1, np.int64)
    dn_s = np.zeros(L + 1)
    dn_c = np.zeros(L + 1)
    dn_k = np.zeros(L + 1, np.int64)
    for i in range(L + 1):
        if i > 0:
            r = lam ** (-pdepth[i] + 1)
            nu = path[i]
            mu = path[i - 1]
            up_s[i] = _clock(seed_key, nu, mu, 0, _shape(parent, cookies, root, nu, mu, 0)) / r
        if i < L:
            r = lam ** (-pdepth[i + 1] + 1)
            nu = path[i]
            mu = path[i + 1]
            dn_s[i] = _clock(seed_key, nu, mu, 0, _shape(parent, cookies, root, nu, mu, 0)) / r
    i = 0
    for _ in range(budget):
        if i == 0:
            go_down = True
        else:
            a = up_s[i]
            b = dn_s[i]
            go_down = b < a or (b == a and path[i + 1] < path[i - 1])
        if go_down:
            r = lam ** (-pdepth[i + 1] + 1)
            dn_k[i] += 1
            x = _clock(seed_key, path[i], path[i + 1], dn_k[i],
                       _shape(parent, cookies, root, path[i], path[i + 1], dn_k[i])) / r
            _kahan_add(dn_s, dn_c, i, x)
            i += 1
            if i == L:
                return 1
        else:
            r = lam ** (-pdepth[i] + 1)
            up_k[i] += 1
            x = _clock(seed_key, path[i], path[i - 1], up_k[i],
                       _shape(parent, cookies, root, path[i], path[i - 1], up_k[i])) / r
            _kahan_add(up_s, up_c, i, x)
            i -= 1
            if i == 0:
                return 0
    return -1


@njit(cache=True, nogil=True)
def _path_to(parent, depth, v):
    d = depth[v]
    out = np.empty(d + 1, np.int64)
    for j in range(d, -1, -1):
        out[j] = v
        v = parent[v]
    return out


@njit(cache=True, nogil=True)
def _edge_tests(seed_keys, vertices, parent, depth, cookies, root, lam, budget):
    """Path-extension event for every (bank, edge) pair."""
    out = np.zeros((seed_keys.shape[0], vertices.shape[0]), np.int8)
    for j in range(vertices.shape[0]):
        path = _path_to(parent, depth, vertices[j])
        pd = depth[path]
        for b in range(seed_keys.shape[0]):
            r = _path_race(seed_keys[b], path, pd, parent, cookies, root, lam, budget)
            if r < 0:
                out[b, j] = -1
                return out
            out[b, j] = r
    return out


@njit(cache=True, nogil=True)
def _explore(seed_key, order, parent, depth, child_ptr, child_idx, cookies, root, lam,
             max_depth, budget):
    n = parent.shape[0]
    member = np.zeros(n, np.bool_)
    for idx in range(1, order.shape[0]):
        v = order[idx]
        d = depth[v]
        if d > max_depth:
            break
        if d == 1:
            member[v] = True
            continue
        if not member[parent[v]]:
            continue
        path = _path_to(parent, depth, v)
        r = _path_race(seed_key, path, depth[path], parent, cookies, root, lam, budget)
        if r < 0:
            return member, False
        member[v] = r == 1
    return member, True


# -- extension on a general subtree ------------------------------------------

@njit(cache=True, nogil=True)
def _subtree_walk(seed_key, start, in_sub, parent, depth, child_ptr, child_idx, cookies,
                  root, lam, n_steps, stop_on_return, stop_vertex, trace_mask, out):
    """Extension on ``in_sub`` from ``start``, recording its trace on ``trace_mask``.

    The trace keeps positions inside ``trace_mask`` with repeats collapsed;
    recording stops once ``out`` is full.  Oriented edge slots: ``2c`` for
    ``parent(c) -> c``, ``2c + 1`` for ``c -> parent(c)``.  Returns the number
    of recorded positions, or minus that number if ``n_steps`` ran out first.
    """
    n = parent.shape[0]
    s = np.full(2 * n, -1.0)
    comp = np.zeros(2 * n)
    kk = np.zeros(2 * n, np.int64)
    v = start
    n_out = 0
    if trace_mask[v]:
        out[0] = v
        n_out = 1
    cap = out.shape[0]
    for step in range(1, n_steps + 1):
        if n_out >= cap:
            return n_out
        best_t = np.inf
        best_w = -1
        slot_best = -1
        if v != start and parent[v] >= 0 and in_sub[parent[v]]:
            w = parent[v]
            slot = 2 * v + 1
            if s[slot] < 0:
                s[slot] = _clock(seed_key, v, w, 0, 1) * lam ** (depth[v] - 1)
            best_t = s[slot]
            best_w = w
            slot_best = slot
        for q in range(child_ptr[v], child_ptr[v + 1]):
            c = child_idx[q]
            if not in_sub[c]:
                continue
            slot = 2 * c
            if s[slot] < 0:
                s[slot] = _clock(seed_key, v, c, 0, _shape(parent, cookies, root, v, c, 0)) \
                    * lam ** (depth[c] - 1)
            t = s[slot]
            if t < best_t or (t == best_t and c < best_w):
                best_t = t
                best_w = c
                slot_best = slot
        if best_w < 0:
            return n_out
        kk[slot_best] += 1
        if slot_best % 2 == 0:
            r_inv = lam ** (depth[best_w] - 1)
            x = _clock(seed_key, v, best_w, kk[slot_best],
                       _shape(parent, cookies, root, v, best_w, kk[slot_best])) * r_inv
        else:
            r_inv = lam ** (depth[v] - 1)
            x = _clock(seed_key, v, best_w, kk[slot_best], 1) * r_inv
        y = x - comp[slot_best]
        t2 = s[slot_best] + y
        comp[slot_best] = (t2 - s[slot_best]) - y
        s[slot_best] = t2
        v = best_w
        if trace_mask[v] and (n_out == 0 or out[n_out - 1] != v):
            out[n_out] = v
            n_out += 1
        if v == stop_vertex or (stop_on_return and v == start):
            return n_out
    return n_out if n_out >= cap else -n_out


@njit(cache=True, nogil=True)
def _trace_batch(keys, start, in_sub, parent, depth, child_ptr, child_idx, cookies, root,
                 lam, max_steps, trace_mask, length):
    out = np.zeros((keys.shape[0], length), np.int64)
    for b in range(keys.shape[0]):
        k = _subtree_walk(keys[b], start, in_sub, parent, depth, child_ptr, child_idx,
                          cookies, root, lam, max_steps, False, -1, trace_mask, out[b])
        if k < length:
            out[b, 0] = -1
    return out


def _cookie_array(config):
    return np.ascontiguousarray(config.cookies, dtype=np.int64)


def run_extension(bank, subtree, n_steps, *, stop_on_return=False, stop_vertex=-1):
    """Trajectory of the extension walk on ``subtree`` (a vertex mask or vertex list).

    Starts at the subtree's root (its shallowest vertex) and stops after
    ``n_steps`` steps, on reaching ``stop_vertex``, or, if ``stop_on_return``,
    on the first return to the start.
    """
    tree = bank.tree
    mask = _as_mask(tree, subtree)
    start = _start(tree, mask)
    if mask.sum() > 1 and not _connected(tree, mask, start):
        raise ValueError("subtree is not connected")
    out = np.empty(n_steps + 1, np.int64)
    k = _subtree_walk(np.uint64(bank.key), start, mask, tree.parent, tree.depth,
                      tree.child_ptr, tree.child_idx, _cookie_array(bank.config), tree.root,
                      float(bank.config.lam), int(n_steps), bool(stop_on_return),
                      int(stop_vertex), mask, out)
    return out[:abs(k)]


def _start(tree, mask):
    members = np.flatnonzero(mask)
    return int(members[np.argmin(tree.depth[members])])


def subtree_traces(tree, config, keys, walk_on, trace_on, length, *, max_steps=1_000_000):
    """First ``length`` positions of the trace on ``trace_on`` of the extension on ``walk_on``.

    One row per bank key.
    """
    walk_on = _as_mask(tree, walk_on)
    trace_on = _as_mask(tree, trace_on)
    keys = np.array([np.uint64(k) for k in keys], dtype=np.uint64)
    out = _trace_batch(keys, _start(tree, walk_on), walk_on, tree.parent, tree.depth,
                       tree.child_ptr, tree.child_idx, _cookie_array(config), tree.root,
                       float(config.lam), int(max_steps), trace_on, int(length))
    if np.any(out[:, 0] < 0):
        raise BudgetExceeded(f"a walk produced too short a trace within {max_steps} steps")
    return out


def _as_mask(tree, subtree):
    subtree = np.asarray(subtree)
    if subtree.dtype == bool:
        return subtree
    mask = np.zeros(tree.n_vertices, bool)
    mask[subtree] = True
    return mask


def _connected(tree, mask, start):
    members = np.flatnonzero(mask)
    others = members[members != start]
    return bool(np.all(mask[tree.parent[others]]))


def hits_before_return(bank, e, *, budget=DEFAULT_STEP_BUDGET):
    """Whether the extension on the path ``[root, e]`` hits ``e`` before returning."""
    return bool(edge_events(bank.tree, bank.config, [bank.key], [e], budget=budget)[0, 0])


def edge_events(tree, config, keys, edges, *, budget=DEFAULT_STEP_BUDGET):
    """0/1 matrix of path-extension events, one row per bank key, one column per edge."""
    keys = np.array([np.uint64(k) for k in keys], dtype=np.uint64)
    out = _edge_tests(keys, np.asarray(edges, dtype=np.int64), tree.parent, tree.depth,
                      _cookie_array(config), tree.root, float(config.lam), int(budget))
    if np.any(out < 0):
        raise BudgetExceeded(f"a path extension exceeded {budget} steps")
    return out.astype(bool)


def bank_keys(seed, n):
    return [bank_key(seed, b) for b in range(n)]


def explore_ccp(bank, depth, *, budget=DEFAULT_STEP_BUDGET):
    """Edges of the correlated cluster up to generation ``depth``, as a vertex mask.

    Edges are flagged at their child vertex; the root is always included.

    Explored frontier-first: the path test of an edge runs only when its
    parent edge is already in the cluster.
    """
    tree = bank.tree
    if depth > tree.max_depth:
        raise ValueError("depth exceeds the tree")
    member, ok = _explore(np.uint64(bank.key), tree.order, tree.parent, tree.depth,
                          tree.child_ptr, tree.child_idx, _cookie_array(bank.config),
                          tree.root, float(bank.config.lam), int(depth), int(budget))
    if not ok:
        raise BudgetExceeded(f"a path extension exceeded {budget} steps")
    member[tree.root] = True
    return member


# -- statistical checks --------------------------------------------------------

@dataclass(frozen=True)
class RestrictionReport:
    statistic: float
    p_value: float
    dof: int
    pathwise_agreement: float
    samples: int
    steps: int

    @property
    def passed(self):
        return self.p_value > 0.01


def _histograms(seqs_a, seqs_b):
    cats = sorted(set(seqs_a) | set(seqs_b))
    idx = {c: i for i, c in enumerate(cats)}
    table = np.zeros((2, len(cats)))
    for s in seqs_a:
        table[0, idx[s]] += 1
    for s in seqs_b:
        table[1, idx[s]] += 1
    # pool sparse categories so every expected count is at least 5
    order = np.argsort(-table.sum(axis=0))
    table = table[:, order]
    keep = table.sum(axis=0) >= 10
    pooled = table[:, ~keep].sum(axis=1, keepdims=True)
    table = table[:, keep]
    if pooled.sum() > 0:
        table = np.hstack([table, pooled])
    return table


def check_restriction_property(tree, config, subtree, n_samples, seed, *, steps=4,
                               max_raw_steps=1_000_000):
    """Two-sample chi-square between traces of the full walk on ``subtree`` and the extension.

    Sample A runs the extension on the whole tree with banks ``0..K-1`` and
    records the first ``steps`` moves of its trace on the subtree.  Sample B
    runs the extension on the subtree with an independent bank population.
    The fraction of banks where A's trace equals the subtree extension driven
    by the same bank is reported as ``pathwise_agreement``.
    """
    mask = _as_mask(tree, subtree)
    full = np.ones(tree.n_vertices, bool)
    keys_a = bank_keys(seed, n_samples)
    keys_b = [bank_key(seed, n_samples + b) for b in range(n_samples)]
    a = subtree_traces(tree, config, keys_a, full, mask, steps + 1, max_steps=max_raw_steps)
    same = subtree_traces(tree, config, keys_a, mask, mask, steps + 1, max_steps=max_raw_steps)
    b = subtree_traces(tree, config, keys_b, mask, mask, steps + 1, max_steps=max_raw_steps)
    agree = float(np.mean(np.all(a == same, axis=1)))
    table = _histograms([tuple(r) for r in a.tolist()], [tuple(r) for r in b.tolist()])
    if table.shape[1] < 2:
        return RestrictionReport(0.0, 1.0, 0, agree, n_samples, steps)
    chi2, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return RestrictionReport(float(chi2), float(p), int(dof), agree, n_samples, steps)


@dataclass(frozen=True)
class CorrelationReport:
    correlation: float
    se: float
    samples: int

    @property
    def passed(self):
        return abs(self.correlation) <= 3 * self.se


def check_disjoint_independence(tree, config, e1, e2, n_samples, seed):
    """Correlation of the path events of two edges whose paths share only the root."""
    p1 = {int(v) for v in tree.path(e1)[1:]}
    p2 = {int(v) for v in tree.path(e2)[1:]}
    if p1 & p2:
        raise ValueError("paths share an edge")
    ev = edge_events(tree, config, bank_keys(seed, n_samples), [e1, e2]).astype(float)
    if ev[:, 0].std() == 0 or ev[:, 1].std() == 0:
        return CorrelationReport(0.0, 1 / math.sqrt(n_samples), n_samples)
    corr = float(np.corrcoef(ev[:, 0], ev[:, 1])[0, 1])
    return CorrelationReport(corr, 1 / math.sqrt(n_samples), n_samples)


@dataclass(frozen=True)
class QuasiIndependenceReport:
    ratio: float
    ci_lo: float
    ci_hi: float
    se: float
    bound: float
    n_condition: int
    n_joint: int

    @property
    def passed(self):
        return self.ci_lo <= self.bound


def meet(tree, e1, e2):
    """Deepest common vertex of the root paths of ``e1`` and ``e2``."""
    a = {int(v) for v in tree.path(e1)}
    for v in list(tree.path(e2))[::-1]:
        if int(v) in a:
            return int(v)
    return tree.root


def estimate_quasi_independence(tree, config, e1, e2, n_samples, seed, *,
                                min_condition=30, min_joint=10):
    """Ratio ``P(e1, e2 | A) / (P(e1 | A) P(e2 | A))`` over a bank population.

    ``A`` is the event that the edge into the meeting vertex of ``e1`` and
    ``e2`` is in the cluster (always true when they meet at the root).  The
    confidence interval is a delta-method interval on the log ratio.
    """
    a = meet(tree, e1, e2)
    cols = [e1, e2] + ([a] if a != tree.root else [])
    ev = edge_events(tree, config, bank_keys(seed, n_samples), cols)
    cond = ev[:, 2] if a != tree.root else np.ones(n_samples, bool)
    n_a = int(cond.sum())
    i1, i2 = ev[cond, 0], ev[cond, 1]
    n11 = int(np.sum(i1 & i2))
    if n_a < min_condition or n11 < min_joint:
        raise InsufficientSamples(f"{n_a} conditioning events, {n11} joint events")
    p = np.array([n11, np.sum(i1 & ~i2), np.sum(~i1 & i2), np.sum(~i1 & ~i2)]) / n_a
    p1 = p[0] + p[1]
    p2 = p[0] + p[2]
    ratio = p[0] / (p1 * p2)
    g = np.array([1 / p[0] - 1 / p1 - 1 / p2, -1 / p1, -1 / p2, 0.0])
    cov = (np.diag(p) - np.outer(p, p)) / n_a
    sd_log = math.sqrt(max(0.0, float(g @ cov @ g)))
    M = config.cap if config.cap is not None else math.inf
    return QuasiIndependenceReport(float(ratio), float(ratio * math.exp(-1.96 * sd_log)),
                                   float(ratio * math.exp(1.96 * sd_log)), float(ratio * sd_log),
                                   math.exp(M + 1), n_a, n11)

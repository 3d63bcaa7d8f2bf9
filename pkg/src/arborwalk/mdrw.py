"""The M-digging random walk with depth bias and its embedded walk.

A vertex holding ``m`` cookies sends the walker back to its parent on each of
its first ``m`` visits; afterwards the walk moves along incident edges with
weight ``lam**(-|e|+1)``.  Local times count arrivals, the root's time-0 visit
included, so a vertex is cookie-free once its local time reaches ``m + 1``.
The embedded walk observes the process only at cookie-free arrivals.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from numba import njit

from .errors import BudgetExceeded
from .rng import KeyedStream, derive_key, fold, next_uniform
from .tree import build_path

DEFAULT_STEP_BUDGET = 100_000_000
_MDRW_TAG = 3


@dataclass(frozen=True)
class CookieConfig:
    """Bias ``lam`` and cookie counts.

    ``cookies`` is either a per-vertex integer array (root entry forced to 0)
    or a length-one array holding a homogeneous count for every non-root
    vertex.  ``cap`` is the smallest bound on the counts, or None when the
    configuration is declared unbounded (a truncation of an infinite
    configuration whose counts grow without bound).
    """

    lam: float
    cookies: np.ndarray
    cap: int | None
    root: int = 0

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError("bias lambda must be positive and finite")
        if np.any(self.cookies < 0):
            raise ValueError("cookie counts must be non-negative")

    @classmethod
    def homogeneous(cls, M, lam=1.0, root=0):
        if int(M) != M or M < 0:
            raise ValueError("cookie count must be a non-negative integer")
        return cls(float(lam), np.array([int(M)], dtype=np.int64), int(M), root)

    @classmethod
    def from_counts(cls, tree, counts, lam=1.0, *, unbounded=False):
        c = np.array(counts, dtype=np.int64)
        if c.shape != (tree.n_vertices,):
            raise ValueError("need one cookie count per vertex")
        c[tree.root] = 0
        cap = None if unbounded else int(c.max(initial=0))
        return cls(float(lam), c, cap, tree.root)

    @property
    def is_homogeneous(self):
        return self.cookies.shape[0] == 1

    def m(self, v):
        if v == self.root:
            return 0
        return int(self.cookies[0] if self.is_homogeneous else self.cookies[v])

    def counts(self, tree):
        """Per-vertex cookie counts as a full array."""
        if self.is_homogeneous:
            c = np.full(tree.n_vertices, int(self.cookies[0]), dtype=np.int64)
            c[tree.root] = 0
            return c
        return self.cookies


@dataclass
class WalkState:
    position: int
    local_times: dict
    step: int = 0
    trajectory: list | None = field(default=None)

    @classmethod
    def start(cls, tree, record=True):
        return cls(tree.root, {tree.root: 1}, 0, [tree.root] if record else None)


def step_weights(tree, config, v, local_time):
    """Weights ``W_n`` of the edges at ``v``: parent first, then children."""
    kids = tree.children(v)
    d = int(tree.depth[v])
    up = [config.lam ** (-d + 1)] if v != tree.root else []
    if v != tree.root and local_time <= config.m(v):
        return np.array(up + [0.0] * len(kids))
    return np.array(up + [config.lam ** (-d)] * len(kids))


def mdrw_step(state, tree, config, rng):
    """Advance ``state`` by one step and return the new position.

    A cookied vertex moves to its parent without consuming randomness.  The
    remaining steps use one uniform from ``rng`` against the weights scaled by
    ``lam**|v|``: ``lam`` for the parent edge and 1 per child edge.
    """
    v = state.position
    if v != tree.root and state.local_times[v] <= config.m(v):
        w = int(tree.parent[v])
    else:
        w = _choose(tree, v, config.lam, rng.random())
    state.position = w
    state.local_times[w] = state.local_times.get(w, 0) + 1
    state.step += 1
    if state.trajectory is not None:
        state.trajectory.append(w)
    return w


def _choose(tree, v, lam, u):
    kids = tree.children(v)
    up = lam if v != tree.root else 0.0
    u *= up + kids.shape[0]
    if v != tree.root and (u < up or kids.shape[0] == 0):
        return int(tree.parent[v])
    k = min(int(u - up), kids.shape[0] - 1)
    return int(kids[k])


def simulate(tree, config, key, n_steps):
    """Raw trajectory of ``n_steps`` steps from the root."""
    state = WalkState.start(tree)
    rng = KeyedStream(key)
    for _ in range(n_steps):
        mdrw_step(state, tree, config, rng)
    return state.trajectory


def embed_tilde(trajectory, config):
    """The embedded walk: positions at cookie-free arrivals that change vertex."""
    lt = {}
    out = []
    for x in trajectory:
        x = int(x)
        lt[x] = lt.get(x, 0) + 1
        if lt[x] >= config.m(x) + 1 and (not out or out[-1] != x):
            out.append(x)
    return out


# -- closed forms -------------------------------------------------------

def _log_abs_expm1(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, x + np.log1p(-np.exp(-np.abs(x))), np.log(-np.expm1(np.minimum(x, 0))))


def log_psi_m_lambda_value(n, m, lam):
    """``log psi`` for an edge at generation ``n`` whose child holds ``m`` cookies."""
    n = np.asarray(n, dtype=float)
    m = np.asarray(m, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if lam == 1.0:
            base = np.log((n - 1) / n)
        else:
            L = math.log(lam)
            base = _log_abs_expm1((n - 1) * L) - _log_abs_expm1(n * L)
        out = (m + 1) * base
    return np.where(n <= 1, 0.0, out)


def psi_m_lambda_value(n, m, lam):
    return np.exp(log_psi_m_lambda_value(n, m, lam))


def psi_m_lambda(tree, config, e):
    """``psi_{M,lam}(e)`` for the edge ending at vertex ``e``."""
    return float(psi_m_lambda_value(tree.depth[e], config.m(e), config.lam))


def log_psi_values(tree, config):
    """``log psi`` for every edge, indexed by child vertex (0 at the root slot)."""
    counts = config.counts(tree)
    out = log_psi_m_lambda_value(tree.depth, counts, config.lam)
    out[tree.root] = 0.0
    return out


def log_big_psi_values(tree, config):
    """``log Psi(e) = sum of log psi(g) over g <= e`` for every vertex."""
    lp = log_psi_values(tree, config)
    out = np.zeros(tree.n_vertices)
    for d in range(1, tree.max_depth + 1):
        vs = tree.vertices_at(d)
        out[vs] = out[tree.parent[vs]] + lp[vs]
    return out


def big_psi(tree, config, e):
    path = tree.path(e)[1:]
    counts = [config.m(int(v)) for v in path]
    return float(np.exp(np.sum(log_psi_m_lambda_value(tree.depth[path], counts, config.lam))))


def big_psi_homogeneous(n, M, lam):
    """Closed form of ``Psi`` at generation ``n`` for ``m == M`` everywhere."""
    n = np.asarray(n, dtype=float)
    if lam == 1.0:
        return n ** (-(M + 1.0))
    L = math.log(lam)
    return np.exp((M + 1) * (_log_abs_expm1(L) - _log_abs_expm1(n * L)))


# -- simulation kernels -------------------------------------------------

@njit(cache=True, nogil=True)
def _mdrw_walk(root, parent, child_ptr, child_idx, cookies, lam, key, target,
               budget, lt, touched):
    """Walk from the root until the embedded walk reaches ``target`` or returns.

    Returns ``(deepest embedded depth, steps)``; steps is -1 when the budget
    runs out.  ``lt`` must be zero on entry and is zero again on exit.
    """
    homog = cookies.shape[0] == 1
    state = np.empty(1, np.uint64)
    state[0] = key
    n_touched = 0
    v = root
    d = 0
    lt[root] = 1
    touched[0] = root
    n_touched = 1
    last = root
    best = 0
    result = -1
    for step in range(1, budget + 1):
        m = 0 if v == root else (cookies[0] if homog else cookies[v])
        if v != root and lt[v] <= m:
            w = parent[v]
        else:
            lo = child_ptr[v]
            nc = child_ptr[v + 1] - lo
            up = 0.0 if v == root else lam
            u = next_uniform(state) * (up + nc)
            if v != root and (u < up or nc == 0):
                w = parent[v]
            else:
                k = int(u - up)
                if k >= nc:
                    k = nc - 1
                w = child_idx[lo + k]
        if v != root and w == parent[v]:
            d -= 1
        else:
            d += 1
        v = w
        if lt[v] == 0:
            if n_touched < touched.shape[0]:
                touched[n_touched] = v
                n_touched += 1
        lt[v] += 1
        mv = 0 if v == root else (cookies[0] if homog else cookies[v])
        if lt[v] >= mv + 1 and v != last:
            last = v
            if v == root:
                result = step
                break
            if d > best:
                best = d
                if best >= target:
                    result = step
                    break
    if n_touched < touched.shape[0]:
        for i in range(n_touched):
            lt[touched[i]] = 0
    else:
        lt[:] = 0
    return best, result


@njit(cache=True, nogil=True)
def _mdrw_trials(root, parent, child_ptr, child_idx, cookies, lam, base_key,
                 n_trials, target, budget, lt, touched):
    out = np.empty(n_trials, np.int64)
    for t in range(n_trials):
        best, steps = _mdrw_walk(root, parent, child_ptr, child_idx, cookies, lam,
                                 fold(base_key, t), target, budget, lt, touched)
        if steps < 0:
            out[t] = -1
            return out[:t + 1]
        out[t] = best
    return out


def _kernel_cookies(tree, config):
    if config.is_homogeneous:
        return config.cookies
    return np.ascontiguousarray(config.cookies, dtype=np.int64)


def run_trials(tree, config, target, n_trials, key, *, budget=DEFAULT_STEP_BUDGET):
    """Deepest embedded generation reached before the embedded return, per trial."""
    if target > tree.max_depth:
        raise ValueError("target depth exceeds the tree")
    lt = np.zeros(tree.n_vertices, np.int32)
    touched = np.empty(min(tree.n_vertices, 1 << 22), np.int64)
    best = _mdrw_trials(tree.root, tree.parent, tree.child_ptr, tree.child_idx,
                        _kernel_cookies(tree, config), float(config.lam), np.uint64(key),
                        int(n_trials), int(target), int(budget), lt, touched)
    if best.shape[0] < n_trials or best[-1] < 0:
        raise BudgetExceeded(f"an M-DRW trial exceeded {budget} steps")
    return best


def trial_base_key(seed):
    return derive_key(seed, _MDRW_TAG)


@dataclass(frozen=True)
class MdrwEstimate:
    depth: int
    estimate: float
    ci_lo: float
    ci_hi: float
    se: float
    trials: int


def _binomial(depth, hits, n):
    p = hits / n
    se = math.sqrt(p * (1 - p) / n)
    return MdrwEstimate(depth, p, max(0.0, p - 1.96 * se), min(1.0, p + 1.96 * se), se, n)


def mdrw_escape_curve(tree, config, depths, trials, seed, *, budget=DEFAULT_STEP_BUDGET):
    """Escape estimates at several depths from one batch of trials."""
    depths = sorted(int(d) for d in depths)
    if trials < 1:
        raise ValueError("need at least one trial")
    best = run_trials(tree, config, depths[-1], trials, trial_base_key(seed), budget=budget)
    return [_binomial(d, int(np.sum(best >= d)), trials) for d in depths]


def estimate_mdrw_escape(tree, config, depth, trials, seed, *, budget=DEFAULT_STEP_BUDGET):
    """Probability that the embedded walk reaches generation ``depth`` before returning."""
    return mdrw_escape_curve(tree, config, [depth], trials, seed, budget=budget)[0]


@dataclass(frozen=True)
class HittingReport:
    n: int
    lam: float
    M: int
    trials: int
    estimate: float
    psi: float
    z: float

    @property
    def passed(self):
        return abs(self.z) <= 3.0


def verify_hitting_identity(n, config, trials, seed=0):
    """Compare the hitting frequency of generation ``n`` on a path with ``Psi``."""
    if trials < 1:
        raise ValueError("need at least one trial")
    path = build_path(n)
    target = big_psi(path, config, n)
    est = estimate_mdrw_escape(path, config, n, trials, seed).estimate
    se = math.sqrt(target * (1 - target) / trials)
    if se == 0:
        z = 0.0 if est == target else math.inf
    else:
        z = (est - target) / se
    return HittingReport(n, config.lam, config.cap if config.cap is not None else -1,
                         trials, est, target, z)

"""Heavy-tailed random conductances and the quenched walk on them.

Conductances are bounded by 1 with an atom there: ``P(C = 1) = p1`` and,
for ``t >= 1``, ``P(C <= 1/t) = (1 - p1) * t**-m``.  The non-atomic part is
drawn as ``U**(1/m)``.
"""

from dataclasses import dataclass
import math

import numpy as np
from numba import njit

from .errors import BudgetExceeded
from .rng import derive_key, fold, keyed_uniforms, next_uniform, uniform_at

DEFAULT_STEP_BUDGET = 100_000_000
ESCAPED = "ESCAPED"
RETURNED = "RETURNED"

_ENV_TAG = 1
_TRIAL_TAG = 2
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class HeavyTailLaw:
    m: float
    p1: float = 0.5

    def __post_init__(self):
        if not (self.m > 0 and math.isfinite(self.m)):
            raise ValueError("tail exponent m must be positive and finite")
        # p1 = 0 drops the atom at 1; it is allowed for testing the sampler
        if not 0 <= self.p1 < 1:
            raise ValueError("atom probability p1 must lie in [0, 1)")

    def cdf_small(self, t):
        """``P(C <= 1/t)`` for ``t >= 1``."""
        t = np.asarray(t, dtype=float)
        return (1 - self.p1) * t ** (-self.m)


@dataclass(frozen=True)
class ConductanceField:
    """Conductance per edge, indexed by child vertex; the root slot is NaN."""

    value: np.ndarray
    seed: int
    law: HeavyTailLaw
    env: int = 0

    def resistance(self):
        return 1.0 / self.value


@njit(cache=True, nogil=True)
def _draw(u_atom, u_body, p1, inv_m):
    if u_atom < p1:
        return 1.0
    c = u_body ** inv_m
    return c if c > _TINY else _TINY


def sample_conductance(law, rng):
    """One conductance from ``rng`` (anything with a ``random()`` method)."""
    u_atom = rng.random()
    u_body = rng.random()
    return float(_draw(u_atom, u_body, law.p1, 1.0 / law.m))


@njit(cache=True, nogil=True)
def _environment(key, n, root, p1, inv_m):
    out = np.empty(n)
    for v in range(n):
        k = fold(key, v)
        out[v] = _draw(uniform_at(k, 0), uniform_at(k, 1), p1, inv_m)
    out[root] = np.nan
    return out


def environment_key(seed, env=0):
    return derive_key(seed, _ENV_TAG, env)


def sample_environment(tree, law, seed, env=0):
    """I.i.d. conductances; edge ``v`` reads its own substream keyed by ``(seed, env, v)``."""
    key = np.uint64(environment_key(seed, env))
    value = _environment(key, tree.n_vertices, tree.root, law.p1, 1.0 / law.m)
    return ConductanceField(value, int(seed), law, int(env))


def field_from_values(tree, values, law=None):
    value = np.array(values, dtype=float)
    value[tree.root] = np.nan
    if np.any(value[tree.edges()] <= 0):
        raise ValueError("conductances must be positive")
    return ConductanceField(value, 0, law or HeavyTailLaw(1.0, 0.5))


def cumulative_resistance(tree, field):
    """``R[v] = sum of 1/C_g over edges g on the path from the root to v``."""
    r = np.zeros(tree.n_vertices)
    inv = 1.0 / field.value
    for d in range(1, tree.max_depth + 1):
        vs = tree.vertices_at(d)
        r[vs] = r[tree.parent[vs]] + inv[vs]
    return r


def psi_rc_values(tree, field):
    """``psi_RC`` for every edge: 1 at generation 1, else ``R(parent)/R(e)``."""
    r = cumulative_resistance(tree, field)
    psi = np.ones(tree.n_vertices)
    deep = np.flatnonzero(tree.depth > 1)
    psi[deep] = r[tree.parent[deep]] / r[deep]
    return psi


def psi_rc(tree, field, e):
    if tree.depth[e] <= 1:
        return 1.0
    path = tree.path(e)[1:]
    inv = 1.0 / field.value[path]
    return float(inv[:-1].sum() / inv.sum())


# -- the quenched walk --------------------------------------------------

@njit(cache=True, nogil=True)
def _incident_totals(parent, child_ptr, child_idx, cond, root):
    n = parent.shape[0]
    tot = np.zeros(n)
    for v in range(n):
        s = 0.0 if v == root else cond[v]
        for k in range(child_ptr[v], child_ptr[v + 1]):
            s += cond[child_idx[k]]
        tot[v] = s
    return tot


@njit(cache=True, nogil=True)
def _rc_step(v, root, parent, child_ptr, child_idx, cond, tot, state):
    u = next_uniform(state) * tot[v]
    if v != root:
        if u < cond[v]:
            return parent[v]
        u -= cond[v]
    lo = child_ptr[v]
    hi = child_ptr[v + 1]
    for k in range(lo, hi):
        c = child_idx[k]
        u -= cond[c]
        if u < 0.0:
            return c
    if hi > lo:
        return child_idx[hi - 1]
    return parent[v]


@njit(cache=True, nogil=True)
def _rc_walk(root, parent, child_ptr, child_idx, cond, tot, key, target, budget):
    """Walk from the root; returns (max depth reached, steps), steps = -1 on budget."""
    state = np.empty(1, np.uint64)
    state[0] = key
    v = root
    d = 0
    best = 0
    for step in range(1, budget + 1):
        w = _rc_step(v, root, parent, child_ptr, child_idx, cond, tot, state)
        if w == parent[v] and v != root:
            d -= 1
        else:
            d += 1
        v = w
        if d > best:
            best = d
            if d >= target:
                return best, step
        if v == root:
            return best, step
    return best, -1


@njit(cache=True, nogil=True)
def _rc_trials(root, parent, child_ptr, child_idx, cond, tot, env_key, n_trials, target, budget):
    out = np.empty(n_trials, np.int64)
    for t in range(n_trials):
        best, steps = _rc_walk(root, parent, child_ptr, child_idx, cond, tot,
                               fold(env_key, t), target, budget)
        if steps < 0:
            out[t] = -1 - t
            return out[:t + 1]
        out[t] = best
    return out


@njit(cache=True, nogil=True)
def _rc_step_counts(v, root, parent, child_ptr, child_idx, cond, tot, key, n):
    state = np.empty(1, np.uint64)
    state[0] = key
    nb = child_ptr[v + 1] - child_ptr[v] + 1
    counts = np.zeros(nb, np.int64)
    for _ in range(n):
        w = _rc_step(v, root, parent, child_ptr, child_idx, cond, tot, state)
        if w == parent[v] and v != root:
            counts[0] += 1
        else:
            for k in range(child_ptr[v], child_ptr[v + 1]):
                if child_idx[k] == w:
                    counts[1 + k - child_ptr[v]] += 1
    return counts


def _tree_args(tree):
    return tree.root, tree.parent, tree.child_ptr, tree.child_idx


def trial_key(seed, env=0, trial=0):
    """Key of the trajectory randomness for ``(seed, env, trial)``."""
    return int(fold(np.uint64(derive_key(seed, _TRIAL_TAG, env)), trial))


def run_rwrc_trial(tree, field, depth, key, *, budget=DEFAULT_STEP_BUDGET):
    """Run one quenched walk from the root.

    Returns ``ESCAPED`` if the walk reaches generation ``depth`` before coming
    back to the root, else ``RETURNED``.  ``key`` fixes the trajectory; see
    :func:`trial_key`.
    """
    if depth > tree.max_depth:
        raise ValueError("target depth exceeds the tree")
    cond = np.nan_to_num(field.value, nan=0.0)
    tot = _incident_totals(tree.parent, tree.child_ptr, tree.child_idx, cond, tree.root)
    best, steps = _rc_walk(*_tree_args(tree), cond, tot, np.uint64(key), depth, budget)
    if steps < 0:
        raise BudgetExceeded(f"walk exceeded {budget} steps")
    return ESCAPED if best >= depth else RETURNED


def quenched_escape_frequency(tree, field, depth, n_trials, seed, env=0, *,
                              budget=DEFAULT_STEP_BUDGET):
    """Fraction of ``n_trials`` walks in a fixed field that reach ``depth`` before returning.

    Trial ``i`` uses ``trial_key(seed, env, i)``, as :func:`run_rwrc_trial` would.
    """
    if depth > tree.max_depth:
        raise ValueError("target depth exceeds the tree")
    best = _walk_depths(tree, field, int(depth), int(n_trials),
                        derive_key(seed, _TRIAL_TAG, env), budget, env)
    return float(np.mean(best >= depth))


def step_frequencies(tree, field, v, n, key):
    """Counts of ``n`` independent one-step moves from ``v``: parent first, then children."""
    cond = np.nan_to_num(field.value, nan=0.0)
    tot = _incident_totals(tree.parent, tree.child_ptr, tree.child_idx, cond, tree.root)
    counts = _rc_step_counts(v, *_tree_args(tree), cond, tot, np.uint64(key), n)
    return counts if v != tree.root else counts[1:]


@dataclass(frozen=True)
class EscapeEstimate:
    """Annealed escape probability at one depth."""

    depth: int
    estimate: float
    ci_lo: float
    ci_hi: float
    se: float
    spread: float
    n_env: int
    n_trials: int


def _summarize(per_env, depth, k_tr):
    per_env = np.asarray(per_env, dtype=float)
    mean = float(per_env.mean())
    if per_env.shape[0] > 1:
        spread = float(per_env.std(ddof=1))
        se = spread / math.sqrt(per_env.shape[0])
    else:
        spread = 0.0
        se = math.sqrt(mean * (1 - mean) / k_tr)
    return EscapeEstimate(depth, mean, max(0.0, mean - 1.96 * se), min(1.0, mean + 1.96 * se),
                          se, spread, int(per_env.shape[0]), int(k_tr))


def _walk_depths(tree, field, target, n_trials, base_key, budget, env):
    cond = np.nan_to_num(field.value, nan=0.0)
    tot = _incident_totals(tree.parent, tree.child_ptr, tree.child_idx, cond, tree.root)
    best = _rc_trials(*_tree_args(tree), cond, tot, np.uint64(base_key), n_trials, target, budget)
    if best.shape[0] < n_trials or best[-1] < 0:
        raise BudgetExceeded(f"environment {env}: a walk exceeded {budget} steps")
    return best


def escape_curve(tree, law, depths, n_env, n_trials, seed, *, method="walk",
                 budget=DEFAULT_STEP_BUDGET):
    """Escape estimates at several depths from one batch of trials.

    ``method="walk"`` simulates every trajectory until it returns or reaches
    the deepest target.  ``method="exact"`` draws each trial's outcome from
    the exact quenched escape probability of its environment, which has the
    same law as the walk's outcome but costs no steps; it is the practical
    route when traps make trajectories very long.  In both modes the
    estimates share randomness across depths and are non-increasing in depth.
    """
    depths = sorted(int(d) for d in depths)
    if n_env < 1 or n_trials < 1:
        raise ValueError("need at least one environment and one trial")
    if depths[-1] > tree.max_depth:
        raise ValueError("target depth exceeds the tree")
    if method not in ("walk", "exact"):
        raise ValueError(f"unknown method {method!r}")
    freq = np.zeros((n_env, len(depths)))
    for env in range(n_env):
        field = sample_environment(tree, law, seed, env)
        base = derive_key(seed, _TRIAL_TAG, env)
        if method == "walk":
            best = _walk_depths(tree, field, depths[-1], n_trials, base, budget, env)
            for j, d in enumerate(depths):
                freq[env, j] = np.mean(best >= d)
        else:
            u = keyed_uniforms(base, np.arange(n_trials))
            for j, d in enumerate(depths):
                freq[env, j] = np.mean(u < quenched_escape_probability(tree, field, d))
    return [_summarize(freq[:, j], d, n_trials) for j, d in enumerate(depths)]


def estimate_escape_probability(tree, law, depth, n_env, n_trials, seed, *,
                                method="walk", budget=DEFAULT_STEP_BUDGET):
    """Annealed probability of reaching generation ``depth`` before returning."""
    return escape_curve(tree, law, [depth], n_env, n_trials, seed,
                        method=method, budget=budget)[0]


def quenched_escape_probability(tree, field, depth):
    """Exact quenched escape probability, from the effective conductance.

    ``P(reach depth N before returning) = C_eff(root -> level N) / pi(root)``.
    """
    from .flows import effective_conductance

    c = np.nan_to_num(field.value, nan=0.0)
    pi_root = float(c[tree.children(tree.root)].sum())
    return min(1.0, effective_conductance(tree, c, depth) / pi_root)

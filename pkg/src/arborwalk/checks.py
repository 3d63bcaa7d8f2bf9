"""Statistical and exact self-checks, shared by ``arborwalk verify`` and the test suite.

Every check returns a :class:`CheckResult`; budgets (trial counts, number
of instances) are arguments so the same code runs both as a quick smoke
battery and at full acceptance size.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import stats

from . import oracles
from .conductance import HeavyTailLaw, field_from_values, psi_rc_values, sample_conductance
from .flows import adapted_conductances, effective_conductance, survival_bounds
from .mdrw import CookieConfig, estimate_mdrw_escape, psi_m_lambda_value, verify_hitting_identity
from .percolation import PsiFunction, survival_estimate
from .rng import KeyedStream
from .rubin import (ClockBank, bank_key, check_restriction_property, estimate_quasi_independence,
                    explore_ccp)
from .tree import RootedTree, build_path, build_regular, build_spherically_symmetric, \
    min_cutset_value


@dataclass(frozen=True)
class CheckResult:
    name: str
    statistic: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail}"


def random_tree(rng, n_edges):
    """Uniform random recursive tree: vertex ``i`` picks a parent among ``0..i-1``."""
    parent = np.full(n_edges + 1, -1)
    for i in range(1, n_edges + 1):
        parent[i] = rng.integers(0, i)
    return RootedTree(parent)


def _heavy_field(tree, law, rng):
    stream = KeyedStream.from_seed(int(rng.integers(2 ** 62)))
    vals = np.array([sample_conductance(law, stream) for _ in range(tree.n_vertices)])
    return field_from_values(tree, vals, law)


def gamblers_ruin(n_paths=100, max_len=50, seed=0, tol=1e-10):
    """Product of ``psi_RC`` along random paths against a banded linear solve."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_paths):
        n = int(rng.integers(1, max_len + 1))
        law = HeavyTailLaw(float(rng.choice([0.25, 0.5, 1.0, 2.0])), float(rng.uniform(0.1, 0.9)))
        path = build_path(n)
        field = _heavy_field(path, law, rng)
        prod = float(np.prod(psi_rc_values(path, field)[1:]))
        exact = oracles.path_hitting_probability(field.value[1:])
        worst = max(worst, abs(prod - exact) / max(exact, 1e-300))
    return CheckResult("gamblers_ruin", worst, tol, worst <= tol,
                       f"max relative error {worst:.2e} over {n_paths} paths (tol {tol:g})")


def psi_cases(n_cases, seed, min_psi=0.01):
    """Random ``(n, lambda, M)`` triples whose target value is at least ``min_psi``.

    The first case is always ``(4, 1.0, 1)``.
    """
    rng = np.random.default_rng(seed)
    out = [(4, 1.0, 1)]
    while len(out) < n_cases:
        n = int(rng.integers(1, 9))
        lam = float(rng.choice([0.5, 0.8, 1.0, 1.25, 1.5, 2.0]))
        M = int(rng.integers(0, 4))
        psi = math.prod(psi_m_lambda_value(k, M, lam) for k in range(1, n + 1))
        if psi >= min_psi and (n, lam, M) not in out:
            out.append((n, lam, M))
    return out


def psi_identity(n_cases=20, trials=100_000, seed=0):
    """Monte Carlo hitting frequency on paths against the closed form, per case."""
    reports = []
    for i, (n, lam, M) in enumerate(psi_cases(n_cases, seed)):
        reports.append(verify_hitting_identity(n, CookieConfig.homogeneous(M, lam), trials,
                                               seed=seed * 1000 + i))
    worst = max(abs(r.z) for r in reports)
    bad = [r for r in reports if not r.passed]
    detail = f"max |z| {worst:.2f} over {len(reports)} cases at {trials} trials"
    if bad:
        detail += "; failing " + ", ".join(f"(n={r.n}, lambda={r.lam}, M={r.M})" for r in bad)
    return CheckResult("psi_identity", worst, 3.0, not bad, detail), reports


def cutset_dp(n_weightings=500, max_edges=12, seed=0):
    """Cutset DP against exhaustive enumeration on random small trees (exact arithmetic)."""
    from fractions import Fraction

    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_weightings):
        tree = random_tree(rng, int(rng.integers(1, max_edges + 1)))
        w = np.empty(tree.n_vertices, dtype=object)
        w[:] = [Fraction(int(rng.integers(0, 20)), int(rng.integers(1, 10)))
                for _ in range(tree.n_vertices)]
        if min_cutset_value(tree, w) != oracles.brute_force_min_cutset(tree, w):
            mismatches += 1
    return CheckResult("cutset_dp", mismatches, 0, mismatches == 0,
                       f"{mismatches} mismatches over {n_weightings} weightings")


def conductance_solve(n_trees=50, max_vertices=200, seed=0, tol=1e-10):
    """Series/parallel effective conductance against a Dirichlet linear solve."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_trees):
        tree = random_tree(rng, int(rng.integers(2, max_vertices)))
        c = rng.lognormal(0.0, 1.0, tree.n_vertices)
        depth = int(rng.integers(1, tree.max_depth + 1))
        fast = effective_conductance(tree, c, depth)
        slow = oracles.dirichlet_conductance(tree, c, depth)
        worst = max(worst, abs(fast - slow) / max(abs(slow), 1e-300))
    return CheckResult("conductance_solve", worst, tol, worst <= tol,
                       f"max relative error {worst:.2e} over {n_trees} trees (tol {tol:g})")


def adapted_path(n_paths=50, max_len=60, seed=0, tol=1e-10):
    """On a path with ``psi = 1`` at generation 1, adapted ``C_eff`` equals ``Psi`` at the end."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_paths):
        n = int(rng.integers(1, max_len + 1))
        path = build_path(n)
        psi = np.concatenate([[1.0, 1.0], rng.uniform(0.5, 1.0, n - 1)])[: n + 1]
        c, _ = adapted_conductances(path, psi)
        target = float(np.prod(psi[1:]))
        worst = max(worst, abs(effective_conductance(path, c, n) - target) / target)
    return CheckResult("adapted_conductance", worst, tol, worst <= tol,
                       f"max relative error {worst:.2e} over {n_paths} paths (tol {tol:g})")


def clock_marginals(n_samples=2000, seed=0, alpha=0.01):
    """KS tests of the race clocks against their Gamma/exponential laws."""
    tree = build_regular(2, 3)
    lam, M = 1.5, 2
    cfg = CookieConfig.homogeneous(M, lam)
    v = int(tree.vertices_at(2)[0])
    p = int(tree.parent[v])
    child = int(tree.children(v)[0])
    cases = [("parent->child k=0", v, child, 0, M + 1),
             ("parent->child k=1", v, child, 1, 1),
             ("child->parent k=0", v, p, 0, 1)]
    pvals = []
    for _, nu, mu, k, shape in cases:
        y = np.array([ClockBank(bank_key(seed, b), tree, cfg).clock(nu, mu, k)
                      for b in range(n_samples)])
        pvals.append(stats.kstest(y, stats.gamma(shape).cdf).pvalue)
    worst = min(pvals)
    return CheckResult("clock_marginals", worst, alpha, worst > alpha,
                       "KS p-values " + ", ".join(f"{p:.3f}" for p in pvals))


def ccp_membership(n_banks=10_000, seed=0, tree=None, config=None, n_edges=10):
    """Frequency of each test edge in the correlated cluster against ``Psi``."""
    tree = tree or build_regular(2, 5)
    config = config or CookieConfig.homogeneous(1, 1.0)
    deep = tree.max_depth
    rng = np.random.default_rng(seed)
    edges = rng.choice(np.flatnonzero(tree.depth >= 1), size=n_edges, replace=False)
    hits = np.zeros(n_edges)
    for b in range(n_banks):
        mask = explore_ccp(ClockBank(bank_key(seed, b), tree, config), deep)
        hits += mask[edges]
    zs = []
    for e, h in zip(edges, hits):
        n = int(tree.depth[e])
        target = math.prod(psi_m_lambda_value(k, int(config.cookies[0]), config.lam)
                           for k in range(1, n + 1))
        se = math.sqrt(target * (1 - target) / n_banks)
        zs.append(0.0 if se == 0 else (h / n_banks - target) / se)
    worst = max(abs(z) for z in zs)
    return CheckResult("ccp_membership", worst, 3.0, worst <= 3.0,
                       f"max |z| {worst:.2f} over {n_edges} edges, {n_banks} banks")


def restriction(n_samples=10_000, seed=0, alpha=0.01):
    """Chi-square between the full walk's subtree trace and the subtree extension."""
    tree = build_regular(2, 4)
    cfg = CookieConfig.homogeneous(1, 1.0)
    leaf = int(tree.vertices_at(4)[0])
    rep = check_restriction_property(tree, cfg, tree.path(leaf), n_samples, seed)
    return CheckResult("restriction", rep.p_value, alpha, rep.p_value > alpha,
                       f"chi2 {rep.statistic:.2f} (dof {rep.dof}) p={rep.p_value:.3f}, "
                       f"pathwise agreement {rep.pathwise_agreement:.4f}")


def sibling_pair(tree, depth):
    v = int(tree.vertices_at(depth - 1)[0])
    kids = tree.children(v)
    return int(kids[0]), int(kids[1])


def quasi_independence(M, n_samples=20_000, seed=0, depth=3, tree=None):
    """Ratio of joint to product path-event probabilities for a sibling pair."""
    tree = tree or build_regular(2, 4)
    cfg = CookieConfig.homogeneous(M, 1.0)
    e1, e2 = sibling_pair(tree, depth)
    rep = estimate_quasi_independence(tree, cfg, e1, e2, n_samples, seed)
    ok = rep.ci_hi <= rep.bound + 3 * rep.se
    return CheckResult(f"quasi_independence_M{M}", rep.ci_hi, rep.bound + 3 * rep.se, ok,
                       f"ratio {rep.ratio:.3f} CI [{rep.ci_lo:.3f}, {rep.ci_hi:.3f}] "
                       f"vs exp(M+1) = {rep.bound:.3f}"), rep


def escape_vs_cluster(trials=10_000, seed=0, depth=6):
    """Escape frequency of the embedded walk against correlated-cluster survival.

    Two independent samples on the ``b=3`` sphere tree with ``M=1``, ``lambda=1``.
    """
    tree = build_spherically_symmetric(3, depth)
    cfg = CookieConfig.homogeneous(1, 1.0)
    esc = estimate_mdrw_escape(tree, cfg, depth, trials, seed).estimate
    surv = 0
    for b in range(trials):
        mask = explore_ccp(ClockBank(bank_key(seed + 1, b), tree, cfg), depth)
        surv += bool(mask[tree.vertices_at(depth)].any())
    q = surv / trials
    pooled = (esc + q) / 2
    se = math.sqrt(2 * pooled * (1 - pooled) / trials)
    z = 0.0 if se == 0 else (esc - q) / se
    return CheckResult("escape_vs_cluster", abs(z), 3.0, abs(z) < 3.0,
                       f"escape {esc:.4f} vs cluster survival {q:.4f}, z={z:.2f}")


def sandwich(depth=100, runs=10_000, seed=0, delta=0.5, b=2, c_q=1.0):
    """Monte Carlo survival of ``delta`` percolation between the flow bounds."""
    tree = build_spherically_symmetric(b, depth)
    psi = PsiFunction.delta(delta)
    bounds = survival_bounds(tree, psi, depth, c_q)
    est = survival_estimate(tree, psi, depth, runs, seed)
    ok = bounds.lower <= est.survival <= bounds.upper
    return CheckResult("sandwich", est.survival, bounds.lower, ok,
                       f"{bounds.lower:.4f} <= {est.survival:.4f} <= {bounds.upper:.4f}"), \
        bounds, est


def battery(trials=10_000, seed=0):
    """The ``verify`` battery at a given trial budget."""
    small = max(1000, trials // 10)
    yield gamblers_ruin(seed=seed)
    yield psi_identity(20, trials, seed)[0]
    yield cutset_dp(100, seed=seed)
    yield conductance_solve(20, seed=seed)
    yield adapted_path(seed=seed)
    yield clock_marginals(small, seed)
    yield ccp_membership(small, seed)
    yield restriction(small, seed)
    yield escape_vs_cluster(small, seed)
    for M in (0, 1):
        yield quasi_independence(M, trials, seed)[0]
    yield sandwich(50, small, seed)[0]

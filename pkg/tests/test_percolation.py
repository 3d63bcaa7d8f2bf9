import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import frozen
from arborwalk.checks import random_tree
from arborwalk.conductance import HeavyTailLaw, field_from_values, sample_environment
from arborwalk.errors import ConstraintViolation
from arborwalk.mdrw import CookieConfig
from arborwalk.percolation import (PsiFunction, barrier_open, barrier_percolation,
                                   barrier_survival, check_barrier_epsilon,
                                   delta_percolation_suite, independent_percolation, rt_value,
                                   run_key, survival_curve, survival_depths, survival_estimate)
from arborwalk.tree import LevelProfile, build_path, build_regular, build_spherically_symmetric


def test_all_open_cluster():
    t = build_regular(2, 5)
    cl = independent_percolation(t, PsiFunction.constant(1.0), run_key(0), 5)
    assert cl.open.all() and cl.survived(5)
    assert survival_estimate(t, PsiFunction.constant(1.0), 5, 100, 0).survival == 1.0


def test_half_percolation_matches_galton_watson():
    t = build_regular(2, 20)
    psi = np.full(t.n_vertices, 0.5)
    est = survival_estimate(t, psi, 20, 100_000, 2)
    p = frozen.GW_SURVIVAL_BINARY_HALF_20
    assert abs(est.survival - p) < 3 * math.sqrt(p * (1 - p) / est.runs)


def test_path_telescoping_survival():
    t = build_path(10)
    n = t.depth.astype(float)
    psi = np.where(n <= 1, 1.0, (n - 1) / np.maximum(n, 1))
    est = survival_estimate(t, psi, 10, 100_000, 3)
    assert abs(est.survival - 0.1) < 3 * math.sqrt(0.09 / est.runs)


def test_delta_above_b_decays():
    t = build_spherically_symmetric(2, 200)
    shallow, deep = survival_curve(t, PsiFunction.delta(3.0, 5), [50, 200], 20000, 1)
    assert deep.ci_hi < shallow.ci_lo
    assert deep.survival < 0.2 * shallow.survival


def test_delta_below_b_survives():
    t = build_spherically_symmetric(2, 200)
    est = survival_estimate(t, PsiFunction.delta(0.5), 200, 5000, 1)
    assert est.survival > 5 * est.se > 0


def test_small_delta_survival_near_one():
    t = build_spherically_symmetric(2, 50)
    est = survival_estimate(t, PsiFunction.delta(0.01), 50, 5000, 2)
    assert est.survival > 0.999


@given(st.integers(2, 120), st.integers(0, 2 ** 32), st.floats(0.1, 1.0))
def test_cluster_connected_and_rooted(n_edges, seed, c):
    t = random_tree(np.random.default_rng(seed), n_edges)
    cl = independent_percolation(t, PsiFunction.constant(c), run_key(seed), t.max_depth)
    assert cl.open[t.root]
    members = np.flatnonzero(cl.open)
    assert np.all(cl.open[t.parent[members[members != t.root]]])


@given(st.integers(2, 80), st.integers(0, 1000))
def test_kernel_depth_matches_explicit_cluster(n_edges, seed):
    t = random_tree(np.random.default_rng(seed), n_edges)
    psi = PsiFunction.constant(0.6)
    depths = survival_depths(t, psi, t.max_depth, 20, seed)
    for r in range(20):
        cl = independent_percolation(t, psi, run_key(seed, r), t.max_depth)
        assert cl.reached == depths[r]


def test_survival_curve_monotone():
    t = build_regular(3, 8)
    ests = [e.survival for e in survival_curve(t, PsiFunction.constant(0.4), range(1, 9), 4000, 5)]
    assert all(a >= b for a, b in zip(ests, ests[1:]))


def test_constant_rt_values():
    assert rt_value(LevelProfile.regular(2, 2000), PsiFunction.constant(0.5)).verdict == "UNDECIDED"
    four = rt_value(LevelProfile.regular(4, 2000), PsiFunction.constant(0.5))
    assert four.lo <= 2.0 + 0.02 and four.hi >= 2.0 - 0.02 and four.verdict == "RT>1"


@given(st.sampled_from([2, 3, 4, 5]), st.floats(0.05, 0.95))
def test_constant_rt_grid(d, c):
    rt = math.log(d) / math.log(1 / c)
    got = rt_value(LevelProfile.regular(d, 2000), PsiFunction.constant(c))
    if rt > 1.05:
        assert got.verdict == "RT>1"
    elif rt < 0.95:
        assert got.verdict == "RT<1"


def test_mdrw_rt_classifications():
    sphere = rt_value(LevelProfile.sphere(3, 2000), PsiFunction.mdrw(CookieConfig.homogeneous(1)))
    assert sphere.verdict == "RT>1"
    binary = rt_value(LevelProfile.regular(2, 2000),
                      PsiFunction.mdrw(CookieConfig.homogeneous(0, 2.0)))
    assert binary.verdict == "UNDECIDED"


def test_rt_explicit_tree_agrees_with_profile_off_boundary():
    t = build_regular(2, 12)
    assert rt_value(t, PsiFunction.constant(0.8)).verdict == "RT>1"
    assert rt_value(t, PsiFunction.constant(0.3)).verdict == "RT<1"


def test_delta_suite_signatures():
    t = build_spherically_symmetric(2, 100)
    sub, sup = delta_percolation_suite(t, 2, [3.0, 0.5], 100, 2000, 7, clusters=2)
    assert sub.subcritical_signature and not sup.subcritical_signature
    assert sup.clusters_measured == 2 and sup.brr_consistent


def test_barrier_unit_field_opens_every_edge():
    t = build_regular(2, 6)
    f = field_from_values(t, np.ones(t.n_vertices), HeavyTailLaw(0.5, 0.5))
    ok = barrier_open(t, f, 0.1, 6)
    # 1/C = 1 <= n^((1+eps)/m) and R = n <= n^(1/m + ...) for m <= 1
    assert ok[t.depth <= 6].all()


def test_barrier_deterministic():
    t = build_spherically_symmetric(2, 30)
    f = sample_environment(t, HeavyTailLaw(2.0, 0.5), 4)
    a = barrier_percolation(t, f, 0.05, 30)
    b = barrier_percolation(t, f, 0.05, 30)
    assert np.array_equal(a.open, b.open)


def test_barrier_survives_when_transient():
    t = build_spherically_symmetric(2, 100)
    est = barrier_survival(t, HeavyTailLaw(2.0, 0.5), 0.05, 100, 200, 1, b=2)
    assert est.ci_lo > 0


@pytest.mark.parametrize("eps,m,b", [(0.5, 2.0, 2.0), (0.0, 2.0, 2.0), (0.05, 0.2, 0.9),
                                     (1.5, 2.0, 3.0)])
def test_barrier_constraints(eps, m, b):
    with pytest.raises(ConstraintViolation):
        check_barrier_epsilon(eps, m, b)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import frozen
from arborwalk import oracles
from arborwalk.checks import random_tree
from arborwalk.errors import TreeBudgetError, TreeParseError
from arborwalk.tree import (LevelProfile, RootedTree, build_path, build_regular,
                            build_spherically_symmetric, estimate_branching,
                            estimate_branching_ruin, load_tree, log_min_cutset_value,
                            min_cutset_value, save_tree, sphere_sizes)


def test_sphere_b0_is_a_path():
    t = build_spherically_symmetric(0, 5)
    assert t.n_edges == 5 and list(t.level_sizes) == [1] * 6


def test_sphere_b1_level_sizes():
    assert list(build_spherically_symmetric(1, 4).level_sizes) == [1, 1, 2, 3, 4]


def test_sphere_b2_round_robin_counts():
    t = build_spherically_symmetric(2, 3)
    assert list(t.level_sizes) == [1, 1, 4, 9]
    counts = tuple(t.n_children(v) for v in t.vertices_at(2))
    assert counts == frozen.SPHERE_B2_LEVEL2_COUNTS
    assert t.is_spherically_symmetric() is False


def test_sphere_children_interleave():
    t = build_spherically_symmetric(2, 3)
    lvl2, lvl3 = t.vertices_at(2), t.vertices_at(3)
    for k, v in enumerate(lvl3):
        assert t.parent[v] == lvl2[k % 4]


def test_sphere_sizes_round_half_up():
    assert list(sphere_sizes(0.5, 6)) == [1, 1, 1, 2, 2, 2, 2]


@pytest.mark.parametrize("d,n,sizes", [(1, 7, [1] * 8), (2, 3, [1, 2, 4, 8]), (3, 2, [1, 3, 9])])
def test_regular_sizes(d, n, sizes):
    t = build_regular(d, n)
    assert list(t.level_sizes) == sizes
    assert t.is_spherically_symmetric()


def test_regular_vertex_count():
    assert build_regular(2, 3).n_vertices == 15


def test_vertex_budget():
    with pytest.raises(TreeBudgetError):
        build_regular(3, 40)


def test_load_root_only():
    t = load_tree("root 0\n")
    assert t.n_vertices == 1 and t.n_edges == 0


def test_load_cherry():
    t = load_tree("root 0\n1 0\n2 0\n")
    assert list(t.level_sizes) == [1, 2]


@pytest.mark.parametrize("text,kind", [
    ("1 0\n", "missing_root"),
    ("root 0\nroot 1\n", "duplicate_root"),
    ("root 0\n1 0\n1 0\n", "duplicate_child"),
    ("root 0\n1 7\n", "orphan"),
    ("root 0\n1 2\n2 1\n", "cycle"),
    ("root 0\n1\n", "syntax"),
])
def test_parse_errors(text, kind):
    with pytest.raises(TreeParseError) as info:
        load_tree(text)
    assert info.value.kind == kind


def test_round_trip_random_tree(tmp_path):
    rng = np.random.default_rng(3)
    t = random_tree(rng, 99)
    path = tmp_path / "t.txt"
    save_tree(t, path)
    again = load_tree(path.read_text())
    assert again.serialize() == load_tree(t.serialize()).serialize()
    assert np.array_equal(again.level_sizes, t.level_sizes)


def test_path_cutset_is_deepest_singleton():
    t = build_path(10)
    w = 2.0 ** -t.depth.astype(float)
    assert min_cutset_value(t, w) == pytest.approx(2.0 ** -10)


def test_binary_halving_cutsets_sum_to_one():
    t = build_regular(2, 8)
    w = 2.0 ** -t.depth.astype(float)
    for n in (1, 4, 8):
        assert min_cutset_value(t, w, n) == pytest.approx(1.0)


@given(st.integers(1, 12), st.integers(0, 2 ** 32))
def test_unit_weights_match_enumeration(n_edges, seed):
    t = random_tree(np.random.default_rng(seed), n_edges)
    w = np.ones(t.n_vertices)
    assert min_cutset_value(t, w) == pytest.approx(oracles.brute_force_min_cutset(t, w))


@given(st.integers(1, 60), st.integers(0, 2 ** 32))
def test_log_dp_matches_linear_dp(n_edges, seed):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, n_edges)
    w = rng.uniform(0.01, 3.0, t.n_vertices)
    assert log_min_cutset_value(t, np.log(w)) == pytest.approx(math.log(min_cutset_value(t, w)))


@given(st.integers(1, 60), st.integers(0, 2 ** 32))
def test_cutset_value_non_increasing_in_depth(n_edges, seed):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, n_edges)
    # weights decreasing along paths make deeper truncations no more expensive
    w = rng.uniform(0.2, 1.0, t.n_vertices) ** t.depth
    vals = [min_cutset_value(t, w, n) for n in range(1, t.max_depth + 1)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_induced_subtree_and_truncate():
    t = build_regular(2, 4)
    sub = t.truncate(2)
    assert list(sub.level_sizes) == [1, 2, 4]
    keep = np.zeros(t.n_vertices, bool)
    keep[t.path(int(t.vertices_at(4)[0]))] = True
    path, ids = t.induced(keep)
    assert path.n_edges == 4 and ids[0] == t.root
    bad = np.zeros(t.n_vertices, bool)
    bad[t.vertices_at(2)] = True
    with pytest.raises(ValueError):
        t.induced(bad)


def test_profile_matches_dp_on_symmetric_tree():
    t = build_regular(3, 6)
    lw = -0.9 * t.depth * math.log(3)
    prof = t.profile()
    levels = -0.9 * np.arange(7) * math.log(3)
    got = prof.log_cutset_values(levels, [2, 4, 6])
    want = [log_min_cutset_value(t, lw, n) for n in (2, 4, 6)]
    assert np.allclose(got, want)


def test_branching_ruin_path():
    est = estimate_branching_ruin(LevelProfile.sphere(0, 2000))
    assert not est.divergent and 0 <= est.lo and est.hi <= 0.2


def test_branching_ruin_sphere_b2():
    assert estimate_branching_ruin(LevelProfile.sphere(2, 2000)).overlaps(1.7, 2.3)


def test_branching_ruin_binary_divergent():
    assert estimate_branching_ruin(LevelProfile.regular(2, 2000)).divergent


def test_branching_path_and_regular():
    tol = 0.01
    path = estimate_branching(LevelProfile.sphere(0, 2000), tol=tol)
    assert path.lo >= 1 - 1e-9 and path.hi <= 1 + 2 * tol
    assert estimate_branching(LevelProfile.regular(3, 2000)).overlaps(2.9, 3.1)
    sphere = estimate_branching(LevelProfile.sphere(2, 2000), tol=tol)
    assert sphere.lo >= 1 - 1e-9 and sphere.hi <= 1 + 2 * tol


def test_explicit_tree_estimator_agrees_with_profile():
    t = build_regular(2, 12)
    assert estimate_branching(t).overlaps(1.9, 2.1)


def test_rejects_cycles_in_parent_map():
    with pytest.raises(ValueError):
        RootedTree([-1, 2, 1])

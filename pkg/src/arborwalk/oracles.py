"""Independent reference computations used to validate the fast paths.

Each oracle takes a different route from the code it checks: exhaustive
enumeration instead of dynamic programming, a linear solve instead of a
recursion or a telescoping product, and generating-function iteration
instead of simulation.
"""

from fractions import Fraction
from itertools import product

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve


def brute_force_min_cutset(tree, w, depth=None):
    """Minimum of ``sum w[e]`` over edge sets meeting every root-to-leaf path.

    Enumerates all subsets of edges up to ``depth``; use on tiny trees only.
    Any blocking set contains a minimal one and weights are non-negative, so
    the minimum over blocking sets equals the minimum over cutsets.
    """
    depth = tree.max_depth if depth is None else depth
    edges = [int(v) for v in tree.order[1:] if tree.depth[v] <= depth]
    if len(edges) > 20:
        raise ValueError("too many edges to enumerate")
    children = {v: [int(c) for c in tree.children(v) if tree.depth[c] <= depth] for v in edges}
    leaves = [v for v in edges if not children[v]]
    paths = [set(tree.path(v)[1:]) for v in leaves]
    best = None
    for bits in product((0, 1), repeat=len(edges)):
        chosen = {e for e, b in zip(edges, bits) if b}
        if all(p & chosen for p in paths):
            total = sum((w[e] for e in chosen), start=0 * w[edges[0]])
            if best is None or total < best:
                best = total
    return best


def path_hitting_probability(conductances):
    """Gambler's ruin on a path with edge conductances ``c_1..c_n``.

    Probability that the walk started at the first vertex after the root
    reaches the far end before the root, from the harmonic equations.  The
    first step from the root is forced, so this also equals the probability
    of reaching the end before returning.  The tridiagonal system is
    eliminated in exact rational arithmetic: heavy-tailed conductances span
    many orders of magnitude and a floating-point solve loses digits.
    """
    c = [Fraction(float(x)) for x in np.asarray(conductances, dtype=float)]
    n = len(c)
    if n == 1:
        return 1.0
    # unknowns h(1..n-1) with h(0) = 0, h(n) = 1; row j is vertex j+1
    m = n - 1
    diag = [c[j] + c[j + 1] for j in range(m)]
    rhs = [Fraction(0)] * m
    rhs[-1] = c[-1]
    for j in range(1, m):
        w = c[j] / diag[j - 1]  # sub-diagonal of row j is -c[j], super of row j-1 is -c[j]
        diag[j] -= w * c[j]
        rhs[j] += w * rhs[j - 1]
    h = rhs[-1] / diag[-1]
    for j in range(m - 2, -1, -1):
        h = (rhs[j] + c[j + 1] * h) / diag[j]
    return float(h)


def dirichlet_conductance(tree, c, depth):
    """Current into the root with potential 1 there and 0 on generation ``depth``.

    Builds the weighted Laplacian of the truncation and solves for interior
    potentials directly.
    """
    keep = np.flatnonzero(tree.depth <= depth)
    idx = {int(v): i for i, v in enumerate(keep)}
    n = keep.shape[0]
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for v in keep[1:]:
        v = int(v)
        p = int(tree.parent[v])
        i, j = idx[v], idx[p]
        rows += [i, j]
        cols += [j, i]
        vals += [-c[v], -c[v]]
        diag[i] += c[v]
        diag[j] += c[v]
    lap = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n)) + sparse.diags(diag)
    boundary = np.array([tree.depth[v] == depth for v in keep])
    root = idx[int(tree.root)]
    fixed = boundary.copy()
    fixed[root] = True
    phi = np.zeros(n)
    phi[root] = 1.0
    free = np.flatnonzero(~fixed)
    if free.size:
        a = lap[free][:, free].tocsc()
        b = -lap[free][:, np.flatnonzero(fixed)] @ phi[fixed]
        phi[free] = spsolve(a, b) if free.size > 1 else b / a.toarray()[0, 0]
    return float((lap @ phi)[root])


def galton_watson_survival(pgf, generations):
    """``P(Z_N > 0)`` from ``Z_0 = 1`` by iterating the offspring generating function."""
    s = 0.0
    for _ in range(generations):
        s = pgf(s)
    return 1.0 - s

"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line."""

import math
import time

import numpy as np

from arborwalk import (CookieConfig, HeavyTailLaw, LevelProfile, build_spherically_symmetric,
                       checks, cli, escape_curve, estimate_branching,
                       estimate_branching_ruin, estimate_mdrw_escape)
from arborwalk.flows import symmetric_effective_conductance
from arborwalk.mdrw import big_psi_homogeneous
from arborwalk.percolation import PsiFunction, rt_value

from conftest import ACCEPTANCE


class Criterion:
    def __init__(self, number, limit):
        self.number, self.limit = number, limit
        self.parts = []
        self.ok = True

    def check(self, ok, text):
        self.ok &= bool(ok)
        self.parts.append(("" if ok else "FAILED ") + text)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is None:
            if self.limit is not None:
                self.check(elapsed < self.limit, f"{elapsed:.1f}s (limit {self.limit:g}s)")
        else:
            self.ok = False
            self.parts.append(f"error {exc_type.__name__}: {exc}")
        line = f"{'PASS' if self.ok else 'FAIL'} criterion {self.number}: " + "; ".join(self.parts)
        ACCEPTANCE[self.number] = line
        print(line)
        if exc_type is None:
            assert self.ok, line
        return False


def test_criterion_01_gamblers_ruin():
    with Criterion(1, 5) as c:
        r = checks.gamblers_ruin(n_paths=100, max_len=50, seed=0, tol=1e-10)
        c.check(r.passed, r.detail)


def test_criterion_02_closed_form_psi():
    with Criterion(2, 120) as c:
        example = float(big_psi_homogeneous(4, 1, 1.0))
        c.check(abs(example - 0.0625) < 1e-12, f"Psi(|e|=4, M=1, lambda=1) = {example:.6g}")
        r, reports = checks.psi_identity(n_cases=20, trials=100_000, seed=0)
        c.check(r.passed and len(reports) == 20, r.detail)


def test_criterion_03_cutset_dp():
    with Criterion(3, 10) as c:
        r = checks.cutset_dp(n_weightings=500, max_edges=12, seed=0)
        c.check(r.passed, r.detail)


def test_criterion_04_branching_estimators():
    with Criterion(4, 60) as c:
        path = estimate_branching_ruin(LevelProfile.sphere(0.0, 2000))
        c.check(not path.divergent and path.hi <= 0.2, f"path br_r {path}")
        sphere = estimate_branching_ruin(LevelProfile.sphere(2.0, 2000))
        c.check(not sphere.divergent and sphere.overlaps(1.7, 2.3), f"b=2 sphere br_r {sphere}")
        regular = LevelProfile.regular(3, 2000)
        br = estimate_branching(regular)
        c.check(not br.divergent and br.overlaps(2.9, 3.1), f"d=3 br {br}")
        brr = estimate_branching_ruin(regular)
        c.check(brr.divergent, f"d=3 br_r {brr}")


def test_criterion_05_effective_conductance():
    with Criterion(5, 5) as c:
        ceff = symmetric_effective_conductance([2] * 31, np.ones(31), 30)
        c.check(abs(ceff - 1) < 1e-6, f"binary depth 30 C_eff {ceff:.12f}")
        r = checks.conductance_solve(n_trees=50, max_vertices=200, seed=0, tol=1e-10)
        c.check(r.passed, r.detail)


def test_criterion_06_rubin_coupling():
    with Criterion(6, 300) as c:
        for r in (checks.clock_marginals(2000, 0), checks.ccp_membership(10_000, 0, n_edges=10),
                  checks.restriction(10_000, 0)):
            c.check(r.passed, f"{r.name} {r.detail}")


def test_criterion_07_quasi_independence():
    with Criterion(7, 300) as c:
        for M in (0, 1, 2):
            r, _ = checks.quasi_independence(M, n_samples=20_000, seed=0)
            c.check(r.passed, f"M={M} {r.detail}")


def _sigmas(a, b):
    return (a.estimate - b.estimate) / math.hypot(a.se, b.se)


def test_criterion_08_phase_signatures():
    with Criterion(8, 600) as c:
        tree = build_spherically_symmetric(2, 100)
        hi, lo = (escape_curve(tree, HeavyTailLaw(m, 0.5), [100], 100, 100, 1,
                               method="exact")[0] for m in (2.0, 0.25))
        z = _sigmas(hi, lo)
        c.check(z > 5, f"(a) RWRC m=2 {hi.estimate:.4f} vs m=0.25 {lo.estimate:.4f}: {z:.1f} sigma")
        tree3 = build_spherically_symmetric(3, 100)
        one, four = (estimate_mdrw_escape(tree3, CookieConfig.homogeneous(M, 1.0), 100, 10_000, 1)
                     for M in (1, 4))
        z = _sigmas(one, four)
        c.check(z > 5, f"(b) M-DRW M=1 {one.estimate:.4f} vs M=4 {four.estimate:.4f}: "
                       f"{z:.1f} sigma")
        for M in (1, 3):
            e = estimate_mdrw_escape(tree, CookieConfig.homogeneous(M, 0.8), 100, 10_000, 1)
            c.check(e.ci_lo > 0, f"(c) lambda=0.8 M={M} {e.estimate:.4f} CI lower {e.ci_lo:.4f}")


def test_criterion_09_sandwich():
    with Criterion(9, 120) as c:
        r, bounds, est = checks.sandwich(depth=100, runs=10_000, seed=0, delta=0.5, b=2, c_q=1.0)
        c.check(r.passed, r.detail)


def test_criterion_10_rt_grid():
    with Criterion(10, 120) as c:
        wrong, total, boundary = [], 0, []
        grid = [(1.0, M, LevelProfile.sphere(b, 2000), b, M + 1.0)
                for M in range(4) for b in np.arange(0.5, 5.01, 0.5)]
        grid += [(lam, M, LevelProfile.regular(d, 2000), d, lam ** (M + 1))
                 for lam in (1.5, 2.0, 3.0) for M in range(3) for d in range(2, 11)]
        for lam, M, family, x, critical in grid:
            got = rt_value(family, PsiFunction.mdrw(CookieConfig.homogeneous(M, lam))).verdict
            if math.isclose(x, critical):
                boundary.append(got)
                continue
            total += 1
            if got != ("RT>1" if x > critical else "RT<1"):
                wrong.append((lam, M, x, got))
        c.check(not wrong, f"{total - len(wrong)}/{total} off-boundary points agree"
                           + (f", mismatches {wrong}" if wrong else ""))
        c.check(True, f"{len(boundary)} boundary points: "
                      + ", ".join(f"{v}" for v in boundary))


COMMANDS = [
    ["tree-info", "--seed", "3"],
    ["phase-rwrc", "--seed", "3", "--set", "sweep.depths=10,20", "--set", "trials.env=20",
     "--set", "trials.per_env=50"],
    ["phase-rwrc", "--seed", "3", "--set", "walk.method=walk", "--set", "sweep.depths=5,10",
     "--set", "trials.env=10", "--set", "trials.per_env=20"],
    ["phase-mdrw", "--seed", "3", "--set", "sweep.depths=10,20", "--set", "trials.count=2000"],
    ["percolate", "--seed", "3", "--set", "sweep.depths=10,20", "--set", "perc.runs=2000"],
    ["percolate", "--seed", "3", "--set", "perc.psi=barrier", "--set", "sweep.depths=10",
     "--set", "trials.env=20"],
    ["flows", "--seed", "3", "--set", "sweep.depths=10,20"],
    ["verify", "--seed", "3", "--set", "verify.trials=2000"],
]


def test_criterion_11_reproducibility(tmp_path, monkeypatch):
    with Criterion(11, None) as c:
        for i, argv in enumerate(COMMANDS):
            outs = []
            for run, threads in enumerate(("1", "4")):
                monkeypatch.setenv("ARBORWALK_THREADS", threads)
                path = tmp_path / f"{i}_{run}.csv"
                code = cli.main(argv + ["-o", str(path)])
                ok = code in (cli.EXIT_OK, cli.EXIT_CHECK) and path.exists()
                outs.append(path.read_bytes() if ok else None)
            c.check(outs[0] is not None and outs[0] == outs[1],
                    f"{argv[0]} {'identical' if outs[0] == outs[1] else 'differs'}")

"""The arborwalk command line: tree reports, phase sweeps and self-checks.

Every subcommand reads a flat ``key = value`` config (``--config``) plus
``--set key=value`` overrides; a seed is mandatory.  Sweeps write CSV with
the config hash and seed on every row; ``--figure`` also renders a PNG.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import csv
import math
import os
import sys

import numpy as np

from . import checks
from .conductance import HeavyTailLaw, escape_curve
from .config import ConfigError, ExperimentConfig
from .errors import ArborwalkError, BudgetExceeded, TreeBudgetError, ZeroFlow
from .flows import build_unit_flow, survival_bounds
from .mdrw import CookieConfig, mdrw_escape_curve
from .percolation import PsiFunction, barrier_survival_curve, survival_curve
from .tree import (LevelProfile, build_path, build_regular, build_spherically_symmetric,
                   estimate_branching, estimate_branching_ruin, load_tree)

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_BUDGET = 0, 1, 2, 3

TRANSIENT, RECURRENT, UNDECIDED = "TRANSIENT-LIKE", "RECURRENT-LIKE", "UNDECIDED"

RWRC_COLUMNS = ["tree_kind", "b_or_d", "depth", "m", "p1", "K_env", "K_tr", "estimate",
                "ci_lo", "ci_hi", "seed", "method", "verdict", "escape_floor", "slope_floor",
                "config_hash"]
MDRW_COLUMNS = ["tree_kind", "b_or_d", "depth", "lambda", "M", "trials", "estimate", "ci_lo",
                "ci_hi", "seed", "verdict", "escape_floor", "slope_floor", "config_hash"]
PERC_COLUMNS = ["psi_kind", "param", "delta_or_eps", "n0", "depth", "K", "survival", "ci_lo",
                "ci_hi", "seed", "config_hash"]
FLOW_COLUMNS = ["psi_kind", "param", "gamma", "depth", "c_eff", "energy", "path_sum_bound",
                "lower", "upper", "seed", "config_hash"]
VERIFY_COLUMNS = ["check", "statistic", "threshold", "status", "seed", "config_hash"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".10g")
    return str(x)


def worker_count():
    raw = os.environ.get("ARBORWALK_THREADS", "")
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("ARBORWALK_THREADS must be a positive integer") from None
    if n < 1:
        raise ConfigError("ARBORWALK_THREADS must be a positive integer")
    return n


def run_grid(tasks):
    """Evaluate zero-argument callables on the worker pool; results in task order."""
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(lambda task: task(), tasks))


def verdict(depths, estimates, deepest_ci_lo, *, floor=0.02, slope_floor=-0.001,
            allow_transient=True):
    """Classify an escape curve.

    TRANSIENT-LIKE needs the deepest lower CI edge above ``floor`` and a
    least-squares slope against depth above ``slope_floor``.  RECURRENT-LIKE
    needs the deepest estimate below ``floor`` and no increase from the
    shallowest to the deepest depth.
    """
    est = np.asarray(estimates, dtype=float)
    slope = float(np.polyfit(np.asarray(depths, float), est, 1)[0]) if est.size > 1 else 0.0
    if allow_transient and deepest_ci_lo > floor and slope > slope_floor:
        return TRANSIENT
    if est[-1] < floor and est[-1] <= est[0]:
        return RECURRENT
    return UNDECIDED


# -- config helpers -------------------------------------------------------

def build_tree(cfg, depth):
    kind = cfg.get("tree.kind")
    if kind == "sphere":
        return build_spherically_symmetric(cfg.float("tree.b"), depth)
    if kind == "regular":
        return build_regular(cfg.int("tree.d"), depth)
    if kind == "path":
        return build_path(depth)
    if kind == "file":
        with open(cfg.get("tree.file")) as fh:
            tree = load_tree(fh)
        if depth is not None and depth < tree.max_depth:
            tree = tree.truncate(depth)
        return tree
    raise ConfigError(f"unknown tree.kind {kind!r} (sphere, regular, path, file)")


def tree_param(cfg):
    return {"sphere": cfg.get("tree.b"), "regular": cfg.get("tree.d")}.get(cfg.get("tree.kind"), "")


def depths_for(cfg):
    depths = sorted(set(cfg.ints("sweep.depths")))
    if not depths or depths[0] < 1:
        raise ConfigError("sweep.depths must list positive depths")
    return depths


def verdict_args(cfg):
    return {"floor": cfg.float("verdict.escape_floor"),
            "slope_floor": cfg.float("verdict.slope_floor")}


def thresholds_line(cfg):
    a = verdict_args(cfg)
    return (f"verdict thresholds: escape floor {fmt(a['floor'])}, "
            f"slope floor {fmt(a['slope_floor'])}")


def psi_grid(cfg, *, allow_barrier=False):
    """``(kind, label, delta_or_eps, n0, psi)`` per sweep point of the percolation config."""
    kind = cfg.get("perc.psi")
    if kind == "delta":
        n0 = cfg.int("perc.n0")
        return [("DELTA", p.label(), d, n0, p)
                for d in sorted(cfg.floats("perc.delta"))
                for p in [PsiFunction.delta(d, n0)]]
    if kind == "constant":
        return [("CONSTANT", p.label(), "", "", p)
                for c in sorted(cfg.floats("perc.c")) for p in [PsiFunction.constant(c)]]
    if kind == "mdrw":
        return [("MDRW", f"lambda={fmt(lam)};M={M}", "", "",
                 PsiFunction.mdrw(CookieConfig.homogeneous(M, lam)))
                for lam in sorted(cfg.floats("sweep.lambda")) for M in sorted(cfg.ints("sweep.M"))]
    if kind == "barrier" and allow_barrier:
        label = f"m={fmt(cfg.float('walk.m'))};p1={fmt(cfg.float('walk.p1'))}"
        return [("BARRIER", label, e, "", None) for e in sorted(cfg.floats("perc.eps"))]
    allowed = "delta, constant, mdrw" + (", barrier" if allow_barrier else "")
    raise ConfigError(f"unknown perc.psi {kind!r} ({allowed})")


class Output:
    """CSV (or text) sink: a file path, or stdout for ``-``."""

    def __init__(self, path):
        self.path = path or "-"

    def __enter__(self):
        if self.path == "-":
            self.fh = sys.stdout
        else:
            self.fh = open(self.path, "w", newline="")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()
        else:
            self.fh.flush()


def write_csv(cfg, columns, rows):
    with Output(cfg.get("output")) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def note(msg):
    print(msg, file=sys.stderr)


# -- subcommands ----------------------------------------------------------

def cmd_tree_info(cfg):
    kind = cfg.get("tree.kind")
    depth = cfg.int("tree.depth")
    tol = cfg.float("estimate.tol")
    tree = build_tree(cfg, depth)
    if kind in ("sphere", "path"):
        family = LevelProfile.sphere(cfg.float("tree.b") if kind == "sphere" else 0.0,
                                     cfg.int("estimate.depth"))
        how = f"per-level aggregation to depth {family.max_depth}"
    elif kind == "regular":
        family = LevelProfile.regular(cfg.int("tree.d"), cfg.int("estimate.depth"))
        how = f"per-level aggregation to depth {family.max_depth}"
    else:
        family = tree
        how = f"cutset dynamic programming to depth {tree.max_depth}"
    try:
        br = estimate_branching(family, tol=tol)
        brr = estimate_branching_ruin(family, tol=tol)
    except ValueError:
        br = brr = "n/a (truncation too shallow for three probe depths)"
    sizes = [int(s) for s in tree.level_sizes]
    shown = sizes if len(sizes) <= 12 else sizes[:8] + ["..."] + sizes[-3:]
    key = {"sphere": "b", "regular": "d"}.get(kind)
    label = f"{kind} {key}={tree_param(cfg)}" if key else kind
    lines = [f"tree: {label} depth={tree.max_depth}",
             f"vertices: {tree.n_vertices}",
             f"spherically symmetric: {'yes' if tree.is_spherically_symmetric() else 'no'}",
             "level sizes: " + " ".join(str(s) for s in shown),
             f"br: {br}",
             f"br_r: {brr}",
             f"estimated by {how}, bisection tolerance {fmt(tol)}",
             f"seed: {cfg.seed}",
             f"config_hash: {cfg.hash}"]
    with Output(cfg.get("output")) as fh:
        fh.write("\n".join(lines) + "\n")
    if cfg.get("figure"):
        from . import plotting
        plotting.level_sizes(cfg.get("figure"), sizes, f"{kind} tree level sizes")
    return EXIT_OK


def cmd_phase_rwrc(cfg):
    depths = depths_for(cfg)
    tree = build_tree(cfg, depths[-1])
    ms = sorted(cfg.floats("sweep.m"))
    p1 = cfg.float("walk.p1")
    k_env, k_tr = cfg.int("trials.env"), cfg.int("trials.per_env")
    method = cfg.get("walk.method")
    budget = cfg.int("walk.budget")
    seed = cfg.seed

    def point(m):
        return lambda: escape_curve(tree, HeavyTailLaw(m, p1), depths, k_env, k_tr, seed,
                                    method=method, budget=budget)

    curves = run_grid([point(m) for m in ms])
    floor, slope_floor = verdict_args(cfg).values()
    rows, series = [], {}
    note(thresholds_line(cfg))
    for m, curve in zip(ms, curves):
        v = verdict(depths, [e.estimate for e in curve], curve[-1].ci_lo, **verdict_args(cfg))
        note(f"m={fmt(m)}: {v}")
        series[f"m={fmt(m)}"] = ([e.depth for e in curve], [e.estimate for e in curve],
                                 [e.ci_lo for e in curve], [e.ci_hi for e in curve])
        for e in curve:
            rows.append({"tree_kind": cfg.get("tree.kind"), "b_or_d": tree_param(cfg),
                         "depth": e.depth, "m": m, "p1": p1, "K_env": k_env, "K_tr": k_tr,
                         "estimate": e.estimate, "ci_lo": e.ci_lo, "ci_hi": e.ci_hi,
                         "seed": seed, "method": method, "verdict": v,
                         "escape_floor": floor, "slope_floor": slope_floor,
                         "config_hash": cfg.hash})
    write_csv(cfg, RWRC_COLUMNS, rows)
    if cfg.get("figure"):
        from . import plotting
        plotting.curves(cfg.get("figure"), series, title="RWRC escape probability",
                        xlabel="depth N", ylabel="P(reach depth N before return)",
                        hline=verdict_args(cfg)["floor"])
    return EXIT_OK


def cmd_phase_mdrw(cfg):
    depths = depths_for(cfg)
    tree = build_tree(cfg, depths[-1])
    grid = [(lam, M) for lam in sorted(cfg.floats("sweep.lambda"))
            for M in sorted(cfg.ints("sweep.M"))]
    trials = cfg.int("trials.count")
    budget = cfg.int("walk.budget")
    seed = cfg.seed

    def point(lam, M):
        conf = CookieConfig.homogeneous(M, lam)
        return lambda: mdrw_escape_curve(tree, conf, depths, trials, seed, budget=budget)

    curves = run_grid([point(lam, M) for lam, M in grid])
    floor, slope_floor = verdict_args(cfg).values()
    rows, series = [], {}
    note(thresholds_line(cfg))
    for (lam, M), curve in zip(grid, curves):
        v = verdict(depths, [e.estimate for e in curve], curve[-1].ci_lo, **verdict_args(cfg))
        note(f"lambda={fmt(lam)} M={M}: {v}")
        series[f"lambda={fmt(lam)}, M={M}"] = (
            [e.depth for e in curve], [e.estimate for e in curve],
            [e.ci_lo for e in curve], [e.ci_hi for e in curve])
        for e in curve:
            rows.append({"tree_kind": cfg.get("tree.kind"), "b_or_d": tree_param(cfg),
                         "depth": e.depth, "lambda": lam, "M": M, "trials": trials,
                         "estimate": e.estimate, "ci_lo": e.ci_lo, "ci_hi": e.ci_hi,
                         "seed": seed, "verdict": v, "escape_floor": floor,
                         "slope_floor": slope_floor, "config_hash": cfg.hash})
    write_csv(cfg, MDRW_COLUMNS, rows)
    if cfg.get("figure"):
        from . import plotting
        plotting.curves(cfg.get("figure"), series, title="M-DRW escape probability",
                        xlabel="depth N", ylabel="P(embedded walk reaches depth N)",
                        hline=verdict_args(cfg)["floor"])
    return EXIT_OK


def cmd_percolate(cfg):
    depths = depths_for(cfg)
    tree = build_tree(cfg, depths[-1])
    grid = psi_grid(cfg, allow_barrier=True)
    seed = cfg.seed
    runs = cfg.int("perc.runs")
    k_env = cfg.int("trials.env")
    law = HeavyTailLaw(cfg.float("walk.m"), cfg.float("walk.p1"))
    b = cfg.float("tree.b") if cfg.get("tree.kind") == "sphere" else None

    def point(kind, param, psi):
        if kind == "BARRIER":
            return lambda: barrier_survival_curve(tree, law, param, depths, k_env, seed, b=b)
        return lambda: survival_curve(tree, psi, depths, runs, seed)

    curves = run_grid([point(kind, d, psi) for kind, _, d, _, psi in grid])
    rows, series = [], {}
    for (kind, label, d, n0, _), curve in zip(grid, curves):
        series[label if kind != "BARRIER" else f"{label};eps={fmt(d)}"] = (
            [e.depth for e in curve], [e.survival for e in curve],
            [e.ci_lo for e in curve], [e.ci_hi for e in curve])
        for e in curve:
            rows.append({"psi_kind": kind, "param": label, "delta_or_eps": d, "n0": n0,
                         "depth": e.depth, "K": e.runs, "survival": e.survival,
                         "ci_lo": e.ci_lo, "ci_hi": e.ci_hi, "seed": seed,
                         "config_hash": cfg.hash})
    write_csv(cfg, PERC_COLUMNS, rows)
    if cfg.get("figure"):
        from . import plotting
        plotting.curves(cfg.get("figure"), series, title="Percolation survival",
                        xlabel="depth N", ylabel="P(cluster reaches depth N)")
    return EXIT_OK


def cmd_flows(cfg):
    depths = depths_for(cfg)
    tree = build_tree(cfg, depths[-1])
    grid = psi_grid(cfg)
    gammas = sorted(cfg.floats("flows.gamma"))
    c_q = cfg.float("flows.c_q")
    seed = cfg.seed

    def point(psi):
        def run():
            out = []
            for n in depths:
                bounds = survival_bounds(tree, psi, n, c_q)
                for g in gammas:
                    try:
                        flow = build_unit_flow(tree, psi, g, n)
                        energy, path_sum = flow.energy, flow.path_sum_bound
                    except ZeroFlow:
                        energy, path_sum = math.inf, math.nan
                    out.append((g, n, bounds, energy, path_sum))
            return out
        return run

    results = run_grid([point(psi) for *_, psi in grid])
    rows, series = [], {}
    for (kind, label, _, _, _), res in zip(grid, results):
        for g, n, bounds, energy, path_sum in res:
            rows.append({"psi_kind": kind, "param": label, "gamma": g, "depth": n,
                         "c_eff": bounds.c_eff, "energy": energy, "path_sum_bound": path_sum,
                         "lower": bounds.lower, "upper": bounds.upper, "seed": seed,
                         "config_hash": cfg.hash})
            if not bounds.ordered:
                note(f"{label} depth {n}: {bounds.diagnostic}")
        per_depth = {n: bounds for _, n, bounds, _, _ in res}
        xs = sorted(per_depth)
        lo = [per_depth[n].lower for n in xs]
        hi = [per_depth[n].upper for n in xs]
        series[label] = (xs, lo, lo, hi)
    rows.sort(key=lambda r: (r["psi_kind"], r["param"], r["gamma"], r["depth"]))
    write_csv(cfg, FLOW_COLUMNS, rows)
    if cfg.get("figure"):
        from . import plotting
        plotting.curves(cfg.get("figure"), series, title="Survival bounds (lower to upper)",
                        xlabel="depth N", ylabel="survival probability bound")
    return EXIT_OK


def cmd_verify(cfg):
    results = list(checks.battery(cfg.int("verify.trials"), cfg.seed))
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if cfg.get("output"):
        rows = [{"check": r.name, "statistic": float(r.statistic),
                 "threshold": float(r.threshold), "status": "PASS" if r.passed else "FAIL",
                 "seed": cfg.seed, "config_hash": cfg.hash} for r in results]
        write_csv(cfg, VERIFY_COLUMNS, rows)
    return EXIT_CHECK if failed else EXIT_OK


COMMANDS = {
    "tree-info": (cmd_tree_info, "level sizes and growth estimates of a tree"),
    "phase-rwrc": (cmd_phase_rwrc, "escape sweep of the random walk in random conductances"),
    "phase-mdrw": (cmd_phase_mdrw, "escape sweep of the digging random walk"),
    "percolate": (cmd_percolate, "survival sweep of percolation clusters"),
    "flows": (cmd_flows, "adapted-network flows and survival bounds"),
    "verify": (cmd_verify, "run the statistical self-check battery"),
}


def make_parser():
    parser = _Parser(prog="arborwalk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="flat 'key = value' config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
        p.add_argument("-o", "--output", help="output path ('-' for stdout)")
        p.add_argument("--figure", help="also render a PNG figure to this path")
    return parser


def main(argv=None):
    try:
        args = make_parser().parse_args(argv)
        text = None
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed = {args.seed}")
        if args.output:
            overrides.append(f"output = {args.output}")
        if args.figure:
            overrides.append(f"figure = {args.figure}")
        cfg = ExperimentConfig.build(args.command, text, overrides, args.config or "<config>")
        return COMMANDS[args.command][0](cfg)
    except UsageError as exc:
        note(f"arborwalk: error: {exc}")
        return EXIT_USAGE
    except (BudgetExceeded, TreeBudgetError) as exc:
        note(f"arborwalk: budget exceeded: {exc}")
        return EXIT_BUDGET
    except (ConfigError, ArborwalkError, ValueError, OSError) as exc:
        note(f"arborwalk: error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

import csv
import io

import pytest

from arborwalk import checks, cli


def run(capsys, *args):
    code = cli.main(list(args))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


SMALL_RWRC = ["--seed", "5", "--set", "sweep.depths=5,10,20", "--set", "tree.depth=20",
              "--set", "trials.env=10", "--set", "trials.per_env=50"]


def test_usage_errors_exit_1(capsys):
    assert cli.main(["tree-info"]) == cli.EXIT_USAGE
    assert cli.main(["nope"]) == cli.EXIT_USAGE
    assert cli.main(["phase-rwrc", "--seed", "1", "--set", "tree.kind=blob"]) == cli.EXIT_USAGE
    assert cli.main(["percolate", "--seed", "1", "--set", "perc.psi=weird"]) == cli.EXIT_USAGE
    assert cli.main(["tree-info", "--config", "/nonexistent/cfg"]) == cli.EXIT_USAGE


def test_budget_exit_3(capsys):
    assert cli.main(["phase-mdrw", "--seed", "1", "--set", "tree.kind=regular",
                     "--set", "tree.d=3"]) == cli.EXIT_BUDGET
    assert cli.main(["phase-rwrc", "--seed", "1", "--set", "walk.method=walk",
                     "--set", "walk.budget=5", "--set", "sweep.depths=8",
                     "--set", "trials.env=2", "--set", "trials.per_env=5"]) == cli.EXIT_BUDGET


def test_tree_info_reports(capsys):
    code, out, _ = run(capsys, "tree-info", "--seed", "1")
    assert code == 0
    assert "br_r: [" in out and "config_hash:" in out and "level sizes: 1 1 4 9" in out
    brr = out.split("br_r: [")[1].split("]")[0].split(",")
    lo, hi = float(brr[0]), float(brr[1])
    assert lo <= 2.3 and hi >= 1.7
    code, out, _ = run(capsys, "tree-info", "--seed", "1", "--set", "tree.kind=regular",
                       "--set", "tree.d=2", "--set", "tree.depth=6")
    assert "br_r: DIVERGENT" in out and "spherically symmetric: yes" in out
    code, out, _ = run(capsys, "tree-info", "--seed", "1", "--set", "tree.kind=path")
    assert float(out.split("br_r: [")[1].split(",")[0]) < 0.2


def test_tree_info_from_file(tmp_path, capsys):
    f = tmp_path / "t.txt"
    f.write_text("root r\na r\nb r\nc a\n")
    code, out, _ = run(capsys, "tree-info", "--seed", "1", "--set", "tree.kind=file",
                       "--set", f"tree.file={f}", "--set", "tree.depth=5")
    assert code == 0 and "vertices: 4" in out and "spherically symmetric: no" in out
    assert "br_r: n/a" in out


def test_phase_rwrc_csv(capsys):
    code, out, err = run(capsys, "phase-rwrc", *SMALL_RWRC)
    assert code == 0 and "escape floor 0.02" in err
    table = rows(out)
    assert list(table[0])[:11] == ["tree_kind", "b_or_d", "depth", "m", "p1", "K_env", "K_tr",
                                   "estimate", "ci_lo", "ci_hi", "seed"]
    assert len(table) == 9 and len({r["config_hash"] for r in table}) == 1
    keys = [(float(r["m"]), int(r["depth"])) for r in table]
    assert keys == sorted(keys)
    assert {r["verdict"] for r in table} <= {cli.TRANSIENT, cli.RECURRENT, cli.UNDECIDED}
    for m in {r["m"] for r in table}:
        est = [float(r["estimate"]) for r in table if r["m"] == m]
        assert est == sorted(est, reverse=True)


def test_thin_tree_recurrent_for_all_m(capsys):
    code, out, _ = run(capsys, "phase-rwrc", "--seed", "1", "--set", "tree.b=0.5",
                       "--set", "sweep.depths=100,200,400")
    assert code == 0
    assert {r["verdict"] for r in rows(out)} == {cli.RECURRENT}


def test_phase_mdrw_sphere_cookie_sweep(capsys):
    code, out, _ = run(capsys, "phase-mdrw", "--seed", "0", "--set", "tree.b=3")
    deepest = {r["M"]: r["verdict"] for r in rows(out) if r["depth"] == "100"}
    assert deepest == {"1": cli.TRANSIENT, "2": cli.UNDECIDED, "4": cli.RECURRENT}


def test_phase_mdrw_binary_bias(capsys):
    code, out, _ = run(capsys, "phase-mdrw", "--seed", "1", "--set", "tree.kind=regular",
                       "--set", "tree.d=2", "--set", "sweep.M=0", "--set", "sweep.lambda=1.5,2.5",
                       "--set", "sweep.depths=16,18,20")
    verdicts = {r["lambda"]: r["verdict"] for r in rows(out)}
    assert verdicts == {"1.5": cli.TRANSIENT, "2.5": cli.RECURRENT}


def test_phase_mdrw_subunit_bias_with_low_floor(capsys):
    code, out, _ = run(capsys, "phase-mdrw", "--seed", "1", "--set", "sweep.M=0,1,2,3,4,5",
                       "--set", "sweep.lambda=0.8", "--set", "verdict.escape_floor=0.0005",
                       "--set", "trials.count=40000", "--set", "sweep.depths=25,50,100")
    assert {r["verdict"] for r in rows(out)} == {cli.TRANSIENT}
    assert {r["escape_floor"] for r in rows(out)} == {"0.0005"}


def test_reproducible_across_runs_and_threads(tmp_path, monkeypatch, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    monkeypatch.setenv("ARBORWALK_THREADS", "1")
    assert cli.main(["phase-rwrc", *SMALL_RWRC, "-o", str(a)]) == 0
    monkeypatch.setenv("ARBORWALK_THREADS", "4")
    assert cli.main(["phase-rwrc", *SMALL_RWRC, "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_bad_thread_count(monkeypatch, capsys):
    monkeypatch.setenv("ARBORWALK_THREADS", "zero")
    assert cli.main(["phase-rwrc", *SMALL_RWRC]) == cli.EXIT_USAGE


def test_config_file_and_figure(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 2\nperc.psi = constant\nperc.c = 0.6,0.9\ntree.kind = regular\n"
                   "tree.d = 2\nsweep.depths = 4,8\nperc.runs = 2000\n")
    png = tmp_path / "fig.png"
    out = tmp_path / "out.csv"
    assert cli.main(["percolate", "--config", str(cfg), "-o", str(out),
                     "--figure", str(png)]) == 0
    assert png.read_bytes()[:4] == b"\x89PNG"
    table = rows(out.read_text())
    assert [r["param"] for r in table] == ["c=0.6", "c=0.6", "c=0.9", "c=0.9"]


def test_flows_csv(capsys):
    code, out, _ = run(capsys, "flows", "--seed", "1", "--set", "sweep.depths=10,20",
                       "--set", "perc.delta=0.5")
    table = rows(out)
    assert code == 0 and len(table) == 4
    for r in table:
        assert 0 <= float(r["lower"]) <= float(r["upper"]) <= 1
        assert float(r["energy"]) > 0


def test_barrier_percolation_csv(capsys):
    code, out, _ = run(capsys, "percolate", "--seed", "1", "--set", "perc.psi=barrier",
                       "--set", "walk.m=2", "--set", "trials.env=20", "--set", "sweep.depths=10")
    assert code == 0 and rows(out)[0]["psi_kind"] == "BARRIER"
    assert cli.main(["percolate", "--seed", "1", "--set", "perc.psi=barrier",
                     "--set", "perc.eps=0.9"]) == cli.EXIT_USAGE


def test_verify_passes(tmp_path, capsys):
    out = tmp_path / "v.csv"
    code, text, _ = run(capsys, "verify", "--seed", "0", "-o", str(out))
    assert code == cli.EXIT_OK and "FAIL" not in text
    assert all(r["status"] == "PASS" for r in rows(out.read_text()))


def test_verify_failure_exit_2(monkeypatch, capsys):
    def failing(trials, seed):
        yield checks.CheckResult("always_fails", 1.0, 0.0, False, "forced")
    monkeypatch.setattr(checks, "battery", failing)
    code, text, _ = run(capsys, "verify", "--seed", "0")
    assert code == cli.EXIT_CHECK and "FAIL always_fails" in text


@pytest.mark.parametrize("est,lo,want", [
    ([0.5, 0.5, 0.5], 0.45, cli.TRANSIENT),
    ([0.1, 0.01, 0.001], 0.0, cli.RECURRENT),
    ([0.0, 0.0, 0.0], 0.0, cli.RECURRENT),
    ([0.3, 0.2, 0.1], 0.05, cli.UNDECIDED),
    ([0.01, 0.015, 0.019], 0.0, cli.UNDECIDED),
])
def test_verdict_rules(est, lo, want):
    assert cli.verdict([25, 50, 100], est, lo) == want


def test_no_transient_verdict_when_disallowed():
    assert cli.verdict([25, 50, 100], [0.5] * 3, 0.45, allow_transient=False) == cli.UNDECIDED

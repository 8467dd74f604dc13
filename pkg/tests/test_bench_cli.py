import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from rpmsolve import bench
from rpmsolve.cli import main, parse_system_token, UsageError
from rpmsolve.mtx import write_matrix_market
from rpmsolve.system import rng_from_seed


def small_systems(count=2, size=12):
    return bench.default_systems(size=size, count=count, cond_range=(10.0, 100.0), seed=1)


def test_labels_and_filenames():
    assert bench.strategy_label("countsketch:10") == "CountSketch"
    assert bench.strategy_label("skm:3") == "SKM"
    assert bench.csv_filename("Synthetic", "gaussian") == "Synthetic_Gaussian_10x-Improve-Time.csv"


def test_default_system_names_and_conditioning():
    systems = bench.default_systems(size=10, count=3, cond_range=(1e2, 1e4))
    assert [name for name, _ in systems] == ["svd10_cond1e02", "svd10_cond1e03", "svd10_cond1e04"]
    assert np.isclose(np.linalg.cond(systems[2][1].A), 1e4, rtol=1e-6)


def test_format_value():
    assert bench.format_value(bench.SENTINEL) == "1.0e99"
    assert bench.format_value(1234.0) == "1.23e+03"


def test_config_validation():
    with pytest.raises(ValueError):
        bench.BenchConfig(systems=[])
    with pytest.raises(ValueError):
        bench.BenchConfig(systems=small_systems(), improvement_factor=1.5)
    with pytest.raises(ValueError):
        bench.BenchConfig(systems=small_systems(), metric="flops")
    with pytest.raises(ValueError):
        bench.BenchConfig(systems=small_systems(), repetitions=0)


def test_grid_is_deterministic_and_ordered():
    cfg = bench.BenchConfig(systems=small_systems(), strategies=["gaussian", "cyclic"])
    g1, g2 = bench.run_grid(cfg), bench.run_grid(cfg)
    assert list(g1) == ["gaussian", "cyclic"]
    for tok in g1:
        assert [r.values for r in g1[tok]] == [r.values for r in g2[tok]]
        for row in g1[tok]:
            assert set(row.values) == set(bench.CSV_COLUMNS)
            assert row.values["Comp"] <= 12


def test_grid_timeouts_use_sentinel():
    cfg = bench.BenchConfig(systems=small_systems(1), strategies=["uniform"], max_iterations=2,
                            improvement_factor=1e-6)
    row = bench.run_grid(cfg)["uniform"][0]
    assert row.values["Base"] == bench.SENTINEL and row.timed_out["Base"]


def test_grid_skips_unreadable_systems(tmp_path):
    bad = tmp_path / "bad.mtx"
    bad.write_text("not a matrix\n")
    warnings = []
    cfg = bench.BenchConfig(systems=[("bad", str(bad))] + small_systems(1))
    rows = bench.run_grid(cfg, warn=warnings.append)["countsketch:10"]
    assert len(rows) == 1 and "bad" in warnings[0]


def test_median_over_repetitions():
    cfg = bench.BenchConfig(systems=small_systems(1), strategies=["uniform"], repetitions=3)
    assert bench.run_grid(cfg)["uniform"][0].values["Base"] < bench.SENTINEL


def test_emit_csv(tmp_path):
    rows = [bench.BenchRow("m1", {"Base": 10.0, "PartFive": 5.0, "PartTen": 4.0,
                                  "Comp": bench.SENTINEL})]
    path = tmp_path / "out.csv"
    bench.emit_csv(rows, path)
    assert list(csv.reader(open(path))) == [
        ["Matrix", "Base", "PartFive", "PartTen", "Comp"],
        ["m1", "1.00e+01", "5.00e+00", "4.00e+00", "1.0e99"]]


@pytest.mark.parametrize("token, shape", [("identity:4", (4, 4)), ("gaussian:5x3", (5, 3)),
                                          ("svd:6:1e2", (6, 6)), ("banded:8:2", (8, 8))])
def test_system_tokens(token, shape):
    A, _ = parse_system_token(token, 0)
    assert A.shape == shape


@pytest.mark.parametrize("token", ["identity:x", "blob:3", "banded:4:9"])
def test_bad_system_tokens(token):
    with pytest.raises(UsageError):
        parse_system_token(token, 0)


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_cli_solve(capsys):
    code, out = run_cli(capsys, "solve", "--system", "gaussian:20x8", "--method", "complete",
                        "--strategy", "gaussian")
    data = json.loads(out.out)
    assert code == 0 and data["final_relative_residual"] <= 1e-8
    assert data["method"] == "complete" and not data["timed_out"]


def test_cli_solve_partial_and_budget(capsys):
    code, out = run_cli(capsys, "solve", "--system", "svd:30:1e6", "--method", "partial",
                        "--m", "3", "--max-iters", "5")
    data = json.loads(out.out)
    assert code == 0 and data["method"] == "partial(3)" and data["timed_out"]


def test_cli_distributed(capsys, tmp_path):
    ledger = tmp_path / "ledger.csv"
    code, out = run_cli(capsys, "solve", "--system", "banded:20:2", "--distributed", "--nodes", "5",
                        "--m", "2", "--strategy", "uniform", "--max-iters", "50",
                        "--out", str(ledger))
    data = json.loads(out.out)
    assert code == 0 and data["communicated_values"] > 0
    assert ledger.exists()


def test_cli_diag_identity(capsys):
    code, out = run_cli(capsys, "diag")
    data = json.loads(out.out)
    assert code == 0 and data["taus"] == [2, 5, 8] and data["gammas"] == [0.0, 0.0, 0.0]


def test_cli_gen_and_mtx_solve(capsys, tmp_path):
    path = tmp_path / "a.mtx"
    code, out = run_cli(capsys, "gen", "--system", "banded:10:1", "--out", str(path))
    assert code == 0 and json.loads(out.out)["nonzeros"] == 28
    code, out = run_cli(capsys, "solve", "--mtx", str(path), "--method", "complete")
    assert code == 0 and not json.loads(out.out)["timed_out"]


def test_cli_bench(capsys, tmp_path):
    code, out = run_cli(capsys, "bench", "--size", "12", "--count", "2", "--strategy", "gaussian",
                        "--strategy", "cyclic", "--out", str(tmp_path))
    files = json.loads(out.out)["files"]
    assert code == 0 and len(files) == 2
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "Synthetic_Cyclic_10x-Improve-Time.csv", "Synthetic_Gaussian_10x-Improve-Time.csv"]


def test_cli_bench_mtx(capsys, tmp_path):
    path = tmp_path / "m.mtx"
    write_matrix_market(path, rng_from_seed(0).standard_normal((10, 10)))
    code, out = run_cli(capsys, "bench", "--mtx", str(path), "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "MatrixMarket_CountSketch_10x-Improve-Time.csv").exists()


def test_cli_bench_all_skipped(capsys, tmp_path):
    bad = tmp_path / "bad.mtx"
    bad.write_text("junk\n")
    code, out = run_cli(capsys, "bench", "--mtx", str(bad), "--out", str(tmp_path))
    assert code == 2 and json.loads(out.out)["error"] == "NoSystems"


def test_cli_errors(capsys, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["solve", "--method", "newton"])
    assert info.value.code == 64
    code, _ = run_cli(capsys, "solve", "--system", "blob:3")
    assert code == 64
    code, out = run_cli(capsys, "solve", "--mtx", str(tmp_path / "missing.mtx"))
    assert code == 1 and json.loads(out.out)["error"] == "FileNotFoundError"
    code, out = run_cli(capsys, "solve", "--strategy", "skm:0")
    assert code == 1 and json.loads(out.out)["error"] == "ValueError"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rpmsolve", "diag", "--system", "identity:2"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["taus"] == [1, 3, 5]

import importlib.util
from pathlib import Path

import pytest

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def load(name):
    spec = importlib.util.spec_from_file_location(name, SCRIPTS / f"{name}.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_desk_benchmark_small(tmp_path):
    mod = load("desk_benchmark")
    rows = mod.run(mod.BenchConfig(N=150, D=20, ranks=[2, 20]))
    assert [r["method"] for r in rows] == ["lr_laplace_M2", "lr_laplace_M20",
                                           "diagonal_laplace", "exact_laplace"]
    assert rows[1]["mean_err"] < 1e-6
    # LR-Laplace is conservative; the diagonal shortcut is not
    assert rows[0]["var_ratio_min"] >= 1 - 1e-8
    assert rows[2]["var_ratio_min"] <= 1 + 1e-10
    mod.main(["--n", "100", "--d", "10", "--ranks", "3,10", "--out", str(tmp_path / "b.csv")])
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 5


def test_consistency_sweep_shrinks():
    mod = load("consistency_sweep")
    out = mod.sweep(mod.SweepConfig(Ns=[100, 10_000], seeds=1))
    assert out[1][2] < out[0][2]


def test_bound_sweep_runs(capsys):
    load("bound_sweep").main(["--n", "80", "--d", "8"])
    lines = capsys.readouterr().out.strip().splitlines()
    for line in lines[1:]:
        M, lb, err, b, bt, w2, w2b = map(float, line.split(","))
        # w2 carries sqrt(rounding) ~ 1e-8 at full rank
        assert b >= err - 1e-8 and bt <= b + 1e-12 and w2b >= w2 - 1e-6

import csv
import json

import jsonschema
import numpy as np
import pytest
from scipy.special import expit

from lrglm import cli
from lrglm.conjugate import exact_posterior_dense
from lrglm.data import Dataset, load_csv, save_csv, simulate
from lrglm.models import GaussianPrior


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def strip_timings(text):
    d = json.loads(text)
    d.pop("timings", None)
    return d


@pytest.fixture
def logistic_csv(tmp_path):
    path = tmp_path / "logit.csv"
    save_csv(simulate(120, 15, "logistic", seed=4), path)
    return path


@pytest.fixture
def rank3_csv(tmp_path):
    r = np.random.default_rng(0)
    X = r.standard_normal((40, 3)) @ r.standard_normal((3, 12))
    Y = r.standard_normal(40)
    path = tmp_path / "rank3.csv"
    save_csv(Dataset(X, Y), path)
    return path, X, Y


def test_fit_matches_dense_oracle_at_true_rank(capsys, rank3_csv):
    path, X, Y = rank3_csv
    code, out, _ = run(capsys, "fit", "--input", path, "--family", "gaussian", "--rank", 3,
                       "--prior-var", 2.0, "--tau", 0.5, "--all-variances", "--cov-pairs", "0:5,3:3")
    assert code == 0
    d = json.loads(out)
    jsonschema.validate(d, cli.load_schema("fit"))
    ex = exact_posterior_dense(X, Y, GaussianPrior.isotropic(2.0, 12), 0.5)
    np.testing.assert_allclose(d["mean"], ex.mean, atol=1e-8)
    np.testing.assert_allclose([v["value"] for v in d["variances"]], np.diag(ex.cov), atol=1e-8)
    assert d["covariances"][0]["value"] == pytest.approx(ex.cov[0, 5], abs=1e-8)
    assert d["lambda_bar1"] < 1e-8


def test_fit_rank_too_large(capsys, logistic_csv):
    code, _, err = run(capsys, "fit", "--input", logistic_csv, "--family", "logistic", "--rank", 999)
    assert code == 2 and "rank" in err


def test_fit_deterministic_output(capsys, logistic_csv, tmp_path):
    args = ["fit", "--input", logistic_csv, "--family", "logistic", "--rank", 5, "--seed", 3,
            "--var-idx", "0,1"]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert strip_timings(a) == strip_timings(b)
    da, db = json.loads(a), json.loads(b)
    da.pop("timings")
    db.pop("timings")
    assert cli.dumps(da) == cli.dumps(db)


def test_seventeen_digit_floats():
    assert cli.dumps({"x": 0.1}) == '{"x": 0.10000000000000001}\n'
    assert float(json.loads(cli.dumps([1 / 3]))[0]) == 1 / 3
    assert cli.dumps([float("nan"), True, None]) == "[null, true, null]\n"


def test_missing_input(capsys, tmp_path):
    code, _, err = run(capsys, "fit", "--input", tmp_path / "nope.csv")
    assert code == 2 and "not found" in err


def test_bad_flag_values(capsys, logistic_csv):
    assert run(capsys, "fit", "--input", logistic_csv, "--tau", -1)[0] == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit", "--family", "probit"])
    assert exc.value.code == 2


def test_numerical_failure_exit_code(capsys, logistic_csv):
    code, _, err = run(capsys, "fit", "--input", logistic_csv, "--family", "logistic",
                       "--rank", 5, "--tol", 1e-300)
    assert code == 3 and "numerical" in err


def test_simulate_round_trip(capsys, tmp_path):
    out = tmp_path / "sim.csv"
    code, text, _ = run(capsys, "simulate", "--n", 30, "--d", 4, "--family", "poisson",
                        "--seed", 9, "--out", out, "--binary-out", tmp_path / "x.bin")
    assert code == 0
    meta = json.loads(text)
    jsonschema.validate(meta, cli.load_schema("simulate"))
    ds = load_csv(out, "y", "poisson")
    ref = simulate(30, 4, "poisson", seed=9)
    np.testing.assert_array_equal(ds.X, ref.X)
    np.testing.assert_array_equal(ds.Y, ref.Y)
    np.testing.assert_array_equal(meta["true_beta"], ref.true_beta)
    from lrglm.data import read_matrix
    np.testing.assert_array_equal(read_matrix(tmp_path / "x.bin"), ref.X)


def test_bounds_command(capsys, logistic_csv):
    code, out, _ = run(capsys, "bounds", "--input", logistic_csv, "--family", "logistic",
                       "--rank", 4, "--svd", "exact")
    assert code == 0
    d = json.loads(out)
    jsonschema.validate(d, cli.load_schema("bounds"))
    assert d["w2_bound"] >= d["w2_actual"]
    code, out, _ = run(capsys, "bounds", "--input", logistic_csv, "--family", "logistic",
                       "--rank", 4, "--dense", "no")
    assert json.loads(out)["prior_relaxed"] is True


def test_sample_command(capsys, logistic_csv, tmp_path):
    chain = tmp_path / "chain.csv"
    code, out, _ = run(capsys, "sample", "--input", logistic_csv, "--family", "logistic",
                       "--rank", 4, "--mcmc-iters", 1500, "--burn-in", 300,
                       "--chain-out", chain, "--proposal", "pcn")
    assert code == 0
    d = json.loads(out)
    jsonschema.validate(d, cli.load_schema("sample"))
    with open(chain) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 1200 and len(rows[0]) == 16


def test_sample_bad_burn_in(capsys, logistic_csv):
    code, _, _ = run(capsys, "sample", "--input", logistic_csv, "--mcmc-iters", 10, "--burn-in", 10)
    assert code == 2


def test_benchmark(capsys, tmp_path):
    out = tmp_path / "bench.csv"
    code, _, _ = run(capsys, "benchmark", "--n", 300, "--d", 40, "--family", "logistic",
                     "--ranks", "2,10,40", "--out", out)
    assert code == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["M"]) for r in rows] == [2, 10, 40]
    errs = [float(r["mean_err"]) for r in rows]
    assert errs[-1] < 1e-5 and errs[-1] <= min(errs)
    assert float(rows[-1]["lambda_bar1"]) < 1e-8


def test_predict(capsys, logistic_csv, tmp_path):
    rows = tmp_path / "new.csv"
    ds = load_csv(logistic_csv, "y", "logistic")
    X = np.vstack([np.zeros(15), ds.X[:3]])
    with open(rows, "w") as fh:
        fh.write(",".join(f"x{i}" for i in range(15)) + "\n")
        for x in X:
            fh.write(",".join(repr(float(v)) for v in x) + "\n")
    base = ["predict", "--input", logistic_csv, "--family", "logistic", "--rank", 5,
            "--predict-input", rows]
    code, out, _ = run(capsys, *base)
    assert code == 0
    probs = [float(line.split(",")[1]) for line in out.strip().splitlines()[1:]]
    assert probs[0] == 0.5
    _, out_pt, _ = run(capsys, *base, "--point")
    _, fit_out, _ = run(capsys, "fit", "--input", logistic_csv, "--family", "logistic", "--rank", 5)
    mean = np.array(json.loads(fit_out)["mean"])
    pt = [float(line.split(",")[1]) for line in out_pt.strip().splitlines()[1:]]
    np.testing.assert_allclose(pt, expit(X @ mean), atol=1e-12)
    # uncertainty shrinks probabilities toward 1/2
    assert all(abs(p - 0.5) <= abs(q - 0.5) + 1e-15 for p, q in zip(probs, pt))


def test_predict_requires_logistic(capsys, logistic_csv):
    assert run(capsys, "predict", "--input", logistic_csv, "--family", "gaussian")[0] == 2

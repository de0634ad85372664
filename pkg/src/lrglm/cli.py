"""Command-line interface: simulate, fit, sample, bounds, benchmark, predict.

Exit status is 2 for configuration/input errors and 3 for numerical failures.
Floats in JSON output carry 17 significant digits; wall-clock timings live
under a ``"timings"`` key so the rest of the output is reproducible.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data
from .bounds import w2_bound
from .conjugate import lr_posterior
from .errors import ORACLE_LIMIT, ConvergenceError, OracleLimitError
from .linalg import SVDConfig, truncated_svd
from .lr_laplace import exact_laplace_dense, lr_laplace_fit, predict_proba
from .lr_mcmc import ProposalConfig, chain_summary, run_mh, write_chain_csv
from .models import GaussianPrior, get_family

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    response_col: str = "y"
    family: str = "gaussian"
    rank: int | None = None
    prior_var: float = 1.0
    prior_diag: str | None = None
    tau: float = 1.0
    svd: str = "randomized"
    oversample: int = 10
    power_iters: int = 2
    tol: float = 1e-8
    mcmc_iters: int = 10000
    burn_in: int = 1000
    step_scale: float = 0.1
    proposal: str = "random_walk"
    seed: int = 0
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.family not in ("gaussian", "logistic", "poisson"):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.rank is not None and self.rank < 1:
            raise ConfigError("--rank must be >= 1")
        for name in ("prior_var", "tau", "step_scale", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"--{name.replace('_', '-')} must be positive")
        if self.oversample < 0 or self.power_iters < 0:
            raise ConfigError("--oversample and --power-iters must be >= 0")
        if not self.mcmc_iters > self.burn_in >= 0:
            raise ConfigError("need --mcmc-iters > --burn-in >= 0")

    def svd_config(self):
        method = "deterministic" if self.svd == "exact" else "randomized"
        return SVDConfig(method, self.oversample, self.power_iters, self.seed)


# --------------------------------------------------------------------------
# JSON with 17 significant digits


def _fmt(x):
    if isinstance(x, bool) or x is None:
        return {True: "true", False: "false", None: "null"}[x]
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "%.17g" % x if math.isfinite(x) else "null"
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, dict):
        return "{" + ", ".join(f"{_fmt(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(obj) -> str:
    return _fmt(obj) + "\n"


def load_schema(name: str) -> dict:
    """JSON schema shipped for a command's output (fit, bounds, sample, simulate)."""
    from importlib.resources import files
    return json.loads(files("lrglm").joinpath("schemas", f"{name}.json").read_text())


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# shared plumbing


def _load(cfg: RunConfig, path=None):
    path = path or cfg.input
    if not path:
        raise ConfigError("--input is required")
    try:
        return data.load_csv(path, cfg.response_col, cfg.family)
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {path}") from None


def _prior(cfg: RunConfig, D: int):
    if cfg.prior_diag:
        try:
            d = np.loadtxt(cfg.prior_diag, dtype=float, ndmin=1)
        except OSError:
            raise ConfigError(f"prior diagonal file not found: {cfg.prior_diag}") from None
        if d.size != D:
            raise ConfigError(f"prior diagonal has {d.size} entries, expected {D}")
        return GaussianPrior.diagonal(d)
    return GaussianPrior.isotropic(cfg.prior_var, D)


def _rank(cfg, X):
    M = cfg.rank if cfg.rank is not None else min(X.shape)
    if not 1 <= M <= min(X.shape):
        raise ConfigError(f"--rank {M} must lie in [1, min(N, D) = {min(X.shape)}]")
    return M


def _fit(cfg: RunConfig, ds):
    """Returns (posterior, svd, timings)."""
    X, Y = ds.X, ds.Y
    M = _rank(cfg, X)
    prior = _prior(cfg, X.shape[1])
    t0 = time.perf_counter()
    svd = truncated_svd(X, M, cfg.svd_config())
    t1 = time.perf_counter()
    if cfg.family == "gaussian":
        post = lr_posterior(svd, Y, prior, cfg.tau)
        t2 = t3 = time.perf_counter()
    else:
        post = lr_laplace_fit(X, Y, get_family(cfg.family, cfg.tau), prior, svd=svd, tol=cfg.tol)
        t2 = time.perf_counter()
        post.variances()
        t3 = time.perf_counter()
    return post, svd, {"svd": t1 - t0, "map": t2 - t1, "cov": t3 - t2}


def _parse_pairs(spec):
    pairs = []
    for item in filter(None, (spec or "").split(",")):
        try:
            i, j = item.split(":")
            pairs.append((int(i), int(j)))
        except ValueError:
            raise ConfigError(f"bad covariance pair {item!r}; use i:j") from None
    return pairs


def _parse_ints(spec):
    try:
        return [int(v) for v in filter(None, (spec or "").split(","))]
    except ValueError:
        raise ConfigError(f"bad integer list {spec!r}") from None


def _config_echo(cfg):
    d = asdict(cfg)
    d.pop("extra")
    d.update(cfg.extra)
    return d


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig):
    e = cfg.extra
    if not cfg.out:
        raise ConfigError("simulate needs --out")
    ds = data.simulate(e["n"], e["d"], cfg.family, cfg.tau, cfg.seed,
                       rotate=not e["no_rotate"], beta_scale=e["beta_scale"])
    data.save_csv(ds, cfg.out, cfg.response_col)
    if e.get("beta_out"):
        np.savetxt(e["beta_out"], ds.true_beta, fmt="%.17g")
    if e.get("binary_out"):
        data.write_matrix(e["binary_out"], ds.X)
    meta = {"command": "simulate", "n": e["n"], "d": e["d"], "family": cfg.family,
            "tau": cfg.tau, "seed": cfg.seed, "rotate": not e["no_rotate"],
            "output": cfg.out, "true_beta": ds.true_beta}
    sys.stdout.write(dumps(meta))
    return 0


def cmd_fit(cfg: RunConfig):
    ds = _load(cfg)
    post, svd, timings = _fit(cfg, ds)
    D = ds.X.shape[1]
    var_idx = _parse_ints(cfg.extra.get("var_idx"))
    pairs = _parse_pairs(cfg.extra.get("cov_pairs"))
    for i in var_idx + [k for p in pairs for k in p]:
        if not 0 <= i < D:
            raise ConfigError(f"index {i} out of range [0, {D})")
    if cfg.extra.get("all_variances"):
        var_idx = list(range(D))
    gamma = getattr(post, "gamma_star", None)
    out = {
        "command": "fit",
        "family": cfg.family,
        "n": ds.X.shape[0],
        "d": D,
        "rank": svd.rank,
        "mean": post.mean,
        "gamma_star": gamma if gamma is not None else svd.U.T @ post.mean,
        "lambda": svd.lam,
        "lambda_bar1": svd.residual_spectral_norm,
        "variances": [{"i": i, "value": post.query_var(i)} for i in var_idx],
        "covariances": [{"i": i, "j": j, "value": post.query_cov(i, j)} for i, j in pairs],
        "config": _config_echo(cfg),
        "timings": timings,
    }
    _emit(dumps(out), cfg.out)
    return 0


def cmd_sample(cfg: RunConfig):
    ds = _load(cfg)
    M = _rank(cfg, ds.X)
    prior = _prior(cfg, ds.X.shape[1])
    kind = "pcn" if cfg.proposal == "pcn" else "random_walk"
    prop = ProposalConfig(kind=kind, step_scale=cfg.step_scale,
                          adapt=not cfg.extra.get("no_adapt", False))
    t0 = time.perf_counter()
    svd = truncated_svd(ds.X, M, cfg.svd_config())
    t1 = time.perf_counter()
    chain = run_mh(None, ds.Y, get_family(cfg.family, cfg.tau), prior, svd=svd,
                   proposal=prop, T=cfg.mcmc_iters, burn_in=cfg.burn_in, seed=cfg.seed)
    t2 = time.perf_counter()
    if cfg.extra.get("chain_out"):
        write_chain_csv(chain, cfg.extra["chain_out"])
    s = chain_summary(chain)
    out = {"command": "sample", "family": cfg.family, "rank": M,
           "iterations": cfg.mcmc_iters, "burn_in": cfg.burn_in,
           "acceptance_rate": chain.acceptance_rate, "step": chain.step,
           "mean": s.mean, "var": s.var, "ess": s.ess, "mcse": s.mcse,
           "config": _config_echo(cfg), "timings": {"svd": t1 - t0, "mcmc": t2 - t1}}
    _emit(dumps(out), cfg.out)
    return 0


def cmd_bounds(cfg: RunConfig):
    ds = _load(cfg)
    if cfg.family == "poisson":
        raise ConfigError("bounds support the gaussian and logistic families")
    fam = get_family(cfg.family, cfg.tau)
    prior = _prior(cfg, ds.X.shape[1])
    M = _rank(cfg, ds.X)
    t0 = time.perf_counter()
    svd = truncated_svd(ds.X, M, cfg.svd_config())
    fit = lr_laplace_fit(ds.X, ds.Y, fam, prior, svd=svd, tol=cfg.tol)
    t1 = time.perf_counter()
    dense = None
    mode = cfg.extra.get("dense", "auto")
    D = ds.X.shape[1]
    if mode == "yes" or (mode == "auto" and D <= 200):
        dense = exact_laplace_dense(ds.X, ds.Y, fam, prior, tol=cfg.tol)
    t2 = time.perf_counter()
    rep = w2_bound(svd, ds.X, ds.Y, fam, prior, fit, dense)
    out = {"command": "bounds", "family": cfg.family, "rank": M}
    out.update(rep.to_dict())
    out["config"] = _config_echo(cfg)
    out["timings"] = {"fit": t1 - t0, "dense": t2 - t1, "bounds": time.perf_counter() - t2}
    _emit(dumps(out), cfg.out)
    return 0


def cmd_benchmark(cfg: RunConfig):
    e = cfg.extra
    if cfg.input:
        ds = _load(cfg)
    else:
        ds = data.simulate(e["n"], e["d"], cfg.family, cfg.tau, cfg.seed)
    ranks = _parse_ints(e.get("ranks")) or [5, 10, 20]
    for M in ranks:
        _rank(RunConfig("fit", rank=M), ds.X)
    prior = _prior(cfg, ds.X.shape[1])
    fam = get_family(cfg.family, cfg.tau)
    D = ds.X.shape[1]
    oracle = None
    if D <= min(ORACLE_LIMIT, e.get("oracle_max_d", 500)):
        oracle = exact_laplace_dense(ds.X, ds.Y, fam, prior, tol=cfg.tol)
        ovar = oracle.variances()
    rows = []
    for M in ranks:
        c = RunConfig(**{**asdict(cfg), "rank": M})
        post, svd, tm = _fit(c, ds)
        row = {"M": M, "t_svd": tm["svd"], "t_map": tm["map"], "t_cov": tm["cov"],
               "t_total": sum(tm.values()), "lambda_bar1": svd.residual_spectral_norm,
               "mean_err": float("nan"), "var_err": float("nan")}
        if oracle is not None:
            row["mean_err"] = float(np.linalg.norm(post.mean - oracle.mean))
            row["var_err"] = float(np.max(np.abs(post.variances() - ovar) / ovar))
        rows.append(row)
    fh = open(cfg.out, "w", newline="") if cfg.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        keys = list(rows[0])
        w.writerow(keys)
        for r in rows:
            w.writerow([r[k] if isinstance(r[k], int) else "%.17g" % r[k] for k in keys])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_predict(cfg: RunConfig):
    if cfg.family != "logistic":
        raise ConfigError("predict needs --family logistic")
    e = cfg.extra
    if not e.get("predict_input"):
        raise ConfigError("predict needs --predict-input")
    train = _load(cfg)
    post, _, _ = _fit(cfg, train)
    Xn = _load_features(e["predict_input"], cfg.response_col, train.X.shape[1])
    probs = np.atleast_1d(predict_proba(post, Xn, point=e.get("point", False)))
    fh = open(cfg.out, "w", newline="") if cfg.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "prob"])
        for i, p in enumerate(probs):
            w.writerow([i, "%.17g" % p])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def _load_features(path, response_col, D):
    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), [])
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {path}") from None
    if response_col in header:
        X = data.load_csv(path, response_col, "gaussian").X
    else:
        X = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if X.shape[1] != D:
        raise ConfigError(f"prediction rows have {X.shape[1]} features, expected {D}")
    return X


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "sample": cmd_sample,
            "bounds": cmd_bounds, "benchmark": cmd_benchmark, "predict": cmd_predict}


# --------------------------------------------------------------------------
# argument parsing


def _common(p):
    p.add_argument("--input", help="CSV with header; one response column")
    p.add_argument("--response-col", default="y", help="response column name (default: y)")
    p.add_argument("--family", default="gaussian", choices=["gaussian", "logistic", "poisson"])
    p.add_argument("--rank", type=int, help="M, rank of the design approximation (default: min(N, D))")
    p.add_argument("--prior-var", type=float, default=1.0, help="isotropic prior variance (default: 1)")
    p.add_argument("--prior-diag", help="text file with a diagonal prior covariance")
    p.add_argument("--tau", type=float, default=1.0, help="gaussian noise precision (default: 1)")
    p.add_argument("--svd", default="randomized", choices=["randomized", "exact"])
    p.add_argument("--oversample", type=int, default=10, help="randomized SVD oversampling (default: 10)")
    p.add_argument("--power-iters", type=int, default=2, help="randomized SVD power iterations (default: 2)")
    p.add_argument("--tol", type=float, default=1e-8, help="optimizer gradient tolerance (default: 1e-8)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default: stdout)")


def build_parser():
    ap = argparse.ArgumentParser(prog="lrglm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset CSV")
    _common(p)
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--d", type=int, default=250)
    p.add_argument("--no-rotate", action="store_true", help="keep axis-aligned covariates")
    p.add_argument("--beta-scale", type=float, default=1.0)
    p.add_argument("--beta-out", help="also write the true coefficients here")
    p.add_argument("--binary-out", help="also write X in the raw binary matrix format")

    p = sub.add_parser("fit", help="LR posterior (gaussian) or LR-Laplace fit, as JSON")
    _common(p)
    p.add_argument("--var-idx", help="comma-separated coordinates to report variances for")
    p.add_argument("--cov-pairs", help="comma-separated i:j covariance queries")
    p.add_argument("--all-variances", action="store_true")

    p = sub.add_parser("sample", help="LR-MCMC chain")
    _common(p)
    p.add_argument("--mcmc-iters", type=int, default=10000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--step-scale", type=float, default=0.1, help="initial random-walk step (default: 0.1)")
    p.add_argument("--proposal", default="random_walk", choices=["random_walk", "pcn"])
    p.add_argument("--no-adapt", action="store_true", help="keep the step fixed during burn-in")
    p.add_argument("--chain-out", help="CSV file for the retained draws")

    p = sub.add_parser("bounds", help="MAP and 2-Wasserstein error bounds, as JSON")
    _common(p)
    p.add_argument("--dense", default="auto", choices=["auto", "yes", "no"],
                   help="also fit the exact dense Laplace (auto: D <= 200)")

    p = sub.add_parser("benchmark", help="time and error vs. rank sweep, as CSV")
    _common(p)
    p.add_argument("--ranks", default="5,10,20", help="comma-separated list of M")
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--d", type=int, default=250)
    p.add_argument("--oracle-max-d", type=int, default=500)

    p = sub.add_parser("predict", help="probit-approximated predictive probabilities, as CSV")
    _common(p)
    p.add_argument("--predict-input", help="CSV of rows to score")
    p.add_argument("--point", action="store_true", help="plug-in sigmoid(x^T mu), no uncertainty")
    return ap


_BASE = {f for f in RunConfig.__dataclass_fields__ if f not in ("command", "extra")}


def config_from_args(ns) -> RunConfig:
    d = vars(ns).copy()
    base = {k: d.pop(k) for k in list(d) if k in _BASE}
    cmd = d.pop("command")
    return RunConfig(command=cmd, extra=d, **base)


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        cfg.validate()
        return COMMANDS[cfg.command](cfg)
    # LinAlgError subclasses ValueError, so numerical failures are caught first
    except (ConvergenceError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"lrglm {ns.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, OracleLimitError, ValueError, KeyError, OSError) as exc:
        print(f"lrglm {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

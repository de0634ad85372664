"""Synthetic data, CSV ingestion, splits and a raw binary matrix format."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .linalg import check_finite


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    family: str = "gaussian"
    true_beta: np.ndarray | None = None
    seed: int | None = None
    columns: list = field(default_factory=list)

    def __post_init__(self):
        if self.X.ndim != 2 or self.Y.ndim != 1 or self.X.shape[0] != self.Y.size:
            raise ValueError("X must be N x D and Y length N")
        if self.family == "logistic" and not np.all(np.abs(self.Y) == 1):
            raise ValueError("logistic responses must be -1/+1")
        if self.family == "poisson" and (np.any(self.Y < 0) or np.any(self.Y != np.round(self.Y))):
            raise ValueError("poisson responses must be non-negative integers")

    @property
    def shape(self):
        return self.X.shape


def covariate_variances(D: int) -> np.ndarray:
    """5 * 1.05^{-i} for i = 1..D."""
    return 5.0 * 1.05 ** -np.arange(1, D + 1, dtype=float)


def random_rotation(D: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix: Q of a Gaussian QR, signs fixed by diag(R)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    Q, R = np.linalg.qr(rng.standard_normal((D, D)))
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s


def synth_covariates(N: int, D: int, seed: int = 0, rotate: bool = True,
                     rotation_seed: int | None = None) -> np.ndarray:
    """Rows i.i.d. N(0, R diag(5 * 1.05^{-i}) R^T); R = I when ``rotate`` is false."""
    if N < 1 or D < 1:
        raise ValueError("N and D must be >= 1")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((N, D)) * np.sqrt(covariate_variances(D))
    if not rotate:
        return Z
    R = random_rotation(D, seed if rotation_seed is None else rotation_seed)
    return Z @ R.T


def out_of_sample_covariates(N: int, D: int, seed_alt: int, seed: int | None = None):
    """Same variance profile as :func:`synth_covariates`, different rotation."""
    return synth_covariates(N, D, seed=seed_alt if seed is None else seed,
                            rotate=True, rotation_seed=seed_alt)


def synth_responses(X, beta, family: str = "gaussian", tau: float = 1.0,
                    seed: int = 0) -> np.ndarray:
    X = check_finite(X)
    beta = check_finite(beta, "beta").ravel()
    if beta.size != X.shape[1]:
        raise ValueError("beta length must equal the number of columns of X")
    rng = np.random.default_rng(seed)
    a = X @ beta
    if family == "gaussian":
        if not tau > 0:
            raise ValueError("tau must be positive")
        return a + rng.standard_normal(a.size) / np.sqrt(tau)
    if family == "logistic":
        return np.where(rng.random(a.size) < expit(a), 1.0, -1.0)
    if family == "poisson":
        return rng.poisson(np.logaddexp(0.0, a)).astype(float)
    raise ValueError(f"unknown family {family!r}")


def simulate(N: int, D: int, family: str = "gaussian", tau: float = 1.0, seed: int = 0,
             rotate: bool = True, beta_scale: float = 1.0) -> Dataset:
    """Covariates, a N(0, beta_scale^2 I) coefficient draw, and responses."""
    X = synth_covariates(N, D, seed, rotate)
    beta = beta_scale * np.random.default_rng(np.random.SeedSequence([seed, 1])).standard_normal(D)
    Y = synth_responses(X, beta, family, tau, seed + 1)
    return Dataset(X, Y, family, beta, seed, [f"x{i}" for i in range(D)])


# --------------------------------------------------------------------------
# files


def load_csv(path, response_column="y", family: str = "gaussian") -> Dataset:
    """Read a numeric CSV with a header row.

    ``response_column`` is a header name (or an integer position).  Logistic
    responses coded 0/1 are mapped to -1/+1.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if isinstance(response_column, int):
        ycol = response_column
        if not 0 <= ycol < len(header):
            raise ValueError(f"response column {ycol} out of range")
    else:
        if response_column not in header:
            raise ValueError(f"response column {response_column!r} not in header {header}")
        ycol = header.index(response_column)
    data = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: non-numeric cell {cell!r} at row {i + 2}, "
                                 f"column {header[j]!r}") from None
    check_finite(data, "CSV data")
    Y = data[:, ycol].copy()
    X = np.delete(data, ycol, axis=1)
    cols = header[:ycol] + header[ycol + 1:]
    if family == "logistic" and np.all(np.isin(Y, (0.0, 1.0))):
        Y = 2.0 * Y - 1.0
    return Dataset(X, Y, family, columns=cols)


def save_csv(ds: Dataset, path, response_column: str = "y") -> None:
    """Write X columns then the response; floats use repr, so reading back is exact."""
    cols = ds.columns or [f"x{i}" for i in range(ds.X.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(cols) + [response_column])
        for x, y in zip(ds.X, ds.Y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def split(ds: Dataset, train_frac: float, seed: int = 0):
    """Seeded random partition into (train, test)."""
    if not 0.0 <= train_frac <= 1.0:
        raise ValueError("train_frac must lie in [0, 1]")
    N = ds.Y.size
    perm = np.random.default_rng(seed).permutation(N)
    n_train = int(round(train_frac * N))
    tr, te = perm[:n_train], perm[n_train:]

    def sub(idx):
        tb = ds.true_beta
        return Dataset(ds.X[idx], ds.Y[idx], ds.family, tb, ds.seed, list(ds.columns))

    return sub(tr), sub(te)


_HEADER = struct.Struct("<QQ")


def write_matrix(path, A) -> None:
    """16-byte header (rows, cols as little-endian uint64) then float64 LE, row-major."""
    A = np.ascontiguousarray(np.atleast_2d(np.asarray(A, dtype="<f8")))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*A.shape))
        fh.write(A.tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        n, d = _HEADER.unpack(head)
        buf = fh.read()
    if len(buf) != 8 * n * d:
        raise ValueError(f"{path}: expected {8 * n * d} data bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype="<f8").reshape(n, d).astype(float)

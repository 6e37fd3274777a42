"""Datasets: containers, synthetic generators, CSV I/O, splits, metrics.

Synthetic responses follow three nonlinearity profiles on top of AR(1)
correlated Gaussian features: a linear signal, a linear-plus-centered-square
signal, and a saturating tanh signal.  The signal direction is the average
of the leading eigenvectors of the feature covariance, which keeps the
signal-to-noise geometry comparable across dimensions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, InvalidParameterError, NumericError
from .streams import substream

MODELS = ("linear", "quad", "tanh")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``x`` (n, p) and response vector ``y`` (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2:
            raise InvalidParameterError("x must be a 2-d array")
        if y.ndim != 1:
            raise InvalidParameterError("y must be a 1-d array")
        if x.shape[0] != y.shape[0]:
            raise InvalidParameterError(
                f"x has {x.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise InvalidParameterError("dataset needs at least one row and one column")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise InvalidParameterError("dataset entries must be finite")
        x = x.copy()
        y = y.copy()
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.x[rows], self.y[rows])


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic regression dataset."""

    model: str
    n: int
    p: int
    rho_ar: float = 0.5
    sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidParameterError(
                f"model must be one of {MODELS}, got {self.model!r}"
            )
        if self.n < 1 or self.p < 1:
            raise InvalidParameterError("n and p must be positive")
        if self.sigma < 0:
            raise InvalidParameterError("sigma must be nonnegative")
        if not abs(self.rho_ar) < 1:
            raise InvalidParameterError("rho_ar must satisfy |rho_ar| < 1")

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "n": self.n,
            "p": self.p,
            "rho_ar": self.rho_ar,
            "sigma": self.sigma,
            "seed": self.seed,
        }

    @staticmethod
    def from_json_dict(block: dict) -> "SyntheticSpec":
        allowed = {"model", "n", "p", "rho_ar", "sigma", "seed"}
        unknown = set(block) - allowed
        if unknown:
            raise InvalidParameterError(
                f"unknown synthetic-spec keys: {sorted(unknown)}"
            )
        if "model" not in block or "n" not in block or "p" not in block:
            raise InvalidParameterError("synthetic-spec needs model, n and p")
        return SyntheticSpec(**block)


def ar1_covariance(p: int, rho: float) -> np.ndarray:
    """Return the (p, p) matrix with entries rho**|i-j|."""
    if p < 1:
        raise InvalidParameterError("p must be positive")
    if not abs(rho) < 1:
        raise InvalidParameterError("rho must satisfy |rho| < 1")
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _fix_sign(v: np.ndarray) -> np.ndarray:
    # first coordinate that is not numerically zero decides the sign
    scale = np.max(np.abs(v))
    nz = np.nonzero(np.abs(v) > 1e-12 * scale)[0]
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def signal_beta(sigma_mat: np.ndarray) -> np.ndarray:
    """Average of the five leading unit-norm eigenvectors of ``sigma_mat``.

    Eigenvalue ties are broken by ascending position in the symmetric
    eigendecomposition; each eigenvector's sign is fixed so that its first
    nonzero coordinate is positive.
    """
    sigma_mat = np.asarray(sigma_mat, dtype=np.float64)
    if sigma_mat.ndim != 2 or sigma_mat.shape[0] != sigma_mat.shape[1]:
        raise InvalidParameterError("covariance must be a square matrix")
    p = sigma_mat.shape[0]
    if p < 5:
        raise InvalidParameterError("signal direction needs p >= 5")
    evals, evecs = np.linalg.eigh(sigma_mat)
    order = np.argsort(-evals, kind="stable")
    top = order[:5]
    vecs = [_fix_sign(evecs[:, j] / np.linalg.norm(evecs[:, j])) for j in top]
    return np.mean(vecs, axis=0)


def _sqrt_psd(sigma_mat: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(sigma_mat)
    evals = np.clip(evals, 0.0, None)
    return (evecs * np.sqrt(evals)) @ evecs.T


def simulate(spec: SyntheticSpec) -> Dataset:
    """Draw one dataset from ``spec``, deterministically in ``spec.seed``."""
    if spec.p < 5:
        raise InvalidParameterError("simulation needs p >= 5")
    sigma_mat = ar1_covariance(spec.p, spec.rho_ar)
    beta = signal_beta(sigma_mat)
    root = _sqrt_psd(sigma_mat)
    rng = substream(spec.seed, "simulate")
    z = rng.standard_normal((spec.n, spec.p))
    eps = rng.standard_normal(spec.n)
    x = z @ root
    s = x @ beta
    if spec.model == "linear":
        y = s + spec.sigma * eps
    elif spec.model == "quad":
        y = s + (s * s - np.trace(sigma_mat) / spec.p) + spec.sigma * eps
    else:
        y = np.tanh(s) + spec.sigma * eps
    return Dataset(x, y)


def load_csv(path: str, response, has_header: bool = True) -> Dataset:
    """Read a numeric CSV into a Dataset.

    ``response`` picks the response column either by header name (requires
    ``has_header``) or by 0-based integer position.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataFormatError(f"could not read {path}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path} is empty")

    header = None
    if has_header:
        header = rows[0]
        rows = rows[1:]
        if not rows:
            raise DataFormatError(f"{path} has a header but no data rows")

    ncol = len(rows[0])
    if isinstance(response, str):
        if header is None:
            raise DataFormatError("response by name requires a header row")
        try:
            y_col = header.index(response)
        except ValueError:
            raise DataFormatError(
                f"response column {response!r} not in header {header}"
            ) from None
    else:
        y_col = int(response)
        if y_col < 0:
            y_col += ncol
        if not 0 <= y_col < ncol:
            raise DataFormatError(f"response index {response} out of range")

    parsed = np.empty((len(rows), ncol), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != ncol:
            raise DataFormatError(
                f"row {i + 1}: expected {ncol} fields, found {len(row)}"
            )
        for j, cell in enumerate(row):
            try:
                parsed[i, j] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"row {i + 1}, column {j + 1}: could not parse {cell!r}"
                ) from None
    if not np.all(np.isfinite(parsed)):
        bad = np.argwhere(~np.isfinite(parsed))[0]
        raise DataFormatError(
            f"row {bad[0] + 1}, column {bad[1] + 1}: non-finite value"
        )

    mask = np.ones(ncol, dtype=bool)
    mask[y_col] = False
    return Dataset(parsed[:, mask], parsed[:, y_col])


def write_csv(data: Dataset, path: str, has_header: bool = True) -> None:
    """Write a Dataset with full round-trip decimal precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if has_header:
            writer.writerow([f"x{j + 1}" for j in range(data.p)] + ["y"])
        for i in range(data.n):
            writer.writerow(
                [format(v, ".17g") for v in data.x[i]] + [format(data.y[i], ".17g")]
            )


def train_test_split(data: Dataset, test_fraction: float, seed: int):
    """Disjoint random split; the test part gets floor(n * test_fraction) rows."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidParameterError("test_fraction must be in (0, 1)")
    n_test = math.floor(data.n * test_fraction)
    if n_test == 0 or n_test == data.n:
        raise InvalidParameterError(
            f"split of {data.n} rows at fraction {test_fraction} leaves a part empty"
        )
    perm = substream(seed, "split").permutation(data.n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return data.subset(train_rows), data.subset(test_rows)


def nmse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared error normalized by the population variance of ``truth``.

    A constant predictor at the mean of ``truth`` scores exactly 1.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise InvalidParameterError("pred and truth must be equal-length vectors")
    if truth.size < 2:
        raise InvalidParameterError("need at least two observations")
    var = float(np.mean((truth - np.mean(truth)) ** 2))
    if var == 0.0:
        raise NumericError("truth is constant; normalized error divides by zero")
    return float(np.mean((pred - truth) ** 2)) / var

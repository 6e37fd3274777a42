"""Out-of-bag risk estimation and extrapolation across ensemble sizes.

The squared-error risk of an m-member ensemble is affine in 1/m.  Its two
coefficients are identified by the risks of single members and of averaged
member pairs, both of which have natural out-of-bag estimates.  Estimating
those two numbers at a small ensemble size therefore prices every ensemble
size at once, including the infinite-ensemble limit 2*r2 - r1.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import (InvalidParameterError, NumericError, OobExhaustedError)
from .predictors import FittedEnsemble, PredictorSpec, fit_ensemble, predict_base
from .sampling import pair_union_oob
from .streams import substream

INFINITE = math.inf


@dataclass(frozen=True)
class CenteringSpec:
    """How OOB squared errors are collapsed to one number.

    "avg" is the plain mean.  "mom" is a median of block means over a random
    partition into ceil(8 * a * ln n) near-equal blocks, which tolerates a
    small number of wild errors.
    """

    method: str = "avg"
    mom_a: float = 1.0

    def __post_init__(self):
        if self.method not in ("avg", "mom"):
            raise InvalidParameterError(
                f"centering method must be 'avg' or 'mom', got {self.method!r}"
            )
        if not self.mom_a > 0:
            raise InvalidParameterError("mom_a must be positive")

    @staticmethod
    def avg() -> "CenteringSpec":
        return CenteringSpec(method="avg")

    @staticmethod
    def mom(a: float = 1.0) -> "CenteringSpec":
        return CenteringSpec(method="mom", mom_a=a)


def mom_block_count(n_errors: int, n: int, a: float) -> int:
    """Block count ceil(8 * a * ln n), clipped to [1, n_errors // 2]."""
    if n < 1 or n_errors < 1:
        raise InvalidParameterError("need positive sample sizes")
    b = math.ceil(8.0 * a * math.log(n))
    return max(1, min(b, n_errors // 2))


def center(errors: np.ndarray, spec: CenteringSpec, n: int,
           stream: Optional[np.random.Generator] = None) -> float:
    """Collapse a vector of OOB squared errors into one risk value."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.ndim != 1 or errors.size == 0:
        raise InvalidParameterError("errors must be a nonempty vector")
    if spec.method == "avg":
        return float(np.mean(errors))
    if stream is None:
        raise InvalidParameterError("median-of-means centering needs a stream")
    b = mom_block_count(errors.size, n, spec.mom_a)
    perm = stream.permutation(errors.size)
    blocks = np.array_split(perm, b)
    means = np.array([errors[blk].mean() for blk in blocks])
    return float(np.median(means))


def oob_squared_errors(member, data: Dataset, oob: np.ndarray) -> np.ndarray:
    """Squared errors of one member on its out-of-bag rows."""
    oob = np.asarray(oob, dtype=np.int64)
    if oob.size == 0:
        raise OobExhaustedError("no out-of-bag rows for this member")
    pred = predict_base(member, data.x[oob])
    return (data.y[oob] - pred) ** 2


@dataclass(frozen=True)
class RiskComponents:
    """OOB estimates of the single-member and pair-average risks at one k."""

    r1: float
    r2: float
    k: int
    m0: int
    oob_min: int
    oob_mean: float
    skipped_pairs: int = 0
    skipped_singles: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.r1) and math.isfinite(self.r2)):
            raise NumericError("risk components must be finite")
        if self.r1 < 0 or self.r2 < 0:
            raise NumericError("risk components must be nonnegative")


def estimate_components(ens: FittedEnsemble, data: Dataset,
                        centering: CenteringSpec, seed: int) -> RiskComponents:
    """Estimate r1 (singles) and r2 (pairs) from one fitted ensemble.

    Members or pairs with an empty OOB set are skipped and counted; if all
    of either family is empty the estimate cannot be formed.
    """
    m0 = ens.m
    if m0 < 2:
        raise InvalidParameterError("component estimation needs at least 2 members")
    if ens.indices[0].n != data.n:
        raise InvalidParameterError("ensemble was fitted on a different row count")
    preds = ens.member_matrix(data.x)
    y = data.y
    k = ens.k

    singles = []
    sizes = []
    skipped_singles = 0
    for ell in range(m0):
        oob = ens.indices[ell].oob
        if oob.size == 0:
            skipped_singles += 1
            continue
        err = (y[oob] - preds[ell, oob]) ** 2
        stream = substream(seed, k, "center", ell, ell)
        singles.append(center(err, centering, data.n, stream))
        sizes.append(oob.size)
    if not singles:
        raise OobExhaustedError(f"every member at k={k} has an empty OOB set")

    pairs = []
    skipped_pairs = 0
    for ell in range(m0):
        for mm in range(ell + 1, m0):
            oob = pair_union_oob(ens.indices[ell], ens.indices[mm])
            if oob.size == 0:
                skipped_pairs += 1
                continue
            err = (0.5 * (preds[ell, oob] + preds[mm, oob]) - y[oob]) ** 2
            stream = substream(seed, k, "center", ell, mm)
            pairs.append(center(err, centering, data.n, stream))
            sizes.append(oob.size)
    if not pairs:
        raise OobExhaustedError(f"every member pair at k={k} has an empty OOB set")

    return RiskComponents(
        r1=float(np.mean(singles)),
        r2=float(np.mean(pairs)),
        k=k,
        m0=m0,
        oob_min=int(np.min(sizes)),
        oob_mean=float(np.mean(sizes)),
        skipped_pairs=skipped_pairs,
        skipped_singles=skipped_singles,
    )


def _check_m(m) -> float:
    if m == INFINITE:
        return INFINITE
    if isinstance(m, (int, np.integer)) and m >= 1:
        return float(m)
    if isinstance(m, float) and m.is_integer() and m >= 1:
        return m
    raise InvalidParameterError(f"ensemble size must be a positive integer or inf, got {m!r}")


def extrapolate(rc: RiskComponents, m) -> float:
    """Risk estimate for an m-member ensemble from the two components.

    Exactly r1 at m=1, exactly r2 at m=2, and 2*r2 - r1 in the limit.
    """
    mf = _check_m(m)
    if mf == INFINITE:
        return 2.0 * rc.r2 - rc.r1
    return -(1.0 - 2.0 / mf) * rc.r1 + 2.0 * (1.0 - 1.0 / mf) * rc.r2


def null_risk(data: Dataset) -> float:
    """Risk of the zero predictor: the mean squared response."""
    return float(np.mean(data.y**2))


def decomposition_oracle(ens: FittedEnsemble, eval_data: Dataset, m: int) -> dict:
    """Both sides of the risk decomposition on an evaluation set.

    lhs: empirical squared error of the m-member average.  rhs: the affine
    recombination of a1 (mean single-member risk) and a2 (mean pair-average
    risk over distinct pairs).  The two agree up to float rounding.
    """
    if not 2 <= m <= ens.m:
        raise InvalidParameterError(f"need 2 <= m <= {ens.m}, got {m}")
    preds = ens.member_matrix(eval_data.x)[:m]
    y = eval_data.y
    lhs = float(np.mean((preds.mean(axis=0) - y) ** 2))
    a1 = float(np.mean([np.mean((preds[i] - y) ** 2) for i in range(m)]))
    pair_risks = [
        np.mean((0.5 * (preds[i] + preds[j]) - y) ** 2)
        for i in range(m)
        for j in range(i + 1, m)
    ]
    a2 = float(np.mean(pair_risks))
    rhs = -(1.0 - 2.0 / m) * a1 + 2.0 * (1.0 - 1.0 / m) * a2
    return {"lhs": lhs, "rhs": rhs, "a1": a1, "a2": a2}


# ============================================================
# risk surfaces over a subsample-size grid
# ============================================================

DEFAULT_M_LIST = (1, 2, 5, 10, 20, 50, INFINITE)


@dataclass(frozen=True)
class RiskSurface:
    """Extrapolated risk estimates over (k in grid) x (any ensemble size).

    ``components`` maps each positive grid k to its RiskComponents, or None
    when the OOB sets were exhausted at that k.  k=0 stands for the zero
    predictor, whose estimate is the null risk for every ensemble size.
    """

    grid: tuple
    null_risk: float
    components: dict
    m0: int
    mode: str

    def value(self, k: int, m) -> Optional[float]:
        if k == 0:
            _check_m(m)
            return self.null_risk
        rc = self.components.get(k)
        if rc is None:
            return None
        return extrapolate(rc, m)

    def column(self, m):
        """(k, estimate-or-None) down the grid at one ensemble size."""
        return [(k, self.value(k, m)) for k in self.grid]

    def rows(self, m_list=DEFAULT_M_LIST):
        """Flat (k, m, estimate, oob_min, oob_mean, skipped_pairs) rows."""
        out = []
        for k in self.grid:
            rc = None if k == 0 else self.components.get(k)
            for m in m_list:
                est = self.value(k, m)
                if k == 0:
                    out.append((k, m, est, 0, 0.0, 0))
                elif rc is None:
                    out.append((k, m, None, 0, 0.0, 0))
                else:
                    out.append((k, m, est, rc.oob_min, rc.oob_mean, rc.skipped_pairs))
        return out


def fit_grid_components(data: Dataset, spec: PredictorSpec, grid, m0: int,
                        mode: str, centering: CenteringSpec, seed: int,
                        threads: Optional[int] = None, keep_ensembles: bool = False):
    """Fit an m0-ensemble and estimate components at every positive grid k.

    Returns (components, ensembles) dicts keyed by k; a k whose OOB sets are
    exhausted maps to None instead of aborting the whole grid.
    """
    grid = _validate_grid(grid, data.n)
    if m0 < 2:
        raise InvalidParameterError("m0 must be at least 2")
    positive = [int(k) for k in grid if k > 0]

    def task(k):
        ens = fit_ensemble(spec, data, k, m0, mode, seed)
        try:
            rc = estimate_components(ens, data, centering, seed)
        except OobExhaustedError:
            rc = None
        return k, rc, (ens if keep_ensembles else None)

    results = {}
    ensembles = {}
    if threads is not None and threads < 1:
        raise InvalidParameterError("threads must be at least 1")
    if threads == 1 or len(positive) <= 1:
        mapped = map(task, positive)
    else:
        pool = ThreadPoolExecutor(max_workers=threads)
        mapped = pool.map(task, positive)
    for k, rc, ens in mapped:
        results[k] = rc
        if keep_ensembles:
            ensembles[k] = ens
    if threads != 1 and len(positive) > 1:
        pool.shutdown()
    return results, ensembles


def _validate_grid(grid, n: int):
    arr = [int(k) for k in grid]
    if not arr:
        raise InvalidParameterError("grid must be nonempty")
    if any(k < 0 for k in arr):
        raise InvalidParameterError("grid values must be nonnegative")
    if any(k > n for k in arr):
        raise InvalidParameterError("grid values cannot exceed the row count")
    if len(set(arr)) != len(arr) or sorted(arr) != arr:
        raise InvalidParameterError("grid must be strictly increasing")
    return tuple(arr)


def risk_surface(data: Dataset, spec: PredictorSpec, grid, m0: int, mode: str,
                 centering: CenteringSpec, seed: int,
                 threads: Optional[int] = None) -> RiskSurface:
    """Estimate the extrapolated risk surface over a subsample-size grid."""
    components, _ = fit_grid_components(data, spec, grid, m0, mode, centering,
                                        seed, threads=threads)
    return RiskSurface(grid=_validate_grid(grid, data.n),
                       null_risk=null_risk(data), components=components,
                       m0=m0, mode=mode)

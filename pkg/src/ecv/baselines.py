"""Cross-validation baselines over the same (m, k) grid, plus a comparison
harness.

Both baselines fit m_max base predictors per subsample size on a reduced
training part and score every ensemble size at once through running prefix
means of the held-out predictions.  After selection the winning (m, k) is
refitted on the full training set.  Grid sizes larger than the reduced part
cannot be evaluated honestly and are marked missing rather than silently
shrunk.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, nmse
from .errors import InvalidParameterError, TuningFailedError
from .predictors import PredictorSpec, fit_base, fit_ensemble, predict_base
from .sampling import MODES, draw_indices
from .streams import derive_seed, substream
from .tuning import EcvConfig, TuneResult, build_grid, ecv_tune

METHODS = ("sample-split", "kfold")


@dataclass(frozen=True)
class BaselineSpec:
    """Settings for one cross-validation baseline."""

    method: str
    m_max: int
    grid: tuple
    seed: int = 0
    alpha: float = 5.0 / 6.0
    folds: int = 5

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameterError(f"method must be one of {METHODS}")
        if self.m_max < 1:
            raise InvalidParameterError("m_max must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameterError("alpha must be in (0, 1)")
        if self.folds < 2:
            raise InvalidParameterError("folds must be at least 2")
        grid = tuple(int(k) for k in self.grid)
        if not grid or sorted(set(grid)) != list(grid):
            raise InvalidParameterError("grid must be strictly increasing")
        if grid[0] < 0:
            raise InvalidParameterError("grid values must be nonnegative")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class CvErrorTable:
    """Held-out error for every (m, k) on the shared grid.

    ``errors[m - 1, j]`` is the validation error of the m-member running
    average at grid[j]; NaN marks a k that exceeded the reduced part.
    """

    grid: tuple
    m_max: int
    errors: np.ndarray

    def value(self, m: int, k: int) -> float:
        if not 1 <= m <= self.m_max:
            raise InvalidParameterError(f"need 1 <= m <= {self.m_max}")
        if k not in self.grid:
            raise InvalidParameterError(f"k={k} is not on the grid")
        return float(self.errors[m - 1, self.grid.index(k)])

    def best(self):
        """(m, k) minimizing error; ties prefer smaller m, then smaller k."""
        best = None
        for m in range(1, self.m_max + 1):
            for j, k in enumerate(self.grid):
                v = self.errors[m - 1, j]
                if math.isnan(v):
                    continue
                if best is None or v < best[0]:
                    best = (v, m, k)
        if best is None:
            raise TuningFailedError("every grid cell is missing")
        return best[1], best[2]


def _prefix_mean_errors(preds: np.ndarray, y_val: np.ndarray) -> np.ndarray:
    """Validation MSE of every prefix average of the member predictions."""
    m_max = preds.shape[0]
    cums = np.cumsum(preds, axis=0) / np.arange(1, m_max + 1)[:, None]
    return np.mean((cums - y_val[None, :]) ** 2, axis=1)


def _column_for_k(data, part_rows, val_rows, spec, k, m_max, mode, stream_tags,
                  seed):
    """Held-out errors for all m at one k, or None when k exceeds the part."""
    n_part = part_rows.size
    y_val = data.y[val_rows]
    if k == 0:
        return np.full(m_max, float(np.mean(y_val**2)))
    if k > n_part:
        return None
    x_val = data.x[val_rows]
    part = data.subset(part_rows)
    preds = np.empty((m_max, val_rows.size))
    for ell in range(1, m_max + 1):
        idx = draw_indices(n_part, k, mode, substream(seed, *stream_tags, k, ell))
        member = fit_base(spec, part, idx,
                          rng=substream(seed, *stream_tags, k, ell, "fit"))
        preds[ell - 1] = predict_base(member, x_val)
    return _prefix_mean_errors(preds, y_val)


def _finish(method, data, spec, bspec, mode, table, t0, n_fits) -> TuneResult:
    m_hat, k_hat = table.best()
    tune_seconds = time.perf_counter() - t0
    if k_hat == 0:
        ensemble = None
    else:
        ensemble = fit_ensemble(spec, data, k_hat, m_hat, mode,
                                derive_seed(bspec.seed, "refit"))
    return TuneResult(method=method, k_hat=k_hat, m_hat=m_hat,
                      estimated_risk_at_selection=table.value(m_hat, k_hat),
                      surface=table, ensemble=ensemble, grid=bspec.grid,
                      n_base_fits=n_fits, selection_rule="cv-argmin",
                      tune_seconds=tune_seconds)


def _map_columns(tasks, threads):
    if threads is not None and threads < 1:
        raise InvalidParameterError("threads must be at least 1")
    if threads == 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def split_cv_tune(data: Dataset, spec: PredictorSpec, bspec: BaselineSpec,
                  mode: str, threads: Optional[int] = None) -> TuneResult:
    """Single-split cross-validation over the shared (m, k) grid."""
    if bspec.method != "sample-split":
        raise InvalidParameterError("bspec.method must be 'sample-split'")
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}")
    t0 = time.perf_counter()
    n = data.n
    n_part = math.ceil(bspec.alpha * n)
    if n_part < 1 or n_part >= n:
        raise InvalidParameterError(
            f"alpha={bspec.alpha} leaves a degenerate split of {n} rows"
        )
    perm = substream(bspec.seed, "split-cv").permutation(n)
    part_rows = np.sort(perm[:n_part])
    val_rows = np.sort(perm[n_part:])

    tasks = [
        (lambda kk=k: _column_for_k(data, part_rows, val_rows, spec, kk,
                                    bspec.m_max, mode, ("part",), bspec.seed))
        for k in bspec.grid
    ]
    columns = _map_columns(tasks, threads)
    errors = np.full((bspec.m_max, len(bspec.grid)), np.nan)
    n_fits = 0
    for j, col in enumerate(columns):
        if col is not None:
            errors[:, j] = col
            if bspec.grid[j] > 0:
                n_fits += bspec.m_max
    table = CvErrorTable(grid=bspec.grid, m_max=bspec.m_max, errors=errors)
    return _finish("sample-split", data, spec, bspec, mode, table, t0, n_fits)


def kfold_cv_tune(data: Dataset, spec: PredictorSpec, bspec: BaselineSpec,
                  mode: str, threads: Optional[int] = None) -> TuneResult:
    """K-fold cross-validation over the shared (m, k) grid."""
    if bspec.method != "kfold":
        raise InvalidParameterError("bspec.method must be 'kfold'")
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}")
    if bspec.folds * 2 > data.n:
        raise InvalidParameterError(
            f"{bspec.folds} folds need at least {2 * bspec.folds} rows"
        )
    t0 = time.perf_counter()
    n = data.n
    perm = substream(bspec.seed, "kfold-cv").permutation(n)
    folds = np.array_split(perm, bspec.folds)

    tasks = []
    for f, fold in enumerate(folds):
        val_rows = np.sort(fold)
        part_rows = np.sort(np.setdiff1d(perm, fold, assume_unique=True))
        for k in bspec.grid:
            tasks.append(
                (lambda kk=k, pr=part_rows, vr=val_rows, ff=f:
                 (ff, kk, _column_for_k(data, pr, vr, spec, kk, bspec.m_max,
                                        mode, ("fold", ff), bspec.seed)))
            )
    results = _map_columns(tasks, threads)

    errors = np.zeros((bspec.m_max, len(bspec.grid)))
    missing = np.zeros(len(bspec.grid), dtype=bool)
    n_fits = 0
    for f, k, col in results:
        j = bspec.grid.index(k)
        if col is None:
            missing[j] = True
        else:
            if not missing[j]:
                errors[:, j] += col / bspec.folds
            if k > 0:
                n_fits += bspec.m_max
    errors[:, missing] = np.nan
    table = CvErrorTable(grid=bspec.grid, m_max=bspec.m_max, errors=errors)
    return _finish("kfold", data, spec, bspec, mode, table, t0, n_fits)


# ============================================================
# comparison harness
# ============================================================


@dataclass(frozen=True)
class MethodRow:
    method: str
    m_hat: int
    k_hat: int
    tune_seconds: float
    test_error: float
    suboptimality: float
    base_fits: int


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple
    best_grid_error: float
    grid: tuple
    metric: str


def _config_signature(grid, m_max, spec, mode):
    return (tuple(grid), int(m_max), tuple(sorted(spec.to_json_dict().items(),
                                                  key=lambda kv: kv[0])), mode)


def _test_error_surface(data_train, data_test, spec, grid, m_max, mode, seed):
    """Exhaustive held-out error over (m, k): the grid-best reference."""
    best = math.inf
    y_test = data_test.y
    for k in grid:
        if k == 0:
            best = min(best, float(np.mean(y_test**2)))
            continue
        ens = fit_ensemble(spec, data_train, k, m_max, mode,
                           derive_seed(seed, "grid-best", k))
        preds = ens.member_matrix(data_test.x)
        best = min(best, float(np.min(_prefix_mean_errors(preds, y_test))))
    return best


def _warmup(spec, data):
    rows = np.arange(min(data.n, 30))
    small = data.subset(rows)
    fit_ensemble(spec, small, max(2, min(small.n // 2, 10)), 2, "subagging", 0)


def compare(data_train: Dataset, data_test: Dataset, spec: PredictorSpec,
            ecv_cfg: EcvConfig, baseline_specs, metric: str = "nmse",
            threads: Optional[int] = None) -> ComparisonReport:
    """Run the tuner and the baselines on one train/test pair.

    All methods must share the same grid, budget, predictor and mode; the
    report records tuning wall-time, held-out error of the refitted choice,
    and suboptimality against the grid-exhaustive best on the test set.
    """
    if metric not in ("mse", "nmse"):
        raise InvalidParameterError("metric must be 'mse' or 'nmse'")
    if ecv_cfg.m_max is None:
        raise InvalidParameterError("comparison needs a budgeted tuner (m_max)")
    grid = build_grid(data_train.n, ecv_cfg.nu)
    reference = _config_signature(grid, ecv_cfg.m_max, spec, ecv_cfg.mode)
    for bspec in baseline_specs:
        if _config_signature(bspec.grid, bspec.m_max, spec, ecv_cfg.mode) != reference:
            raise InvalidParameterError(
                f"baseline {bspec.method} does not share the tuner configuration"
            )

    _warmup(spec, data_train)

    results = [ecv_tune(data_train, spec, ecv_cfg, threads=threads)]
    for bspec in baseline_specs:
        if bspec.method == "sample-split":
            results.append(split_cv_tune(data_train, spec, bspec, ecv_cfg.mode,
                                         threads=threads))
        else:
            results.append(kfold_cv_tune(data_train, spec, bspec, ecv_cfg.mode,
                                         threads=threads))

    y_test = data_test.y
    denom = 1.0
    if metric == "nmse":
        denom = float(np.mean((y_test - np.mean(y_test)) ** 2))
        if denom == 0.0:
            raise InvalidParameterError("test response is constant")
    best = _test_error_surface(data_train, data_test, spec, grid,
                               ecv_cfg.m_max, ecv_cfg.mode, ecv_cfg.seed)
    best /= denom

    rows = []
    for res in results:
        err = float(np.mean((res.predict(data_test.x) - y_test) ** 2)) / denom
        rows.append(MethodRow(method=res.method, m_hat=res.m_hat,
                              k_hat=res.k_hat, tune_seconds=res.tune_seconds,
                              test_error=err, suboptimality=err - best,
                              base_fits=res.n_base_fits))
    return ComparisonReport(rows=tuple(rows), best_grid_error=best, grid=grid,
                            metric=metric)

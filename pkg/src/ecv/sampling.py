"""Row resampling for randomized ensembles.

Two modes are supported: "bagging" draws k rows independently with
replacement, "subagging" draws a uniform k-subset without replacement.
Each ensemble member's draw comes from its own substream keyed by
``(seed, k, member_index)`` so that members are independent of fitting
order and of how many members exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .streams import substream

MODES = ("bagging", "subagging")


@dataclass(frozen=True)
class SampleIndices:
    """One member's draw over rows ``0..n-1``.

    ``draws`` keeps multiplicity (sorted), ``distinct`` is the sorted set of
    touched rows, ``oob`` the sorted complement.
    """

    n: int
    k: int
    draws: np.ndarray
    distinct: np.ndarray
    oob: np.ndarray

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=np.int64)
        if self.n < 1:
            raise InvalidParameterError("n must be positive")
        if draws.size != self.k:
            raise InvalidParameterError("draws must contain exactly k entries")
        if draws.size and (draws.min() < 0 or draws.max() >= self.n):
            raise InvalidParameterError("draw indices out of range")
        if np.any(np.diff(draws) < 0):
            raise InvalidParameterError("draws must be sorted")
        distinct = np.unique(draws)
        if not np.array_equal(distinct, np.asarray(self.distinct, dtype=np.int64)):
            raise InvalidParameterError("distinct must equal the set of draws")
        oob = np.setdiff1d(np.arange(self.n, dtype=np.int64), distinct,
                           assume_unique=True)
        if not np.array_equal(oob, np.asarray(self.oob, dtype=np.int64)):
            raise InvalidParameterError("oob must be the complement of distinct")
        for name, arr in (("draws", draws), ("distinct", distinct), ("oob", oob)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got {mode!r}")


def draw_indices(n: int, k: int, mode: str, stream: np.random.Generator) -> SampleIndices:
    """Draw one subsample of size k from n rows."""
    _check_mode(mode)
    if not 1 <= k <= n:
        raise InvalidParameterError(f"k must satisfy 1 <= k <= n, got k={k}, n={n}")
    if mode == "bagging":
        draws = np.sort(stream.integers(0, n, size=k))
    else:
        draws = np.sort(stream.choice(n, size=k, replace=False))
    distinct = np.unique(draws)
    oob = np.setdiff1d(np.arange(n, dtype=np.int64), distinct, assume_unique=True)
    return SampleIndices(n=n, k=k, draws=draws, distinct=distinct, oob=oob)


def pair_union_oob(a: SampleIndices, b: SampleIndices) -> np.ndarray:
    """Rows touched by neither draw."""
    if a.n != b.n:
        raise InvalidParameterError("both draws must index the same row count")
    union = np.union1d(a.distinct, b.distinct)
    return np.setdiff1d(np.arange(a.n, dtype=np.int64), union, assume_unique=True)


def draw_ensemble_indices(n: int, k: int, m: int, mode: str, seed: int):
    """Draws for members 1..m, each from its keyed substream."""
    if m < 1:
        raise InvalidParameterError("ensemble size must be at least 1")
    return [draw_indices(n, k, mode, substream(seed, k, ell)) for ell in range(1, m + 1)]


@dataclass(frozen=True)
class OverlapSummary:
    mean_overlap: float
    var_overlap: float
    trials: int


def overlap_stats(n: int, k: int, mode: str, trials: int, seed: int) -> OverlapSummary:
    """Monte-Carlo mean and variance of the overlap of two independent draws.

    For subagging the overlap is the intersection size of the two subsets.
    For bagging it counts the second draw's entries (with multiplicity) that
    land in the distinct set of the first draw.
    """
    _check_mode(mode)
    if not 1 <= k <= n:
        raise InvalidParameterError(f"k must satisfy 1 <= k <= n, got k={k}, n={n}")
    if trials < 2:
        raise InvalidParameterError("need at least two trials")
    rng = substream(seed, "overlap")
    overlaps = np.empty(trials, dtype=np.float64)
    chunk = max(1, min(trials, 20_000_000 // max(n, k)))
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        if mode == "subagging":
            base = np.tile(np.arange(n), (t, 1))
            first = rng.permuted(base, axis=1)[:, :k]
            second = rng.permuted(base, axis=1)[:, :k]
        else:
            first = rng.integers(0, n, size=(t, k))
            second = rng.integers(0, n, size=(t, k))
        mark = np.zeros((t, n), dtype=bool)
        mark[np.arange(t)[:, None], first] = True
        overlaps[done:done + t] = mark[np.arange(t)[:, None], second].sum(axis=1)
        done += t
    return OverlapSummary(
        mean_overlap=float(np.mean(overlaps)),
        var_overlap=float(np.var(overlaps, ddof=1)),
        trials=trials,
    )

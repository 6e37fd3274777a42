"""Joint selection of ensemble size and subsample size.

The tuner fits a small pilot ensemble at every grid subsample size, prices
all ensemble sizes through the two OOB risk components, picks the subsample
size whose priced-out limit (or budget-capped value) is smallest, and then
solves for the cheapest ensemble size whose excess risk over that limit is
within the tolerance delta.  The pilot members at the winning subsample
size are reused; only the shortfall beyond the pilot size is fitted anew.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import InvalidParameterError, TuningFailedError
from .predictors import (FittedEnsemble, PredictorSpec, ensemble_prefix,
                         extend_ensemble, predict_ensemble)
from .risk import (INFINITE, CenteringSpec, RiskSurface, extrapolate,
                   fit_grid_components, null_risk)
from .sampling import MODES


def build_grid(n: int, nu: float) -> tuple:
    """Subsample-size grid {0, k0, 2*k0, ...} capped at n * (1 - 1/ln n).

    The base step is k0 = floor(n ** nu).
    """
    if n < 3:
        raise InvalidParameterError("grid construction needs n >= 3")
    if not 0.0 < nu < 1.0:
        raise InvalidParameterError("nu must be in (0, 1)")
    k0 = math.floor(n**nu)
    if k0 < 1:
        raise InvalidParameterError("grid step floor(n ** nu) is zero")
    cap = n * (1.0 - 1.0 / math.log(n))
    last = math.floor(cap / k0)
    return tuple([0] + [j * k0 for j in range(1, last + 1)])


def select_k(column) -> int:
    """Smallest-risk k from (k, value-or-None) pairs; ties pick smaller k."""
    best_k = None
    best_v = None
    for k, v in column:
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        if best_v is None or v < best_v:
            best_v = v
            best_k = k
    if best_k is None:
        raise TuningFailedError("no grid row has a usable risk estimate")
    return best_k


@dataclass(frozen=True)
class MSelection:
    """Chosen ensemble size plus flags about how the rule resolved."""

    m: int
    rule: str
    fallback: bool = False
    clipped: bool = False


def _tolerance_floor(delta: float, n: int) -> float:
    if delta < 0:
        raise InvalidParameterError("delta must be nonnegative")
    if n < 1:
        raise InvalidParameterError("n must be positive")
    return max(delta, n**-0.5)


def select_m_additive(r1: float, r2: float, delta: float, n: int) -> MSelection:
    """Smallest m whose absolute excess risk 2(r1 - r2)/m is within tolerance."""
    diff = r1 - r2
    if diff <= 0:
        return MSelection(m=1, rule="additive")
    m = math.ceil(2.0 * diff / _tolerance_floor(delta, n))
    return MSelection(m=max(1, m), rule="additive")


def select_m_multiplicative(r1: float, r2: float, delta: float, n: int) -> MSelection:
    """Smallest m whose excess risk relative to the limit 2*r2 - r1 is within
    tolerance; falls back to the additive rule when the limit is numerically
    zero."""
    limit = 2.0 * r2 - r1
    if limit <= 1e-12 * max(1.0, r1):
        base = select_m_additive(r1, r2, delta, n)
        return MSelection(m=base.m, rule="multiplicative", fallback=True)
    diff = r1 - r2
    if diff <= 0:
        return MSelection(m=1, rule="multiplicative")
    m = math.ceil((2.0 / _tolerance_floor(delta, n)) * diff / limit)
    return MSelection(m=max(1, m), rule="multiplicative")


def select_m_budget(r1: float, r2: float, delta: float, n: int,
                    m_max: int) -> MSelection:
    """Additive rule measured against the best affordable ensemble (size
    m_max) instead of the infinite limit, clipped into [1, m_max]."""
    if m_max < 1:
        raise InvalidParameterError("m_max must be at least 1")
    diff = r1 - r2
    if diff <= 0:
        return MSelection(m=1, rule="budget")
    gap_at_cap = 2.0 * diff / m_max
    m = math.ceil(2.0 * diff / (_tolerance_floor(delta, n) + gap_at_cap))
    clipped = m > m_max
    return MSelection(m=min(max(1, m), m_max), rule="budget", clipped=clipped)


@dataclass(frozen=True)
class BagVerdict:
    """Whether ensembling is worth it relative to subsampling alone.

    Ensembling is indicated when even the zero predictor beats the best
    single subsampled predictor, or when the estimated ensembling gain
    exceeds zeta times the subsampling gain.
    """

    bag: bool
    ensembling_gain: float
    subsampling_gain: float
    zeta: float


def should_bag(null_risk_value: float, best_r1: float, best_rmmax: float,
               zeta: float) -> BagVerdict:
    if not zeta > 0:
        raise InvalidParameterError("zeta must be positive")
    ensembling_gain = best_r1 - best_rmmax
    subsampling_gain = null_risk_value - best_r1
    bag = (null_risk_value < best_r1) or (ensembling_gain > zeta * subsampling_gain)
    return BagVerdict(bag=bag, ensembling_gain=ensembling_gain,
                      subsampling_gain=subsampling_gain, zeta=zeta)


@dataclass(frozen=True)
class EcvConfig:
    """Tuner settings.

    ``m_max`` switches selection to the budget rule and caps the ensemble
    size; otherwise ``selection`` picks the additive or multiplicative rule
    against the infinite-ensemble limit.  ``zeta``, when set, gates whether
    to ensemble at all.  ``normalize`` divides the surface by the null risk
    before selection so that delta acts on a scale-free surface.
    """

    nu: float = 0.4
    m0: int = 10
    delta: float = 0.05
    centering: CenteringSpec = field(default_factory=CenteringSpec.avg)
    mode: str = "subagging"
    m_max: Optional[int] = None
    zeta: Optional[float] = None
    selection: str = "additive"
    seed: int = 0
    normalize: bool = False

    def __post_init__(self):
        if not 0.0 < self.nu < 1.0:
            raise InvalidParameterError("nu must be in (0, 1)")
        if self.m0 < 2:
            raise InvalidParameterError("m0 must be at least 2")
        if self.delta < 0:
            raise InvalidParameterError("delta must be nonnegative")
        if self.mode not in MODES:
            raise InvalidParameterError(f"mode must be one of {MODES}")
        if self.selection not in ("additive", "multiplicative"):
            raise InvalidParameterError(
                "selection must be 'additive' or 'multiplicative'"
            )
        if self.m_max is not None and self.m_max < 1:
            raise InvalidParameterError("m_max must be at least 1")
        if self.zeta is not None and not self.zeta > 0:
            raise InvalidParameterError("zeta must be positive")

    def to_json_dict(self) -> dict:
        return {
            "nu": self.nu,
            "m0": self.m0,
            "delta": self.delta,
            "centering": self.centering.method,
            "mom_a": self.centering.mom_a,
            "mode": self.mode,
            "m_max": self.m_max,
            "zeta": self.zeta,
            "selection": self.selection,
            "seed": self.seed,
            "normalize": self.normalize,
        }

    @staticmethod
    def from_json_dict(block: dict) -> "EcvConfig":
        allowed = {"nu", "m0", "delta", "centering", "mom_a", "mode", "m_max",
                   "zeta", "selection", "seed", "normalize"}
        unknown = set(block) - allowed
        if unknown:
            raise InvalidParameterError(f"unknown tuner keys: {sorted(unknown)}")
        kwargs = dict(block)
        method = kwargs.pop("centering", "avg")
        mom_a = kwargs.pop("mom_a", 1.0)
        return EcvConfig(centering=CenteringSpec(method=method, mom_a=mom_a),
                         **kwargs)


@dataclass(frozen=True)
class TuneResult:
    """Outcome of one tuning run.

    ``ensemble`` is None when the zero predictor was selected.  ``surface``
    is the estimated risk surface for this tuner, or the held-out validation
    table for the cross-validation baselines.
    """

    method: str
    k_hat: int
    m_hat: int
    estimated_risk_at_selection: float
    surface: object
    ensemble: Optional[FittedEnsemble]
    grid: tuple
    n_base_fits: int
    to_bag: Optional[BagVerdict] = None
    budget_clipped: bool = False
    selection_fallback: bool = False
    selection_rule: str = "additive"
    tune_seconds: float = 0.0

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.ensemble is None:
            return np.zeros(x.shape[0], dtype=np.float64)
        return predict_ensemble(self.ensemble, x)

    def trace_dict(self) -> dict:
        """Selection trace with deterministic content (no wall-clock times)."""
        out = {
            "method": self.method,
            "k_hat": self.k_hat,
            "m_hat": self.m_hat,
            "estimated_risk_at_selection": self.estimated_risk_at_selection,
            "selection_rule": self.selection_rule,
            "budget_clipped": self.budget_clipped,
            "selection_fallback": self.selection_fallback,
            "grid": list(self.grid),
            "n_base_fits": self.n_base_fits,
            "predictor_is_null": self.ensemble is None,
        }
        if self.to_bag is None:
            out["to_bag"] = None
        else:
            out["to_bag"] = {
                "bag": self.to_bag.bag,
                "ensembling_gain": self.to_bag.ensembling_gain,
                "subsampling_gain": self.to_bag.subsampling_gain,
                "zeta": self.to_bag.zeta,
            }
        return out


def _null_result(surface, grid, n_fits, rule, elapsed, verdict=None) -> TuneResult:
    return TuneResult(method="ecv", k_hat=0, m_hat=1,
                      estimated_risk_at_selection=surface.null_risk,
                      surface=surface, ensemble=None, grid=grid,
                      n_base_fits=n_fits, to_bag=verdict,
                      selection_rule=rule, tune_seconds=elapsed)


def ecv_tune(data: Dataset, spec: PredictorSpec, cfg: EcvConfig,
             threads: Optional[int] = None) -> TuneResult:
    """Tune (m, k) on one dataset and return the fitted choice."""
    t0 = time.perf_counter()
    grid = build_grid(data.n, cfg.nu)
    components, ensembles = fit_grid_components(
        data, spec, grid, cfg.m0, cfg.mode, cfg.centering, cfg.seed,
        threads=threads, keep_ensembles=True)
    surface = RiskSurface(grid=grid, null_risk=null_risk(data),
                          components=components, m0=cfg.m0, mode=cfg.mode)
    n_fits = cfg.m0 * sum(1 for k in grid if k > 0)

    norm = 1.0
    if cfg.normalize:
        if surface.null_risk <= 0:
            raise InvalidParameterError(
                "cannot normalize by a zero null risk"
            )
        norm = surface.null_risk

    target_m = cfg.m_max if cfg.m_max is not None else INFINITE
    if cfg.m_max is not None:
        rule = "budget"
    else:
        rule = cfg.selection

    present = [(k, rc) for k, rc in components.items() if rc is not None]

    verdict = None
    if cfg.zeta is not None:
        if not present:
            raise TuningFailedError("no grid row has a usable risk estimate")
        best_r1 = min(rc.r1 for _, rc in present)
        best_rmmax = min(extrapolate(rc, target_m) for _, rc in present)
        verdict = should_bag(surface.null_risk / norm, best_r1 / norm,
                             best_rmmax / norm, cfg.zeta)
        if not verdict.bag:
            # no ensembling: keep the best single subsampled predictor
            k1 = select_k([(k, rc.r1) for k, rc in sorted(present, key=lambda kv: kv[0])])
            rc1 = components[k1]
            if surface.null_risk <= rc1.r1:
                return _null_result(surface, grid, n_fits, rule,
                                    time.perf_counter() - t0, verdict)
            single = ensemble_prefix(ensembles[k1], 1)
            return TuneResult(method="ecv", k_hat=k1, m_hat=1,
                              estimated_risk_at_selection=rc1.r1,
                              surface=surface, ensemble=single, grid=grid,
                              n_base_fits=n_fits, to_bag=verdict,
                              selection_rule=rule,
                              tune_seconds=time.perf_counter() - t0)

    column = [(k, None if v is None else v / norm)
              for k, v in surface.column(target_m)]
    k_hat = select_k(column)
    if k_hat == 0:
        return _null_result(surface, grid, n_fits, rule,
                            time.perf_counter() - t0, verdict)

    rc = components[k_hat]
    r1n, r2n = rc.r1 / norm, rc.r2 / norm
    if cfg.m_max is not None:
        sel = select_m_budget(r1n, r2n, cfg.delta, data.n, cfg.m_max)
    elif cfg.selection == "multiplicative":
        sel = select_m_multiplicative(r1n, r2n, cfg.delta, data.n)
    else:
        sel = select_m_additive(r1n, r2n, cfg.delta, data.n)

    base = ensembles[k_hat]
    if sel.m > base.m:
        ensemble = extend_ensemble(base, data, sel.m - base.m, cfg.seed)
        n_fits += sel.m - base.m
    else:
        ensemble = ensemble_prefix(base, sel.m)

    return TuneResult(method="ecv", k_hat=k_hat, m_hat=sel.m,
                      estimated_risk_at_selection=extrapolate(rc, sel.m),
                      surface=surface, ensemble=ensemble, grid=grid,
                      n_base_fits=n_fits, to_bag=verdict,
                      budget_clipped=sel.clipped,
                      selection_fallback=sel.fallback,
                      selection_rule=sel.rule,
                      tune_seconds=time.perf_counter() - t0)


def tune_feature_fraction(data: Dataset, spec: PredictorSpec, cfg: EcvConfig,
                          fractions, threads: Optional[int] = None):
    """Two-stage recipe for trees: pick the per-node feature fraction first.

    Stage one holds k at the top of the grid and compares the extrapolated
    risk (at m_max when budgeted, else the limit) across candidate
    fractions; stage two reruns the tuner at the winning fraction.  Returns
    (winning fraction, stage-one table, stage-two TuneResult).
    """
    if spec.kind != "tree":
        raise InvalidParameterError("feature-fraction tuning applies to trees")
    fractions = [float(f) for f in fractions]
    if not fractions or any(not 0 < f <= 1 for f in fractions):
        raise InvalidParameterError("fractions must lie in (0, 1]")
    grid = build_grid(data.n, cfg.nu)
    k_fix = max(grid)
    if k_fix == 0:
        raise TuningFailedError("grid has no positive subsample size")
    target_m = cfg.m_max if cfg.m_max is not None else INFINITE

    table = []
    for frac in fractions:
        cand = PredictorSpec.tree(min_node_size=spec.min_node_size,
                                  feature_fraction=frac,
                                  max_depth=spec.max_depth)
        comps, _ = fit_grid_components(
            data, cand, (0, k_fix), cfg.m0, cfg.mode, cfg.centering,
            cfg.seed, threads=threads)
        rc = comps[k_fix]
        est = None if rc is None else extrapolate(rc, target_m)
        table.append((frac, est))

    usable = [(f, e) for f, e in table if e is not None]
    if not usable:
        raise TuningFailedError("no candidate fraction yielded an estimate")
    best_fraction = min(usable, key=lambda fe: (fe[1], fe[0]))[0]
    final_spec = PredictorSpec.tree(min_node_size=spec.min_node_size,
                                    feature_fraction=best_fraction,
                                    max_depth=spec.max_depth)
    result = ecv_tune(data, final_spec, cfg, threads=threads)
    return best_fraction, table, result

"""Tuning randomized ensembles by out-of-bag risk extrapolation."""

from .data import (Dataset, SyntheticSpec, ar1_covariance, load_csv, nmse,
                   signal_beta, simulate, train_test_split, write_csv)
from .errors import (DataFormatError, EcvError, InvalidParameterError,
                     NumericError, OobExhaustedError, TuningFailedError)
from .predictors import (FittedEnsemble, PredictorSpec, ensemble_prefix,
                         extend_ensemble, fit_base, fit_ensemble, predict_base,
                         predict_ensemble)
from .risk import (INFINITE, CenteringSpec, RiskComponents, RiskSurface,
                   center, decomposition_oracle, estimate_components,
                   extrapolate, fit_grid_components, mom_block_count,
                   null_risk, oob_squared_errors, risk_surface)
from .sampling import (OverlapSummary, SampleIndices, draw_ensemble_indices,
                       draw_indices, overlap_stats, pair_union_oob)
from .streams import derive_seed, substream
from .tuning import (BagVerdict, EcvConfig, MSelection, TuneResult, build_grid,
                     ecv_tune, select_k, select_m_additive, select_m_budget,
                     select_m_multiplicative, should_bag, tune_feature_fraction)
from .baselines import (BaselineSpec, ComparisonReport, CvErrorTable,
                        MethodRow, compare, kfold_cv_tune, split_cv_tune)

__version__ = "0.1.0"

import math

import numpy as np
import pytest

import ecv
from ecv.baselines import _prefix_mean_errors
from ecv.errors import InvalidParameterError, TuningFailedError
from ecv.sampling import draw_indices
from ecv.streams import derive_seed, substream


def _data(n=60, p=5, seed=0, model="quad"):
    return ecv.simulate(ecv.SyntheticSpec(model, n=n, p=p, seed=seed))


# ============================================================
# specs and tables
# ============================================================


def test_baseline_spec_validation():
    ok = ecv.BaselineSpec("sample-split", m_max=5, grid=(0, 10))
    assert ok.alpha == pytest.approx(5.0 / 6.0) and ok.folds == 5
    with pytest.raises(InvalidParameterError):
        ecv.BaselineSpec("loocv", m_max=5, grid=(0, 10))
    with pytest.raises(InvalidParameterError):
        ecv.BaselineSpec("kfold", m_max=0, grid=(0, 10))
    with pytest.raises(InvalidParameterError):
        ecv.BaselineSpec("kfold", m_max=5, grid=(0, 10), alpha=1.0)
    with pytest.raises(InvalidParameterError):
        ecv.BaselineSpec("kfold", m_max=5, grid=(0, 10), folds=1)
    for grid in [(), (10, 0), (0, 10, 10), (-5, 10)]:
        with pytest.raises(InvalidParameterError):
            ecv.BaselineSpec("kfold", m_max=5, grid=grid)


def test_error_table_lookup_and_ties():
    errors = np.array([[3.0, 1.0, 1.0],
                       [1.0, 2.0, 5.0]])
    table = ecv.CvErrorTable(grid=(0, 10, 20), m_max=2, errors=errors)
    assert table.value(1, 10) == 1.0
    assert table.value(2, 0) == 1.0
    # the 1.0 tie resolves to the smallest m, then the smallest k
    assert table.best() == (1, 10)
    with pytest.raises(InvalidParameterError):
        table.value(3, 10)
    with pytest.raises(InvalidParameterError):
        table.value(1, 15)


def test_error_table_all_missing():
    table = ecv.CvErrorTable(grid=(0, 10), m_max=2,
                             errors=np.full((2, 2), np.nan))
    with pytest.raises(TuningFailedError):
        table.best()


def test_prefix_mean_errors_by_hand():
    preds = np.array([[1.0, 3.0],
                      [3.0, 5.0],
                      [2.0, 1.0]])
    y = np.array([2.0, 2.0])
    got = _prefix_mean_errors(preds, y)
    want = []
    for m in (1, 2, 3):
        avg = preds[:m].mean(axis=0)
        want.append(np.mean((avg - y) ** 2))
    assert np.allclose(got, want, atol=1e-15)


# ============================================================
# sample-split CV
# ============================================================


def test_split_cv_recomputed_from_scratch():
    data = _data(n=40, seed=1)
    spec = ecv.PredictorSpec.ridge(0.1)
    bspec = ecv.BaselineSpec("sample-split", m_max=3, grid=(0, 10, 20), seed=4)
    result = ecv.split_cv_tune(data, spec, bspec, mode="subagging")

    n_part = math.ceil(bspec.alpha * 40)
    perm = substream(4, "split-cv").permutation(40)
    part_rows = np.sort(perm[:n_part])
    val_rows = np.sort(perm[n_part:])
    part = data.subset(part_rows)
    y_val, x_val = data.y[val_rows], data.x[val_rows]

    want = np.empty((3, 3))
    want[:, 0] = np.mean(y_val**2)
    for j, k in enumerate((10, 20), start=1):
        preds = np.empty((3, val_rows.size))
        for ell in range(1, 4):
            idx = draw_indices(n_part, k, "subagging",
                               substream(4, "part", k, ell))
            member = ecv.fit_base(spec, part, idx)
            preds[ell - 1] = ecv.predict_base(member, x_val)
        want[:, j] = _prefix_mean_errors(preds, y_val)

    assert np.allclose(result.surface.errors, want, atol=1e-12)
    flat_min = want[~np.isnan(want)].min()
    assert result.estimated_risk_at_selection == pytest.approx(flat_min)
    assert result.method == "sample-split"
    assert result.selection_rule == "cv-argmin"


def test_split_cv_refits_on_full_data():
    data = _data(n=60, seed=2)
    spec = ecv.PredictorSpec.tree()
    bspec = ecv.BaselineSpec("sample-split", m_max=4, grid=(0, 15, 30), seed=9)
    result = ecv.split_cv_tune(data, spec, bspec, mode="subagging")
    assert result.k_hat in (15, 30)
    assert result.ensemble.k == result.k_hat
    assert result.ensemble.m == result.m_hat
    direct = ecv.fit_ensemble(spec, data, result.k_hat, result.m_hat,
                              "subagging", derive_seed(9, "refit"))
    assert np.allclose(result.predict(data.x),
                       ecv.predict_ensemble(direct, data.x), atol=1e-12)
    assert result.n_base_fits == 4 * 2


def test_split_cv_marks_oversized_k_missing():
    data = _data(n=24, seed=3)
    # alpha = 5/6 keeps 20 rows, so k = 22 cannot be fitted honestly
    bspec = ecv.BaselineSpec("sample-split", m_max=2, grid=(0, 10, 22), seed=1)
    result = ecv.split_cv_tune(data, ecv.PredictorSpec.ridge(0.1), bspec,
                               mode="subagging")
    assert np.isnan(result.surface.errors[:, 2]).all()
    assert not np.isnan(result.surface.errors[:, :2]).any()
    assert result.k_hat in (0, 10)
    assert result.n_base_fits == 2 * 1  # only k=10 was evaluated


def test_split_cv_degenerate_split_rejected():
    data = _data(n=10, seed=4)
    bspec = ecv.BaselineSpec("sample-split", m_max=2, grid=(0, 4), seed=0,
                             alpha=0.99)
    with pytest.raises(InvalidParameterError):
        ecv.split_cv_tune(data, ecv.PredictorSpec.null(), bspec, "subagging")


def test_split_cv_wrong_method_rejected():
    data = _data(n=30, seed=5)
    bspec = ecv.BaselineSpec("kfold", m_max=2, grid=(0, 10), seed=0)
    with pytest.raises(InvalidParameterError):
        ecv.split_cv_tune(data, ecv.PredictorSpec.null(), bspec, "subagging")
    with pytest.raises(InvalidParameterError):
        ecv.split_cv_tune(data, ecv.PredictorSpec.null(),
                          ecv.BaselineSpec("sample-split", m_max=2,
                                           grid=(0, 10)), "bootstrap")


# ============================================================
# k-fold CV
# ============================================================


def test_kfold_cv_recomputed_from_scratch():
    data = _data(n=30, seed=6)
    spec = ecv.PredictorSpec.ridge(0.2)
    bspec = ecv.BaselineSpec("kfold", m_max=2, grid=(0, 6, 12), seed=7,
                             folds=3)
    result = ecv.kfold_cv_tune(data, spec, bspec, mode="subagging")

    perm = substream(7, "kfold-cv").permutation(30)
    folds = np.array_split(perm, 3)
    want = np.zeros((2, 3))
    for f, fold in enumerate(folds):
        val_rows = np.sort(fold)
        part_rows = np.sort(np.setdiff1d(perm, fold, assume_unique=True))
        part = data.subset(part_rows)
        y_val, x_val = data.y[val_rows], data.x[val_rows]
        want[:, 0] += np.mean(y_val**2) / 3
        for j, k in enumerate((6, 12), start=1):
            preds = np.empty((2, val_rows.size))
            for ell in range(1, 3):
                idx = draw_indices(part_rows.size, k, "subagging",
                                   substream(7, "fold", f, k, ell))
                member = ecv.fit_base(spec, part, idx)
                preds[ell - 1] = ecv.predict_base(member, x_val)
            want[:, j] += _prefix_mean_errors(preds, y_val) / 3

    assert np.allclose(result.surface.errors, want, atol=1e-12)
    assert result.method == "kfold"
    assert result.n_base_fits == 2 * 2 * 3  # m_max * positive ks * folds


def test_kfold_folds_partition_rows():
    perm = substream(7, "kfold-cv").permutation(30)
    folds = np.array_split(perm, 3)
    assert sorted(np.concatenate(folds).tolist()) == list(range(30))
    assert {len(f) for f in folds} == {10}


def test_kfold_marks_k_missing_when_any_fold_is_too_small():
    data = _data(n=31, seed=8)
    # folds of 11/10/10 leave parts of 20/21/21: k = 21 fails on one fold
    bspec = ecv.BaselineSpec("kfold", m_max=2, grid=(0, 10, 21), seed=2,
                             folds=3)
    result = ecv.kfold_cv_tune(data, ecv.PredictorSpec.ridge(0.1), bspec,
                               mode="subagging")
    assert np.isnan(result.surface.errors[:, 2]).all()
    assert not np.isnan(result.surface.errors[:, :2]).any()
    # fits that did happen before the miss are still counted: 2 folds ran k=21
    assert result.n_base_fits == 2 * 3 + 2 * 2


def test_kfold_needs_enough_rows():
    data = _data(n=8, seed=9)
    bspec = ecv.BaselineSpec("kfold", m_max=2, grid=(0, 3), seed=0, folds=5)
    with pytest.raises(InvalidParameterError):
        ecv.kfold_cv_tune(data, ecv.PredictorSpec.null(), bspec, "subagging")


def test_cv_threads_do_not_change_results():
    data = _data(n=60, seed=10)
    spec = ecv.PredictorSpec.tree()
    for runner, bspec in [
        (ecv.split_cv_tune,
         ecv.BaselineSpec("sample-split", m_max=3, grid=(0, 10, 20), seed=3)),
        (ecv.kfold_cv_tune,
         ecv.BaselineSpec("kfold", m_max=3, grid=(0, 10, 20), seed=3, folds=3)),
    ]:
        seq = runner(data, spec, bspec, "subagging", threads=1)
        par = runner(data, spec, bspec, "subagging", threads=4)
        assert np.allclose(seq.surface.errors, par.surface.errors,
                           equal_nan=True)
        assert (seq.m_hat, seq.k_hat) == (par.m_hat, par.k_hat)


def test_cv_bagging_mode_draws_with_replacement():
    data = _data(n=40, seed=11)
    bspec = ecv.BaselineSpec("sample-split", m_max=2, grid=(0, 30), seed=5)
    result = ecv.split_cv_tune(data, ecv.PredictorSpec.ridge(0.1), bspec,
                               mode="bagging")
    assert np.isfinite(result.surface.errors).all()


# ============================================================
# comparison harness
# ============================================================


@pytest.fixture(scope="module")
def comparison():
    train = _data(n=150, p=5, seed=12)
    test = _data(n=100, p=5, seed=13)
    cfg = ecv.EcvConfig(nu=0.5, m0=3, delta=0.05, m_max=10, seed=21)
    grid = ecv.build_grid(150, 0.5)
    specs = [
        ecv.BaselineSpec("sample-split", m_max=10, grid=grid, seed=21),
        ecv.BaselineSpec("kfold", m_max=10, grid=grid, seed=21, folds=3),
    ]
    report = ecv.compare(train, test, ecv.PredictorSpec.tree(), cfg, specs)
    return train, test, report


def test_compare_reports_all_methods(comparison):
    _, _, report = comparison
    assert [row.method for row in report.rows] == ["ecv", "sample-split",
                                                   "kfold"]
    assert report.metric == "nmse"
    assert report.grid == ecv.build_grid(150, 0.5)


def test_compare_rows_are_consistent(comparison):
    _, test, report = comparison
    for row in report.rows:
        assert row.test_error >= 0
        assert row.suboptimality == pytest.approx(
            row.test_error - report.best_grid_error)
        assert row.base_fits > 0
        assert row.tune_seconds > 0
        assert row.k_hat in report.grid
        assert 1 <= row.m_hat <= 10


def test_compare_nmse_normalizes_by_test_variance():
    train = _data(n=100, p=5, seed=14)
    test = _data(n=80, p=5, seed=15)
    cfg = ecv.EcvConfig(nu=0.5, m0=2, m_max=4, seed=3)
    grid = ecv.build_grid(100, 0.5)
    specs = [ecv.BaselineSpec("sample-split", m_max=4, grid=grid, seed=3)]
    nm = ecv.compare(train, test, ecv.PredictorSpec.ridge(0.1), cfg, specs)
    raw = ecv.compare(train, test, ecv.PredictorSpec.ridge(0.1), cfg, specs,
                      metric="mse")
    denom = float(np.mean((test.y - test.y.mean()) ** 2))
    for a, b in zip(nm.rows, raw.rows):
        assert a.test_error == pytest.approx(b.test_error / denom)


def test_compare_requires_budget_and_matching_grids():
    train = _data(n=100, p=5, seed=16)
    test = _data(n=50, p=5, seed=17)
    grid = ecv.build_grid(100, 0.5)
    no_budget = ecv.EcvConfig(nu=0.5, m0=2, seed=0)
    with pytest.raises(InvalidParameterError):
        ecv.compare(train, test, ecv.PredictorSpec.null(), no_budget, [])
    cfg = ecv.EcvConfig(nu=0.5, m0=2, m_max=4, seed=0)
    wrong_grid = ecv.BaselineSpec("kfold", m_max=4, grid=(0, 11), seed=0)
    with pytest.raises(InvalidParameterError):
        ecv.compare(train, test, ecv.PredictorSpec.null(), cfg, [wrong_grid])
    wrong_budget = ecv.BaselineSpec("kfold", m_max=9, grid=grid, seed=0)
    with pytest.raises(InvalidParameterError):
        ecv.compare(train, test, ecv.PredictorSpec.null(), cfg, [wrong_budget])
    with pytest.raises(InvalidParameterError):
        ecv.compare(train, test, ecv.PredictorSpec.null(), cfg, [],
                    metric="mae")


def test_compare_rejects_constant_test_response():
    train = _data(n=100, p=5, seed=18)
    test = ecv.Dataset(np.random.default_rng(1).standard_normal((20, 5)),
                       np.ones(20))
    cfg = ecv.EcvConfig(nu=0.5, m0=2, m_max=4, seed=0)
    with pytest.raises(InvalidParameterError):
        ecv.compare(train, test, ecv.PredictorSpec.null(), cfg, [])

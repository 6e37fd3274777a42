import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ecv
from ecv.errors import (DataFormatError, InvalidParameterError, NumericError)

# ============================================================
# ar1_covariance
# ============================================================


def test_ar1_rho_zero_is_identity():
    assert np.array_equal(ecv.ar1_covariance(6, 0.0), np.eye(6))


def test_ar1_small_entries():
    got = ecv.ar1_covariance(2, 0.5)
    assert np.array_equal(got, np.array([[1.0, 0.5], [0.5, 1.0]]))
    # corner entry at lag 3
    assert ecv.ar1_covariance(4, 0.5)[0, 3] == 0.125


@pytest.mark.parametrize("p", [1, 3, 16, 64])
@pytest.mark.parametrize("rho", [-0.9, -0.5, 0.0, 0.5, 0.9])
def test_ar1_symmetric_unit_diagonal(p, rho):
    got = ecv.ar1_covariance(p, rho)
    assert np.array_equal(got, got.T)
    assert np.array_equal(np.diag(got), np.ones(p))


@pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
def test_ar1_rejects_nonstationary_rho(rho):
    with pytest.raises(InvalidParameterError):
        ecv.ar1_covariance(3, rho)


def test_ar1_rejects_bad_p():
    with pytest.raises(InvalidParameterError):
        ecv.ar1_covariance(0, 0.5)


# ============================================================
# signal_beta
# ============================================================


def test_signal_beta_diagonal_spectrum():
    beta = ecv.signal_beta(np.diag([5.0, 4.0, 3.0, 2.0, 1.0, 0.5]))
    assert np.allclose(beta, [0.2, 0.2, 0.2, 0.2, 0.2, 0.0], atol=1e-12)


def test_signal_beta_identity_tie_break():
    beta = ecv.signal_beta(np.eye(5))
    assert np.allclose(beta, [0.2] * 5, atol=1e-12)


def _oracle_beta(sigma_mat):
    # independent path: general (non-symmetric) eigensolver, manual ordering
    evals, evecs = np.linalg.eig(sigma_mat)
    evals = evals.real
    evecs = evecs.real
    order = np.argsort(-evals, kind="stable")[:5]
    vecs = []
    for j in order:
        v = evecs[:, j] / np.linalg.norm(evecs[:, j])
        nz = np.nonzero(np.abs(v) > 1e-12 * np.max(np.abs(v)))[0]
        if v[nz[0]] < 0:
            v = -v
        vecs.append(v)
    return np.mean(vecs, axis=0)


def test_signal_beta_matches_independent_eigendecomposition():
    sigma_mat = ecv.ar1_covariance(10, 0.6)
    got = ecv.signal_beta(sigma_mat)
    want = _oracle_beta(sigma_mat)
    assert np.allclose(got, want, atol=1e-8)
    assert abs(np.linalg.norm(got) - np.linalg.norm(want)) < 1e-8


def test_signal_beta_needs_five_dimensions():
    with pytest.raises(InvalidParameterError):
        ecv.signal_beta(np.eye(4))


# ============================================================
# simulate
# ============================================================


def test_simulate_linear_noiseless_is_exact_signal():
    spec = ecv.SyntheticSpec("linear", n=50, p=8, rho_ar=0.5, sigma=0.0, seed=3)
    data = ecv.simulate(spec)
    beta = ecv.signal_beta(ecv.ar1_covariance(8, 0.5))
    assert np.allclose(data.y, data.x @ beta, atol=1e-12)


def test_simulate_quad_noiseless_identity():
    spec = ecv.SyntheticSpec("quad", n=50, p=8, rho_ar=0.5, sigma=0.0, seed=3)
    data = ecv.simulate(spec)
    sigma_mat = ecv.ar1_covariance(8, 0.5)
    s = data.x @ ecv.signal_beta(sigma_mat)
    want = s + (s * s - np.trace(sigma_mat) / 8)
    assert np.allclose(data.y, want, atol=1e-12)


def test_simulate_tanh_noiseless_identity():
    spec = ecv.SyntheticSpec("tanh", n=50, p=8, rho_ar=0.5, sigma=0.0, seed=3)
    data = ecv.simulate(spec)
    s = data.x @ ecv.signal_beta(ecv.ar1_covariance(8, 0.5))
    assert np.allclose(data.y, np.tanh(s), atol=1e-12)


def test_simulate_deterministic_in_seed():
    spec = ecv.SyntheticSpec("quad", n=30, p=6, seed=11)
    a, b = ecv.simulate(spec), ecv.simulate(spec)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    c = ecv.simulate(ecv.SyntheticSpec("quad", n=30, p=6, seed=12))
    assert not np.array_equal(a.y, c.y)


def test_simulate_noise_variance_monte_carlo():
    spec = ecv.SyntheticSpec("linear", n=100_000, p=10, rho_ar=0.5, sigma=0.5,
                             seed=7)
    data = ecv.simulate(spec)
    beta = ecv.signal_beta(ecv.ar1_covariance(10, 0.5))
    resid = data.y - data.x @ beta
    assert 0.24 <= float(np.var(resid)) <= 0.26


def test_synthetic_spec_validation_and_json():
    with pytest.raises(InvalidParameterError):
        ecv.SyntheticSpec("cubic", n=10, p=5)
    with pytest.raises(InvalidParameterError):
        ecv.SyntheticSpec("linear", n=10, p=5, rho_ar=1.0)
    with pytest.raises(InvalidParameterError):
        ecv.SyntheticSpec("linear", n=10, p=5, sigma=-0.1)
    spec = ecv.SyntheticSpec("quad", n=10, p=5, rho_ar=0.3, sigma=0.2, seed=4)
    assert ecv.SyntheticSpec.from_json_dict(spec.to_json_dict()) == spec
    with pytest.raises(InvalidParameterError):
        ecv.SyntheticSpec.from_json_dict({"model": "quad", "n": 5, "p": 5,
                                          "extra": 1})


# ============================================================
# Dataset and CSV I/O
# ============================================================


def test_dataset_rejects_nonfinite_and_shape_mismatch():
    with pytest.raises(InvalidParameterError):
        ecv.Dataset(np.array([[1.0], [np.nan]]), np.array([1.0, 2.0]))
    with pytest.raises(InvalidParameterError):
        ecv.Dataset(np.ones((3, 2)), np.ones(4))


def test_load_csv_small(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    data = ecv.load_csv(str(path), "y")
    assert data.n == 3 and data.p == 2
    assert np.array_equal(data.y, [3.0, 6.0, 9.0])
    assert np.array_equal(data.x[2], [7.0, 8.0])


def test_load_csv_response_by_index_no_header(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,2,3\n4,5,6\n")
    data = ecv.load_csv(str(path), 0, has_header=False)
    assert np.array_equal(data.y, [1.0, 4.0])
    assert np.array_equal(data.x, [[2.0, 3.0], [5.0, 6.0]])


def test_load_csv_parse_error_names_row_and_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,y\n1,2,3\n4,NA,6\n")
    with pytest.raises(DataFormatError, match=r"row 2, column 2"):
        ecv.load_csv(str(path), "y")


def test_load_csv_missing_file_and_missing_response(tmp_path):
    with pytest.raises(DataFormatError):
        ecv.load_csv(str(tmp_path / "absent.csv"), "y")
    path = tmp_path / "d.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataFormatError):
        ecv.load_csv(str(path), "z")


def test_csv_round_trip_preserves_values(tmp_path):
    data = ecv.simulate(ecv.SyntheticSpec("quad", n=25, p=6, seed=9))
    path = tmp_path / "r.csv"
    ecv.write_csv(data, str(path))
    back = ecv.load_csv(str(path), "y")
    assert np.all(np.abs(back.x - data.x) <= 1e-12)
    assert np.all(np.abs(back.y - data.y) <= 1e-12)


# ============================================================
# train_test_split
# ============================================================


def test_split_even_and_floor_rule():
    data = ecv.simulate(ecv.SyntheticSpec("linear", n=10, p=5, seed=1))
    train, test = ecv.train_test_split(data, 0.5, seed=0)
    assert (train.n, test.n) == (5, 5)
    data3 = ecv.simulate(ecv.SyntheticSpec("linear", n=3, p=5, seed=1))
    train3, test3 = ecv.train_test_split(data3, 0.5, seed=0)
    assert {train3.n, test3.n} == {1, 2}


def test_split_deterministic_and_disjoint():
    data = ecv.simulate(ecv.SyntheticSpec("linear", n=40, p=5, seed=2))
    a_train, a_test = ecv.train_test_split(data, 0.25, seed=5)
    b_train, b_test = ecv.train_test_split(data, 0.25, seed=5)
    assert np.array_equal(a_train.x, b_train.x)
    assert np.array_equal(a_test.y, b_test.y)
    joined = np.sort(np.concatenate([a_train.y, a_test.y]))
    assert np.array_equal(joined, np.sort(data.y))


def test_split_empty_side_rejected():
    data = ecv.simulate(ecv.SyntheticSpec("linear", n=3, p=5, seed=1))
    with pytest.raises(InvalidParameterError):
        ecv.train_test_split(data, 0.2, seed=0)
    with pytest.raises(InvalidParameterError):
        ecv.train_test_split(data, 1.5, seed=0)


# ============================================================
# nmse
# ============================================================


def test_nmse_perfect_and_mean_predictor():
    y = np.array([1.0, 2.0, 4.0, -1.0])
    assert ecv.nmse(y, y) == 0.0
    assert ecv.nmse(np.full(4, y.mean()), y) == pytest.approx(1.0, abs=1e-15)


def test_nmse_zero_predictor():
    y = np.array([1.0, -1.0, 3.0])
    want = np.mean(y**2) / np.mean((y - y.mean()) ** 2)
    assert ecv.nmse(np.zeros(3), y) == pytest.approx(want, rel=1e-15)


def test_nmse_constant_truth_rejected():
    with pytest.raises(NumericError):
        ecv.nmse(np.array([1.0, 2.0]), np.array([3.0, 3.0]))
    with pytest.raises(InvalidParameterError):
        ecv.nmse(np.array([1.0]), np.array([3.0]))


@settings(deadline=None, max_examples=40)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_nmse_shift_invariance(n, seed):
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal(n)
    if np.var(truth) == 0:
        return
    pred = rng.standard_normal(n)
    base = ecv.nmse(pred, truth)
    shifted = ecv.nmse(pred + 2.5, truth + 2.5)
    assert shifted == pytest.approx(base, rel=1e-9, abs=1e-12)

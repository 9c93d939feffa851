"""TrainingSet invariants and lossless CSV / JSON round-trips."""

import numpy as np
import pytest

from prescriptor import InputError, TrainingSet, read_training_csv, read_training_json


def small_set(seed=0, n=7, horizon=3, d_x=2, d_y=1, metadata=None):
    rng = np.random.default_rng(seed)
    return TrainingSet(covariates=rng.normal(size=(n, horizon, d_x)),
                       uncertainties=rng.normal(size=(n, horizon, d_y)),
                       metadata=metadata or {})


def test_dimension_properties():
    ts = small_set(n=5, horizon=4, d_x=3, d_y=2)
    assert ts.n_samples == 5
    assert ts.horizon == 4
    assert ts.d_x == 3
    assert ts.d_y == 2


def test_stage_slices_match_raw_arrays():
    ts = small_set(seed=1)
    for t in range(ts.horizon):
        assert np.array_equal(ts.x(t), ts.covariates[:, t, :])
    for t in range(1, ts.horizon + 1):
        assert np.array_equal(ts.y(t), ts.uncertainties[:, t - 1, :])


def test_stage_bounds_enforced():
    ts = small_set()
    with pytest.raises(InputError):
        ts.x(ts.horizon)
    with pytest.raises(InputError):
        ts.y(0)
    with pytest.raises(InputError):
        ts.y(ts.horizon + 1)


def test_shape_validation():
    good = np.zeros((4, 2, 1))
    with pytest.raises(InputError):
        TrainingSet(covariates=np.zeros((3, 2, 1)), uncertainties=good)
    with pytest.raises(InputError):
        TrainingSet(covariates=np.zeros((4, 3, 1)), uncertainties=good)
    with pytest.raises(InputError):
        TrainingSet(covariates=np.zeros((4, 2)), uncertainties=good)


def test_non_finite_rejected():
    cov = np.zeros((3, 2, 1))
    unc = np.zeros((3, 2, 1))
    unc[1, 0, 0] = np.nan
    with pytest.raises(InputError):
        TrainingSet(covariates=cov, uncertainties=unc)


def test_csv_round_trip(tmp_path):
    ts = small_set(seed=5, metadata={"seed": 5, "problem": "demo"})
    path = tmp_path / "train.csv"
    ts.to_csv(str(path))
    back = read_training_csv(str(path))
    assert np.array_equal(back.covariates, ts.covariates)
    assert np.array_equal(back.uncertainties, ts.uncertainties)
    # CSV headers carry metadata as text; typed values survive via JSON
    assert back.metadata["seed"] == "5"
    assert back.metadata["problem"] == "demo"


def test_csv_rewrite_is_byte_identical(tmp_path):
    ts = small_set(seed=9)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    ts.to_csv(str(p1))
    read_training_csv(str(p1)).to_csv(str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_json_round_trip(tmp_path):
    ts = small_set(seed=7, d_y=2, metadata={"note": "x"})
    path = tmp_path / "train.json"
    ts.to_json(str(path))
    back = read_training_json(str(path))
    assert np.array_equal(back.covariates, ts.covariates)
    assert np.array_equal(back.uncertainties, ts.uncertainties)
    assert back.metadata["note"] == "x"

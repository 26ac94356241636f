import dataclasses

import numpy as np
import pytest

from hubmpc.forecast.enbpi import fit_enbpi


@pytest.fixture(scope="module")
def simple_model():
    rng = np.random.default_rng(0)
    X = rng.uniform(-2, 2, size=(400, 2))
    y = X[:, 0] + 0.3 * rng.normal(size=400)
    return fit_enbpi(X, y, B=12, alpha=0.1, seed=1, nu=0.2, max_rounds=15, min_leaf=10)


def test_constant_target_gives_zero_width():
    X = np.arange(200.0).reshape(-1, 1)
    y = np.full(200, 5.0)
    model = fit_enbpi(X, y, B=12, alpha=0.1, seed=0, max_rounds=5)
    assert np.all(model.residuals == 0.0)
    point, lo, hi = model.predict_interval(X[:10])
    np.testing.assert_array_equal(lo, point)
    np.testing.assert_array_equal(hi, point)


def test_quantile_interpolation_matches_order_statistics(simple_model):
    # 0.9-quantile of {1..10} sits at position 1 + 0.9*(n-1) = 9.1
    crafted = dataclasses.replace(simple_model,
                                  residuals=np.arange(1.0, 11.0))
    assert crafted.half_width() == pytest.approx(9.1)


def test_interval_is_symmetric_ensemble_mean(simple_model):
    X = np.random.default_rng(2).uniform(-2, 2, size=(30, 2))
    point, lo, hi = simple_model.predict_interval(X)
    manual = np.mean([est.predict(X) for est in simple_model.estimators], axis=0)
    np.testing.assert_allclose(point, manual, atol=1e-12)
    w = simple_model.half_width()
    np.testing.assert_allclose(hi - point, np.full(len(X), w), atol=1e-12)
    np.testing.assert_allclose(point - lo, np.full(len(X), w), atol=1e-12)
    assert np.all(lo <= point) and np.all(point <= hi)


def test_width_monotone_in_quantile_level(simple_model):
    widths = [simple_model.half_width(alpha=a) for a in (0.5, 0.3, 0.1, 0.05)]
    assert all(b >= a for a, b in zip(widths, widths[1:]))


def test_every_point_out_of_bag(simple_model):
    assert not simple_model.in_bag.all(axis=0).any()


def test_calibration_appends_scores(simple_model):
    rng = np.random.default_rng(3)
    X_cal = rng.uniform(-2, 2, size=(50, 2))
    y_cal = X_cal[:, 0] + 0.3 * rng.normal(size=50)
    cal = simple_model.calibrated(X_cal, y_cal)
    assert len(cal.residuals) == len(simple_model.residuals) + 50
    assert np.all(cal.residuals >= 0.0)


def test_rejects_small_ensembles():
    with pytest.raises(ValueError):
        fit_enbpi(np.zeros((20, 1)), np.zeros(20), B=5)


def test_never_out_of_bag_raises():
    # with many points and few estimators some index stays in-bag everywhere
    rng = np.random.default_rng(4)
    X = rng.normal(size=(5000, 1))
    y = rng.normal(size=5000)
    with pytest.raises(RuntimeError):
        fit_enbpi(X, y, B=10, seed=0, max_rounds=1)

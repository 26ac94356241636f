"""Ensemble batch prediction intervals (conformal, distribution-free).

Trains B boosted-tree estimators on bootstrap resamples and scores every
training point with the mean of the estimators whose bootstrap excluded it
(the leave-one-out aggregate).  The absolute leave-one-out residuals form the
conformity scores; a symmetric interval is the ensemble-mean prediction plus
or minus their (1 - alpha) empirical quantile (linear interpolation between
order statistics).  The residual set is frozen once calibration completes; no
online updating happens during evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .gbt import GbtModel, fit_gbt

_MAX_RESAMPLE_ATTEMPTS = 50


@dataclass(frozen=True)
class EnbpiModel:
    """Bootstrap ensemble with conformity scores."""

    estimators: tuple[GbtModel, ...]
    in_bag: np.ndarray       # (B, n_train) bootstrap membership
    residuals: np.ndarray    # nonnegative conformity scores
    alpha: float

    def __post_init__(self) -> None:
        if np.any(self.residuals < 0.0):
            raise ValueError("conformity scores must be nonnegative")

    @property
    def n_estimators(self) -> int:
        return len(self.estimators)

    def point(self, X: np.ndarray) -> np.ndarray:
        """Ensemble-mean prediction."""
        preds = np.stack([est.predict(X) for est in self.estimators])
        return preds.mean(axis=0)

    def half_width(self, alpha: float | None = None) -> float:
        a = self.alpha if alpha is None else alpha
        if len(self.residuals) == 0:
            return 0.0
        return float(np.quantile(self.residuals, 1.0 - a, method="linear"))

    def predict_interval(self, X: np.ndarray, alpha: float | None = None):
        """Return (point, lower, upper); the band is symmetric around the point."""
        point = self.point(X)
        w = self.half_width(alpha)
        return point, point - w, point + w

    def calibrated(self, X_cal: np.ndarray, y_cal: np.ndarray) -> "EnbpiModel":
        """Model with out-of-sample absolute residuals appended to the score set."""
        extra = np.abs(np.asarray(y_cal, dtype=float) - self.point(X_cal))
        return replace(self, residuals=np.concatenate([self.residuals, extra]))


def _bootstrap_membership(n: int, B: int, rng: np.random.Generator):
    """Index matrix of B resamples where every point is out-of-bag somewhere."""
    for _ in range(_MAX_RESAMPLE_ATTEMPTS):
        samples = rng.integers(0, n, size=(B, n))
        in_bag = np.zeros((B, n), dtype=bool)
        rows = np.repeat(np.arange(B), n)
        in_bag[rows, samples.ravel()] = True
        if not in_bag.all(axis=0).any():
            return samples, in_bag
    raise RuntimeError(
        f"some training index stayed in-bag for all {B} estimators after "
        f"{_MAX_RESAMPLE_ATTEMPTS} resampling attempts"
    )


def fit_enbpi(X, y, B: int = 30, alpha: float = 0.1, *, seed: int = 0,
              X_val=None, y_val=None, nu: float = 0.1, max_rounds: int = 200,
              patience: int = 10, max_depth: int = 4, min_leaf: int = 20) -> EnbpiModel:
    """Fit the bootstrap ensemble and its leave-one-out conformity scores."""
    if B < 10:
        raise ValueError(f"need at least 10 bootstrap estimators, got {B}")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    rng = np.random.default_rng(seed)
    samples, in_bag = _bootstrap_membership(n, B, rng)
    estimators = []
    preds = np.empty((B, n))
    for b in range(B):
        rows = samples[b]
        est = fit_gbt(X[rows], y[rows], X_val, y_val, nu=nu, max_rounds=max_rounds,
                      patience=patience, max_depth=max_depth, min_leaf=min_leaf)
        estimators.append(est)
        preds[b] = est.predict(X)
    out_counts = (~in_bag).sum(axis=0)
    loo = np.where(~in_bag, preds, 0.0).sum(axis=0) / out_counts
    residuals = np.abs(y - loo)
    return EnbpiModel(estimators=tuple(estimators), in_bag=in_bag,
                      residuals=residuals, alpha=alpha)

"""Streaming mean/variance standardizer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted


class RunningStandardizer(TransformerMixin, BaseEstimator):
    """Standardize features with running moments merged batch by batch.

    Batches are combined with the parallel-variance update, so feeding data
    in any chunking gives the same moments as a single two-pass computation.
    Outputs are clipped to ``[-clip, clip]``.
    """

    def __init__(self, clip: float = 10.0, eps: float = 1e-8):
        self.clip = clip
        self.eps = eps

    def partial_fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if not hasattr(self, "mean_"):
            self.count_ = 0
            self.mean_ = np.zeros(X.shape[1])
            self.m2_ = np.zeros(X.shape[1])
            self.n_features_in_ = X.shape[1]
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        n_b = X.shape[0]
        if n_b == 0:
            return self
        mean_b = X.mean(axis=0)
        m2_b = ((X - mean_b) ** 2).sum(axis=0)
        n = self.count_ + n_b
        delta = mean_b - self.mean_
        self.mean_ = self.mean_ + delta * n_b / n
        self.m2_ = self.m2_ + m2_b + delta**2 * self.count_ * n_b / n
        self.count_ = n
        return self

    def fit(self, X, y=None):
        for attr in ("count_", "mean_", "m2_", "n_features_in_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(X)

    @property
    def var_(self) -> np.ndarray:
        check_is_fitted(self, "mean_")
        return self.m2_ / max(self.count_, 1)

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = np.asarray(X, dtype=float)
        out = (X - self.mean_) / np.sqrt(self.var_ + self.eps)
        return np.clip(out, -self.clip, self.clip)

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return np.asarray(X, dtype=float) * np.sqrt(self.var_ + self.eps) + self.mean_

    def state_arrays(self) -> list[np.ndarray]:
        return [np.array([float(self.count_)]), self.mean_.copy(), self.m2_.copy()]

    def load_arrays(self, arrays) -> "RunningStandardizer":
        count, mean, m2 = arrays
        self.count_ = int(count[0])
        self.mean_ = np.array(mean, dtype=float)
        self.m2_ = np.array(m2, dtype=float)
        self.n_features_in_ = self.mean_.shape[0]
        return self

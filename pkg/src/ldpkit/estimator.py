"""scikit-learn compatible wrapper around the histogram rate-function estimate."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .simulate import DEFAULT_BINS, DEFAULT_MIN_COUNT, empirical_rate_function, ensemble_histogram


class RateFunctionEstimator(BaseEstimator):
    """Estimate ``phi(z) = -eps ln p(z)`` (shifted to min 0) from ensemble samples.

    Parameters
    ----------
    epsilon : float
        Noise scale the samples were generated at.
    bins : int or sequence of int
        Bins per dimension.
    ranges : sequence of (lo, hi) or None
        Histogram span; ``None`` uses the sample range padded by 5%.
        ``partial_fit`` reuses the span fixed by the first call.
    min_count : int
        Bins with fewer counts are not reported.

    Attributes
    ----------
    histogram_ : EnsembleHistogram
    rate_function_ : EmpiricalRateFunction
    n_features_in_ : int
    """

    def __init__(self, epsilon=1.0, bins=DEFAULT_BINS, ranges=None, min_count=DEFAULT_MIN_COUNT):
        self.epsilon = epsilon
        self.bins = bins
        self.ranges = ranges
        self.min_count = min_count

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        self.histogram_ = ensemble_histogram(X, np.nan, bins=self.bins, ranges=self.ranges, epsilon=self.epsilon)
        self.rate_function_ = empirical_rate_function(self.histogram_, self.min_count)
        return self

    def partial_fit(self, X, y=None):
        if not hasattr(self, "histogram_"):
            return self.fit(X)
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        batch = ensemble_histogram(X, np.nan, bins=self.histogram_.edges, epsilon=self.epsilon)
        self.histogram_ = self.histogram_.merge(batch)
        self.rate_function_ = empirical_rate_function(self.histogram_, self.min_count)
        return self

    def predict(self, X):
        """Rate-function estimate at each row of ``X``; NaN outside the reported bins."""
        check_is_fitted(self, "rate_function_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        hist = self.histogram_
        lookup = np.full(hist.counts.shape, np.nan)
        mask = hist.counts >= self.min_count
        lookup[mask] = self.rate_function_.phi
        idx = []
        inside = np.ones(X.shape[0], dtype=bool)
        for i, e in enumerate(hist.edges):
            k = np.searchsorted(e, X[:, i], side="right") - 1
            k[X[:, i] == e[-1]] = e.size - 2
            inside &= (k >= 0) & (k < e.size - 1)
            idx.append(np.clip(k, 0, e.size - 2))
        out = lookup[tuple(idx)]
        out[~inside] = np.nan
        return out


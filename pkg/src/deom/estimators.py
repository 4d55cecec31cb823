"""scikit-learn style wrappers around the bath fitting routines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bath import LorentzBath, decompose_correlation, decomposition_error, prony_fit, reconstruct


class ExponentialSeriesFit(BaseEstimator):
    """Fit ``y(t) ~ sum_k eta_k exp(-gamma_k t)`` by the matrix-pencil method.

    ``fit(t, y)`` takes a uniform 1-d time grid and complex samples; after
    fitting, ``eta_`` and ``gamma_`` hold the series.
    """

    def __init__(self, n_terms=4):
        self.n_terms = n_terms

    def fit(self, t, y):
        t = np.ravel(np.asarray(t, dtype=float))
        y = np.ravel(np.asarray(y, dtype=complex))
        if t.shape != y.shape:
            raise ValueError("t and y must have the same length")
        self.eta_, self.gamma_ = prony_fit(t, y, self.n_terms)
        self.t0_ = float(t[0])
        return self

    def predict(self, t):
        check_is_fitted(self, "eta_")
        return reconstruct(self.eta_, self.gamma_, np.ravel(t) - self.t0_)

    def score(self, t, y):
        """Negative relative sup-norm error (higher is better)."""
        y = np.ravel(np.asarray(y, dtype=complex))
        return -float(np.max(np.abs(self.predict(t) - y)) / np.max(np.abs(y)))


class LorentzBathDecomposition(BaseEstimator):
    """Exponential decomposition of both correlation channels of one reservoir.

    ``fit()`` takes no data: the target is the exact correlation of the
    Lorentzian bath described by the hyperparameters.  ``predict(t)`` returns
    an ``(n, 2)`` array with the ``sigma = -1`` and ``sigma = +1`` channels.
    """

    def __init__(self, delta=1.0, W=10.0, beta=10.0, mu=0.0, K=None, tol=0.02, method="pade"):
        self.delta = delta
        self.W = W
        self.beta = beta
        self.mu = mu
        self.K = K
        self.tol = tol
        self.method = method

    def _bath(self):
        return LorentzBath(self.delta, self.W, self.beta, self.mu)

    def fit(self, X=None, y=None):
        bath = self._bath()
        tol = None if self.K is not None else self.tol
        self.series_ = {s: decompose_correlation(bath, s, K=self.K, tol=tol, method=self.method) for s in (-1, 1)}
        self.errors_ = {s: decomposition_error(bath, s, *self.series_[s]) for s in (-1, 1)}
        self.n_terms_ = len(self.series_[1][0])
        return self

    def predict(self, t):
        check_is_fitted(self, "series_")
        t = np.ravel(np.asarray(t, dtype=float))
        return np.stack([reconstruct(*self.series_[s], t) for s in (-1, 1)], axis=1)

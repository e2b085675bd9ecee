"""scikit-learn style estimators over the certified solver."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .engine import SolverConfig, solve
from .losses import LossKind
from .problem import ProblemInstance
from .rashomon import RashomonConfig, collect_rashomon
from .relaxation import RelaxConfig

__all__ = ["SparseGLMRegressor", "SparseLogisticClassifier", "ColumnStandardizer"]


class _SparseGLM(BaseEstimator):
    _loss = LossKind.SQUARED

    def __init__(self, k=5, M=2.0, lambda2=1.0, batch_size=64, time_limit=math.inf,
                 prune_slack=1e-6, workers=1, rashomon_epsilon=None, rashomon_cap=None):
        self.k = k
        self.M = M
        self.lambda2 = lambda2
        self.batch_size = batch_size
        self.time_limit = time_limit
        self.prune_slack = prune_slack
        self.workers = workers
        self.rashomon_epsilon = rashomon_epsilon
        self.rashomon_cap = rashomon_cap

    def _config(self):
        return SolverConfig(batch_size=self.batch_size, time_limit=self.time_limit,
                            prune_slack=self.prune_slack, relax_config=RelaxConfig(),
                            workers=self.workers)

    def _fit(self, X, y):
        instance = ProblemInstance(X, y, self._loss, self.k, self.M, self.lambda2)
        if self.rashomon_epsilon is None:
            cert = solve(instance, self._config())
            self.rashomon_ = None
        else:
            cert, trie = collect_rashomon(
                instance, self._config(),
                RashomonConfig(self.rashomon_epsilon, self.rashomon_cap))
            self.rashomon_ = trie
        self.certificate_ = cert
        self.coef_ = cert.beta
        self.support_ = np.array(cert.support, dtype=np.int64)
        self.intercept_ = 0.0
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_


class SparseGLMRegressor(RegressorMixin, _SparseGLM):
    """Certified best-subset ridge regression with a box on the coefficients.

    Minimises ``0.5 ||y - X b||^2 + lambda2 ||b||^2`` subject to at most ``k``
    nonzeros and ``|b_j| <= M``. No intercept is fitted; center the data
    first (see :class:`ColumnStandardizer`).
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        return self._fit(X, y)

    def predict(self, X):
        return self.decision_function(X)


class SparseLogisticClassifier(ClassifierMixin, _SparseGLM):
    """Certified cardinality-constrained logistic regression (two classes)."""

    _loss = LossKind.LOGISTIC

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] != 2:
            raise ValueError(f"expected exactly two classes, got {self.classes_.shape[0]}")
        signed = np.where(y == self.classes_[1], 1.0, -1.0)
        return self._fit(X, signed)

    def predict_proba(self, X):
        s = self.decision_function(X)
        p1 = np.exp(-np.logaddexp(0.0, -s))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        s = self.decision_function(X)
        return self.classes_[(s >= 0).astype(int)]


class ColumnStandardizer(TransformerMixin, BaseEstimator):
    """Center columns and scale them to unit Euclidean norm on the training rows.

    Constant training columns are dropped; ``keep_`` marks the retained ones.
    """

    def fit(self, X, y=None):
        X = check_array(X)
        mean = X.mean(axis=0)
        norm = np.linalg.norm(X - mean, axis=0)
        scale = np.maximum(np.abs(X).max(axis=0), 1.0)
        self.keep_ = norm > 1e-12 * scale * math.sqrt(max(X.shape[0], 1))
        Xc = (X[:, self.keep_] - mean[self.keep_]) / norm[self.keep_]
        # second pass, as in preprocess
        mean2 = Xc.mean(axis=0)
        norm2 = np.linalg.norm(Xc - mean2, axis=0)
        self.mean_ = mean[self.keep_] + mean2 * norm[self.keep_]
        self.scale_ = norm[self.keep_] * norm2
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        X = check_array(X)
        return (X[:, self.keep_] - self.mean_) / self.scale_

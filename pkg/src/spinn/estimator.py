"""scikit-learn compatible estimators wrapping :func:`spinn.optimizer.fit`."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils import check_random_state
from sklearn.utils.multiclass import type_of_target
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ValidationError
from .network import Dataset, NetworkArchitecture, Task
from .optimizer import TrainConfig, fit
from .penalty import PenaltyConfig


class _SPINNBase(SelectorMixin, BaseEstimator):
    _task: Task

    def __init__(self, hidden_layer_sizes=(10,), activation="tanh", lam=0.0, alpha=0.5,
                 lambda0=0.001, gamma_init=1.0, shrink=0.5, line_search_t=0.1,
                 max_iter=5000, tol=1e-6, max_backtracks=50, n_restarts=3,
                 init_scale=0.5, standardize=False, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.lam = lam
        self.alpha = alpha
        self.lambda0 = lambda0
        self.gamma_init = gamma_init
        self.shrink = shrink
        self.line_search_t = line_search_t
        self.max_iter = max_iter
        self.tol = tol
        self.max_backtracks = max_backtracks
        self.n_restarts = n_restarts
        self.init_scale = init_scale
        self.standardize = standardize
        self.random_state = random_state

    def _seed(self) -> int:
        if isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state)
        return int(check_random_state(self.random_state).randint(0, 2**31 - 1))

    def _hidden(self) -> tuple[int, ...]:
        h = self.hidden_layer_sizes
        return (int(h),) if np.isscalar(h) else tuple(int(v) for v in h)

    def _fit(self, X, y):
        arch = NetworkArchitecture.from_hidden(X.shape[1], self._hidden(), self._task, self.activation)
        penalty = PenaltyConfig(self.lambda0, self.lam, self.alpha)
        config = TrainConfig(
            gamma_init=self.gamma_init, shrink=self.shrink, line_search_t=self.line_search_t,
            max_iters=self.max_iter, rel_tol=self.tol, max_backtracks=self.max_backtracks,
            n_restarts=self.n_restarts, seed=self._seed(), init_scale=self.init_scale,
            standardize=self.standardize,
        )
        self.fit_result_ = fit(arch, Dataset(X, y, self._task), penalty, config)
        self.n_features_in_ = X.shape[1]
        self.coefs_ = [w.T.copy() for w in self.fit_result_.params.weights]
        self.intercepts_ = [b.copy() for b in self.fit_result_.params.intercepts]
        self.n_iter_ = self.fit_result_.n_iters
        self.objective_ = self.fit_result_.objective
        return self

    def _check_X(self, X):
        check_is_fitted(self, "fit_result_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but {type(self).__name__} is expecting "
                f"{self.n_features_in_} features as input"
            )
        return X

    def _score(self, X):
        X = self._check_X(X)
        return self.fit_result_.predict(X)

    def _get_support_mask(self):
        check_is_fitted(self, "fit_result_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[list(self.fit_result_.selected_features)] = True
        return mask

    @property
    def selected_features_(self) -> tuple[int, ...]:
        check_is_fitted(self, "fit_result_")
        return self.fit_result_.selected_features


class SPINNRegressor(RegressorMixin, _SPINNBase):
    """Sparse-input neural network for regression.

    Parameters
    ----------
    hidden_layer_sizes : int or tuple of int, default=(10,)
        Widths of the hidden layers.
    activation : {"tanh", "sigmoid"}, default="tanh"
    lam : float, default=0.0
        Weight of the sparse group lasso on first-layer columns.
    alpha : float, default=0.5
        Balance between the group norm (``alpha=1``) and the elementwise
        lasso (``alpha=0``).
    lambda0 : float, default=0.001
        Ridge weight on all layers after the first.
    max_iter, tol : int, float
        Iteration cap and relative objective-change stopping threshold.
    n_restarts : int, default=3
        Random initializations; the lowest final objective is kept.
    standardize : bool, default=False
        Fit on centred, unit-variance features.
    random_state : int, RandomState or None, default=0

    Attributes
    ----------
    fit_result_ : FitResult
    coefs_, intercepts_ : list of ndarray
        Weights in ``(fan_in, fan_out)`` layout, as in scikit-learn's MLP.
    n_iter_ : int
    objective_ : float
    """

    _task = Task.REGRESSION

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        return self._fit(X, y)

    def predict(self, X):
        return self._score(X)


class SPINNClassifier(ClassifierMixin, _SPINNBase):
    """Sparse-input neural network for binary classification (logistic output).

    Takes the same parameters as :class:`SPINNRegressor`.  Any two distinct
    labels are accepted; ``classes_[1]`` is the positive class.
    """

    _task = Task.CLASSIFICATION

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if type_of_target(y) != "binary" or len(self.classes_) != 2:
            raise ValidationError(f"SPINNClassifier needs exactly two classes, got {len(self.classes_)}")
        return self._fit(X, encoded.astype(float))

    def predict_proba(self, X):
        p1 = self._score(X)
        return np.column_stack([1.0 - p1, p1])

    def decision_function(self, X):
        p1 = np.clip(self._score(X), 1e-300, 1 - 1e-16)
        return np.log(p1) - np.log1p(-p1)

    def predict(self, X):
        return self.classes_[(self._score(X) > 0.5).astype(int)]

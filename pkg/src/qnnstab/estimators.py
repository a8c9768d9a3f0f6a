"""scikit-learn compatible wrappers around the QNN trainer and the image pooling step."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .circuit import build_hea, check_features, forward_batch
from .data import pool_features
from .exceptions import ConfigurationError
from .loss import squared_error
from .qcore import default_observable
from .train import Dataset, StepSchedule, init_theta, make_rng, predict_sign, sgd_train


class PooledAngleEncoder(TransformerMixin, BaseEstimator):
    """Average-pool grayscale images to ``n_features`` cells and scale pixels to angles in ``[0, pi]``.

    Accepts ``(n, rows, cols)`` arrays or flattened square images ``(n, rows * cols)``.
    """

    def __init__(self, n_features=4):
        self.n_features = n_features

    def fit(self, X, y=None):
        self._images(X)
        return self

    def _images(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            side = int(round(np.sqrt(X.shape[1])))
            if side * side != X.shape[1]:
                raise ValueError(f"flattened rows of length {X.shape[1]} are not square images")
            X = X.reshape(len(X), side, side)
        if X.ndim != 3:
            raise ValueError("expected images shaped (n, rows, cols) or (n, rows * cols)")
        return X

    def transform(self, X):
        return pool_features(self._images(X), self.n_features)


class QNNClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier: angle encoding, hardware-efficient ansatz, ``Z`` readout on qubit 0.

    Trained with single-example SGD on the squared loss against labels
    ``{-1, +1}``; ``classes_[1]`` maps to ``+1``. The qubit count equals the
    number of features, which must already lie in ``[0, pi]``.

    Parameters
    ----------
    n_layers : int
    step_size : float
        ``eta`` for the constant schedule, ``c`` for ``inverse_decay``.
    schedule : {"constant", "inverse_decay"}
    n_iter : int
        Number of SGD steps ``T``.
    noise : float
        Per-gate depolarizing level used in training and prediction.
    sampling : {"uniform", "permutation"}
    random_state : int
    """

    def __init__(self, n_layers=2, step_size=0.01, schedule="constant", n_iter=200, noise=0.0, sampling="uniform", random_state=0):
        self.n_layers = n_layers
        self.step_size = step_size
        self.schedule = schedule
        self.n_iter = n_iter
        self.noise = noise
        self.sampling = sampling
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        check_features(X)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError(f"QNNClassifier is binary; got {len(self.classes_)} classes")
        if self.random_state is None or not isinstance(self.random_state, (int, np.integer)):
            raise ConfigurationError("random_state must be an integer seed")
        signs = np.where(y == self.classes_[1], 1.0, -1.0)
        self.n_features_in_ = X.shape[1]
        self.circuit_ = build_hea(X.shape[1], self.n_layers)
        self.observable_ = default_observable(X.shape[1])
        theta0 = init_theta(self.circuit_.K, make_rng(self.random_state, 1))
        self.train_record_ = sgd_train(
            self.circuit_,
            theta0,
            Dataset(X, signs),
            StepSchedule(self.schedule, self.step_size),
            self.sampling,
            self.n_iter,
            self.noise,
            squared_error(self.observable_.spectral_norm),
            seed=self.random_state,
            obs=self.observable_,
            record_risk=False,
        )
        self.theta_ = self.train_record_.theta
        return self

    def decision_function(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        check_features(X)
        return forward_batch(self.circuit_, self.theta_[None], X, self.observable_, self.noise)

    def predict(self, X):
        signs = predict_sign(self.decision_function(X))
        return np.where(signs > 0, self.classes_[1], self.classes_[0])

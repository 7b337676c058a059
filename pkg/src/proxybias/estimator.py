"""Scikit-learn style front end for the adversarially debiased models.

The estimator wraps architecture choice, adversary configuration, and the
training loop behind fit/predict with ``get_params``/``set_params`` from
``sklearn.base.BaseEstimator``, so it clones, grid-searches, and pipelines
like any other estimator. The treatment (and optional controls or
instrument) enter as fit parameters, mirroring how sample weights travel
through scikit-learn.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .adversary import AdversarySpec
from .data import Dataset
from .diagnose import BiasTestResult, bias_test
from .exceptions import DimensionMismatch
from .model import ModelSpec, forward, predict_error
from .train import TrainConfig, train_adversarial, train_standard
from .validation import as_float_matrix, as_float_vector


class AdversarialDebiaser(BaseEstimator):
    """Predictive model trained so its errors carry no treatment signal.

    Parameters
    ----------
    architecture : {"linear", "logistic", "mlp3"}
    hidden_dims : pair of int
        Hidden sizes for the mlp3 architecture.
    activation : {"relu", "tanh"}
    output : {"probability", "real"} or None
        None resolves from the architecture.
    loss : {"auto", "mse", "binary_cross_entropy"}
    adversary : {"none", "slr", "covariance_penalty", "fwl_slr", "iv_slr"}
    alpha : float
        Weight on the adversarial penalty; 0 trains a standard model.
    gamma_update : {"closed_form", "gradient_step"}
    learning_rate, adversary_lr : float
    iterations : int
    batch_size : int or None
        None runs full-batch gradient descent.
    standardize : bool
        Z-score features on the training data; the scaling is folded back
        into the fitted parameters.
    checkpoint_selection : bool
        Return the training checkpoint with the cleanest in-sample bias
        test instead of the final iterate (adversarial runs only).
    random_state : int

    Attributes
    ----------
    spec_ : ModelSpec
    params_ : ParamVector
        Fitted flat parameter vector; consumes raw (unstandardized)
        features.
    n_features_in_ : int
    """

    def __init__(self, architecture="logistic", hidden_dims=(32, 16),
                 activation="relu", output=None, loss="auto", adversary="slr",
                 alpha=1.0, gamma_update="closed_form", learning_rate=1e-2,
                 adversary_lr=1e-2, iterations=2000, batch_size=None,
                 standardize=True, checkpoint_selection=True, random_state=0):
        self.architecture = architecture
        self.hidden_dims = hidden_dims
        self.activation = activation
        self.output = output
        self.loss = loss
        self.adversary = adversary
        self.alpha = alpha
        self.gamma_update = gamma_update
        self.learning_rate = learning_rate
        self.adversary_lr = adversary_lr
        self.iterations = iterations
        self.batch_size = batch_size
        self.standardize = standardize
        self.checkpoint_selection = checkpoint_selection
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            primary_lr=self.learning_rate,
            adversary_lr=self.adversary_lr,
            iterations=self.iterations,
            batch_size=self.batch_size,
            seed=self.random_state,
            standardize=self.standardize,
            checkpoint_selection=self.checkpoint_selection,
        )

    def fit(self, X, y, treatment=None, controls=None, instrument=None):
        """Train on labeled rows.

        Parameters
        ----------
        X : array_like, shape (n, d)
            Model input features.
        y : array_like, shape (n,)
        treatment : array_like, shape (n,) or (n, q)
            Required unless the adversary is disabled.
        controls, instrument : array_like, optional
            Needed by the residualized adversary families.
        """
        X = as_float_matrix(X, "X")
        y = as_float_vector(y, "y")
        if y.size != X.shape[0]:
            raise DimensionMismatch("X and y row counts differ")
        spec = ModelSpec(
            architecture=self.architecture,
            input_dim=X.shape[1],
            hidden_dims=tuple(self.hidden_dims),
            activation=self.activation,
            output=self.output,
        )
        cfg = self._train_config()
        use_adversary = self.adversary not in (None, "none") and self.alpha > 0
        if use_adversary and treatment is None:
            raise ValueError("an active adversary requires the treatment argument")
        if treatment is None:
            treatment = np.zeros(X.shape[0])
        data = Dataset(features=X, treatment=treatment, y=y,
                       controls=controls, instrument=instrument)
        if use_adversary:
            adv = AdversarySpec(family=self.adversary, alpha=float(self.alpha),
                                gamma_update=self.gamma_update)
            params = train_adversarial(spec, data, cfg, self.loss, adv)
        else:
            params = train_standard(spec, data, cfg, self.loss)
        self.spec_ = spec
        self.params_ = params
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise AttributeError("this estimator is not fitted yet; call fit first")

    def predict(self, X) -> np.ndarray:
        """Model predictions (probabilities or reals per the output kind)."""
        self._check_fitted()
        return forward(self.spec_, self.params_, X)

    def predict_error(self, X, y) -> np.ndarray:
        """Prediction errors (predictions minus observed outcomes)."""
        self._check_fitted()
        return predict_error(self.spec_, self.params_, X, y)

    def bias_test(self, X, y, treatment, se_kind="classical") -> BiasTestResult:
        """Bias test of this model's errors against [1, treatment]."""
        errors = self.predict_error(X, y)
        return bias_test(errors, treatment, se_kind=se_kind, add_intercept=True)

    def score(self, X, y) -> float:
        """Accuracy for probability outputs, negative MSE otherwise."""
        pred = self.predict(X)
        y = as_float_vector(y, "y")
        if self.spec_.output == "probability":
            return float(np.mean((pred >= 0.5) == (y >= 0.5)))
        return -float(np.mean((pred - y) ** 2))

"""scikit-learn compatible wrappers around the constraint loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .constraints import ConstraintSet
from .sparse import goal_loss, sparse_goal, sparse_loss
from .tnorms import TNormKind
from .validation import check_prediction_matrix


def _check_constraints(constraints) -> ConstraintSet:
    if not isinstance(constraints, ConstraintSet):
        raise TypeError(f"constraints must be a ConstraintSet, got {type(constraints).__name__}")
    return constraints


class ConstraintGoalTransformer(TransformerMixin, BaseEstimator):
    """Map a prediction matrix to its goal matrix of clause satisfaction degrees.

    Parameters
    ----------
    constraints : ConstraintSet
    tnorm : {"godel", "lukasiewicz", "product"}
    strict : bool
        Reject confidences outside [0, 1] instead of clipping them.
    """

    def __init__(self, constraints=None, tnorm="godel", strict=True):
        self.constraints = constraints
        self.tnorm = tnorm
        self.strict = strict

    def fit(self, X, y=None):
        cs = _check_constraints(self.constraints)
        X = check_prediction_matrix(X, cs.n_labels, strict=self.strict)
        self.kind_ = TNormKind.parse(self.tnorm)
        self.n_features_in_ = X.shape[1]
        self.n_constraints_ = cs.n_constraints
        return self

    def transform(self, X):
        check_is_fitted(self, "kind_")
        return np.ascontiguousarray(sparse_goal(self.constraints, X, self.kind_, strict=self.strict))

    def loss(self, X) -> float:
        return goal_loss(self.transform(X))

    def score(self, X, y=None) -> float:
        """Mean satisfaction degree, i.e. one minus the constraint loss."""
        return 1.0 - self.loss(X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "kind_")
        return np.asarray([f"clause{i}" for i in range(self.n_constraints_)], dtype=object)


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int):
        super().__init__(f"objective became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass
class ObjectiveTerms:
    """One evaluation of the training objective and its parts."""

    value: float
    bce: float
    logic_labelled: float
    logic_unlabelled: float
    grad_coef_bce: np.ndarray
    grad_intercept_bce: np.ndarray
    grad_coef_logic: np.ndarray
    grad_intercept_logic: np.ndarray
    logic_weight: float

    @property
    def grad_coef(self) -> np.ndarray:
        return self.grad_coef_bce + self.logic_weight * self.grad_coef_logic

    @property
    def grad_intercept(self) -> np.ndarray:
        return self.grad_intercept_bce + self.logic_weight * self.grad_intercept_logic


class TNormRegularizedClassifier(ClassifierMixin, BaseEstimator):
    """Linear-sigmoid multi-label classifier trained on BCE plus a t-norm constraint loss.

    The objective on labelled data is ``BCE + logic_weight * L_logic``. When
    unlabelled inputs are passed to :meth:`fit`, they contribute
    ``logic_weight * L_logic`` only. During the first ``warmup_epochs``
    epochs the logic term is off and unlabelled data are ignored. Training
    is full-batch gradient descent.

    Parameters
    ----------
    constraints : ConstraintSet
        Clauses over the output labels; ``n_labels`` must match ``Y``.
    tnorm : {"godel", "lukasiewicz", "product"}
    logic_weight : float
    warmup_epochs : int or None
        ``None`` means a third of ``epochs``.
    epochs : int
    learning_rate : float
    threshold : float
        Confidence at or above which a label is predicted.
    random_state : int, RandomState or None
    """

    def __init__(
        self,
        constraints=None,
        tnorm="godel",
        logic_weight=10.0,
        warmup_epochs=None,
        epochs=300,
        learning_rate=0.5,
        threshold=0.5,
        random_state=None,
    ):
        self.constraints = constraints
        self.tnorm = tnorm
        self.logic_weight = logic_weight
        self.warmup_epochs = warmup_epochs
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.threshold = threshold
        self.random_state = random_state

    def _validate_params_values(self):
        if self.logic_weight < 0:
            raise ValueError("logic_weight must be non-negative")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        warm = self.epochs // 3 if self.warmup_epochs is None else self.warmup_epochs
        if not 0 <= warm <= self.epochs:
            raise ValueError("warmup_epochs must lie in [0, epochs]")
        return warm

    def _proba(self, X, coef, intercept):
        return expit(X @ coef + intercept)

    def _logic(self, P, want_grad=True):
        self.n_logic_calls_ += 1
        return sparse_loss(self.constraints, P, self.kind_, want_grad, grad_dtype=np.float64)

    def objective(self, X, Y, X_unlabelled=None, logic_weight=None, coef=None, intercept=None) -> ObjectiveTerms:
        """Objective value and gradient parts at the given (or fitted) parameters.

        The logic term is evaluated only when ``logic_weight > 0``.
        """
        w = self.logic_weight if logic_weight is None else logic_weight
        coef = self.coef_ if coef is None else coef
        intercept = self.intercept_ if intercept is None else intercept
        n, n_labels = Y.shape
        P = self._proba(X, coef, intercept)
        eps = 1e-12
        bce = float(-np.mean(Y * np.log(P + eps) + (1 - Y) * np.log(1 - P + eps)))
        dz = (P - Y) / (n * n_labels)
        g_coef_bce, g_int_bce = X.T @ dz, dz.sum(axis=0)
        g_coef_logic = np.zeros_like(coef)
        g_int_logic = np.zeros_like(intercept)
        logic_l = logic_u = 0.0
        if w > 0 and self.constraints.n_constraints:
            for which, Xs in (("l", X), ("u", X_unlabelled)):
                if Xs is None or len(Xs) == 0:
                    continue
                Ps = P if which == "l" else self._proba(Xs, coef, intercept)
                res = self._logic(Ps)
                dz = res.grad * Ps * (1 - Ps)
                g_coef_logic += Xs.T @ dz
                g_int_logic += dz.sum(axis=0)
                if which == "l":
                    logic_l = res.loss
                else:
                    logic_u = res.loss
        value = bce + w * (logic_l + logic_u)
        return ObjectiveTerms(value, bce, logic_l, logic_u, g_coef_bce, g_int_bce, g_coef_logic, g_int_logic, w)

    def fit(self, X, Y, X_unlabelled=None):
        cs = _check_constraints(self.constraints)
        warm = self._validate_params_values()
        X, Y = validate_data(self, X, Y, multi_output=True, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[1] != cs.n_labels:
            raise ValueError(f"Y must have {cs.n_labels} columns (one per label)")
        if X_unlabelled is not None:
            X_unlabelled = check_array(X_unlabelled, dtype=np.float64, ensure_min_samples=0)
        self.kind_ = TNormKind.parse(self.tnorm)
        self.classes_ = [np.array([0, 1]) for _ in range(cs.n_labels)]
        rng = check_random_state(self.random_state)
        self.coef_ = rng.normal(scale=0.01, size=(X.shape[1], cs.n_labels))
        self.intercept_ = np.zeros(cs.n_labels)
        self.n_logic_calls_ = 0
        self.history_ = {"objective": [], "bce": [], "logic": []}
        for epoch in range(self.epochs):
            active = epoch >= warm
            terms = self.objective(
                X, Y, X_unlabelled if active else None, self.logic_weight if active else 0.0
            )
            if not np.isfinite(terms.value):
                raise TrainingDivergedError(epoch)
            self.history_["objective"].append(terms.value)
            self.history_["bce"].append(terms.bce)
            self.history_["logic"].append(terms.logic_labelled + terms.logic_unlabelled)
            self.coef_ = self.coef_ - self.learning_rate * terms.grad_coef
            self.intercept_ = self.intercept_ - self.learning_rate * terms.grad_intercept
        self.warmup_epochs_ = warm
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return expit(self.decision_function(X))

    def predict(self, X):
        return (self.predict_proba(X) >= self.threshold).astype(int)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.target_tags.multi_output = True
        tags.target_tags.single_output = False
        return tags

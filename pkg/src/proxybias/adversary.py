"""Adversarial loss components that penalize treatment-predictable errors.

Four families:

* ``slr``: a linear regression of prediction errors on [1, treatment];
  its loss is the mean squared residual of that regression.
* ``covariance_penalty``: the absolute sample covariance between the
  centered treatment and the errors, with no parameters of its own.
* ``fwl_slr``: the same linear adversary on the treatment residualized
  against controls; the training loop also residualizes the errors.
* ``iv_slr``: the linear adversary on the residualized instrument (one
  instrument) or residualized first-stage fit (several).

Every family exposes its loss, a parameter update, and the analytic
gradient of the loss with respect to the errors, which the trainer
backpropagates into the primary model.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .exceptions import DegenerateDesign, DimensionMismatch, MissingColumns
from .regress import DesignMatrix, Residualizer, fwl_residualize
from .validation import as_float_vector

FAMILIES = ("slr", "covariance_penalty", "fwl_slr", "iv_slr")
GAMMA_UPDATES = ("closed_form", "gradient_step")


@dataclass(frozen=True)
class AdversarySpec:
    """Configuration of the adversarial penalty.

    ``alpha`` is the weight the primary objective places on the penalty;
    zero disables it. ``gamma_update`` picks between one gradient step per
    iteration and an exact least-squares refresh (default: the refresh,
    which solves the adversary's inner minimization outright and needs no
    learning rate). Column indices are relative to the dataset's own
    control and instrument blocks.
    """

    family: str = "slr"
    alpha: float = 1.0
    treatment_index: int = 0
    control_cols: tuple = None
    instrument_cols: tuple = None
    gamma_update: str = "closed_form"
    adversary_lr: float = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown adversary family {self.family!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.gamma_update not in GAMMA_UPDATES:
            raise ValueError(f"unknown gamma_update {self.gamma_update!r}")
        if self.adversary_lr is not None and self.adversary_lr <= 0:
            raise ValueError("adversary_lr must be positive")


@dataclass(frozen=True)
class AdversaryState:
    """Adversary parameters plus cached solve structures for a fixed design."""

    gamma: np.ndarray
    design_shape: tuple
    solve_cache: np.ndarray = None
    centered: np.ndarray = None

    def check(self, design: np.ndarray) -> None:
        if design.shape != self.design_shape:
            raise DimensionMismatch(
                f"adversary state was built for design {self.design_shape}, got {design.shape}"
            )


def _design_values(design) -> np.ndarray:
    if isinstance(design, DesignMatrix):
        return design.values
    arr = np.asarray(design, dtype=np.float64)
    return arr[:, None] if arr.ndim == 1 else arr


def init_adversary_state(spec: AdversarySpec, design) -> AdversaryState:
    """Zero-initialized parameters with the design's pseudoinverse cached."""
    X = _design_values(design)
    if spec.family == "covariance_penalty":
        if X.shape[1] != 1:
            raise DimensionMismatch(
                "covariance_penalty expects a single treatment column"
            )
        col = X[:, 0]
        return AdversaryState(
            gamma=np.zeros(0),
            design_shape=X.shape,
            centered=col - col.mean(),
        )
    pinv = np.linalg.pinv(X)
    return AdversaryState(gamma=np.zeros(X.shape[1]), design_shape=X.shape, solve_cache=pinv)


def adversary_loss(state: AdversaryState, spec: AdversarySpec, design, pred_errors) -> float:
    """Penalty value at the current adversary parameters.

    Linear families return mean((errors - design @ gamma)^2); the
    covariance family returns |mean(centered_treatment * errors)|.
    """
    X = _design_values(design)
    state.check(X)
    e = as_float_vector(pred_errors, "pred_errors")
    if e.size != X.shape[0]:
        raise DimensionMismatch("pred_errors and design row counts differ")
    if spec.family == "covariance_penalty":
        # Deliberately an unnormalized sum: against a per-observation
        # primary loss it acts as a near-hard constraint for any O(1)
        # weight, which is what makes a 0..1 sweep eliminate bias.
        return abs(float(state.centered @ e))
    r = e - X @ state.gamma
    return float(r @ r) / e.size


def adversary_step(state: AdversaryState, spec: AdversarySpec, design, pred_errors,
                   lr: float = None) -> AdversaryState:
    """One adversary update; returns a new state.

    ``closed_form`` refreshes gamma to the exact least-squares solution;
    ``gradient_step`` descends the penalty once with step ``lr`` (falling
    back to ``spec.adversary_lr``). The covariance family has no
    parameters, so its update is a no-op.
    """
    X = _design_values(design)
    state.check(X)
    e = as_float_vector(pred_errors, "pred_errors")
    if spec.family == "covariance_penalty":
        return state
    if spec.gamma_update == "closed_form":
        return replace(state, gamma=state.solve_cache @ e)
    step = lr if lr is not None else spec.adversary_lr
    if step is None:
        raise ValueError("gradient_step requires a learning rate")
    grad = -2.0 / e.size * (X.T @ (e - X @ state.gamma))
    return replace(state, gamma=state.gamma - step * grad)


def adversary_grad_wrt_errors(state: AdversaryState, spec: AdversarySpec, design,
                              pred_errors) -> np.ndarray:
    """Gradient of the penalty with respect to the prediction errors.

    For the linear families this holds gamma fixed at its current value,
    (2/N)(errors - design @ gamma); at the closed-form optimum the same
    expression is the exact envelope gradient. The covariance family
    returns sign(covariance) times the centered treatment, with the
    minimal-norm subgradient (zero) exactly at the kink.
    """
    X = _design_values(design)
    state.check(X)
    e = as_float_vector(pred_errors, "pred_errors")
    if spec.family == "covariance_penalty":
        s = float(state.centered @ e)
        return np.sign(s) * state.centered
    return 2.0 / e.size * (e - X @ state.gamma)


def _select(block, cols, name) -> np.ndarray:
    if block is None:
        raise MissingColumns(f"dataset has no {name} block")
    if cols is None:
        return block
    cols = list(cols)
    if len(set(cols)) != len(cols):
        raise DimensionMismatch(f"{name} column selection contains duplicates")
    return block[:, cols]


def make_residualized_design(data: Dataset, spec: AdversarySpec) -> DesignMatrix:
    """The treatment-side columns the adversary regresses errors on.

    ``slr`` and ``covariance_penalty`` return the raw treatment columns;
    ``fwl_slr`` residualizes them against [1, controls]; ``iv_slr``
    residualizes the single instrument, or the first-stage fitted
    treatment when there are several. Rows enter in dataset order for the
    rows currently marked labeled.
    """
    rows = data.labeled_indices
    treatment = data.treatment_matrix[rows]
    if spec.family in ("slr", "covariance_penalty"):
        return DesignMatrix(treatment)

    controls = _select(data.controls, spec.control_cols, "controls")[rows]
    ones = np.ones((rows.size, 1))
    control_block = DesignMatrix(np.hstack([ones, controls]), has_intercept=True)

    if spec.family == "fwl_slr":
        raw = treatment
    else:
        z = _select(data.instrument, spec.instrument_cols, "instrument")[rows]
        if z.shape[1] == 1:
            raw = z
        else:
            first_stage = DesignMatrix(
                np.hstack([ones, controls, z]), has_intercept=True
            )
            raw = first_stage.project(treatment[:, [spec.treatment_index]])

    resid = fwl_residualize(raw, control_block)
    scale = np.linalg.norm(raw, axis=0)
    left = np.linalg.norm(resid, axis=0)
    if np.any(left <= 1e-8 * np.maximum(scale, 1.0)):
        raise DegenerateDesign(
            "treatment is (numerically) linear in the controls; nothing is "
            "left for the adversary to regress on"
        )
    return DesignMatrix(resid)


def adversary_design(data: Dataset, spec: AdversarySpec):
    """Assembled adversary design plus the error residualizer, if any.

    Linear families get an intercept column alongside the (possibly
    residualized) treatment so their slope isolates differential error.
    For ``fwl_slr`` and ``iv_slr`` the second return value residualizes
    the prediction errors against [1, controls] each step; it is None for
    the plain families.
    """
    core = make_residualized_design(data, spec)
    residualizer = None
    if spec.family in ("fwl_slr", "iv_slr"):
        rows = data.labeled_indices
        controls = _select(data.controls, spec.control_cols, "controls")[rows]
        ones = np.ones((rows.size, 1))
        residualizer = Residualizer(
            DesignMatrix(np.hstack([ones, controls]), has_intercept=True)
        )
    if spec.family == "covariance_penalty":
        return core, residualizer
    n = core.values.shape[0]
    design = DesignMatrix(
        np.hstack([np.ones((n, 1)), core.values]), has_intercept=True
    )
    return design, residualizer

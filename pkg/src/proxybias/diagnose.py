"""Measurement-error bias diagnostics.

The bias test regresses prediction errors on the independent variables of
the downstream regression; its slope estimates the coefficient bias that
those errors would induce. On top of the test sit a post hoc correction
and a minimum-detectable-bias power workflow.

Prediction errors are defined as predictions minus observed outcomes
throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .exceptions import (
    DomainError,
    EmptyLabeledSet,
    IndexOutOfRange,
    InsufficientLabels,
)
from .regress import DesignMatrix, FitResult, ols_fit
from .util import spawn_rng
from .validation import as_float_vector, check_open_unit, check_positive

_TAG_POWER = 31


@dataclass(frozen=True)
class BiasTestResult:
    """Per-regressor bias estimates with normal-reference inference.

    ``gamma_hat[j]`` is the estimated coefficient bias induced per unit of
    regressor ``j`` (outcome units per regressor unit). With the default
    intercept the treatment slope sits at index 1.
    """

    gamma_hat: np.ndarray
    se: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    n_labeled: int
    se_kind: str


@dataclass(frozen=True)
class CorrectedEstimate:
    """A naive coefficient and its bias-corrected counterpart."""

    beta_naive: float
    gamma_hat: float
    beta_corrected: float
    se_corrected: float
    method: str


@dataclass(frozen=True)
class PowerCurve:
    """Minimum detectable bias across labeled-sample sizes.

    ``mdb`` averages subsample-estimated curves over Monte Carlo draws;
    ``mdb_true`` rescales the full-sample standard error by sqrt(N/J).
    """

    sample_sizes: np.ndarray
    mdb: np.ndarray
    mdb_true: np.ndarray
    power: float
    alpha_level: float
    draws: int
    seed: int


def _prepare_design(design, add_intercept: bool) -> DesignMatrix:
    if isinstance(design, DesignMatrix):
        if add_intercept and not design.has_intercept:
            values = np.hstack([np.ones((design.n, 1)), design.values])
            return DesignMatrix(values, has_intercept=True, cond_floor=design.cond_floor)
        return design
    arr = np.asarray(design, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if add_intercept:
        arr = np.hstack([np.ones((arr.shape[0], 1)), arr])
    return DesignMatrix(arr, has_intercept=add_intercept)


def bias_test(pred_errors, design, se_kind: str = "classical",
              add_intercept: bool = True) -> BiasTestResult:
    """Regress prediction errors on the downstream regressors.

    Parameters
    ----------
    pred_errors : array_like, shape (J,)
        Out-of-fold prediction errors (prediction minus truth) on the
        labeled set, assumed representative of the evaluation set.
    design : DesignMatrix or array_like
        The independent variables of the regression whose bias is probed.
    se_kind : {"classical", "hc_robust"}
    add_intercept : bool
        Prepend a constant column unless the design already carries one.
        The intercept absorbs any level shift so the slopes measure
        differential error only. Disable to run the raw regression.

    Two-sided p-values use a normal reference; the degrees-of-freedom
    correction applies to the residual variance only. Standard errors
    assume i.i.d. sampling; spatial or serial dependence is not adjusted
    for (see the ``se_caveats`` metadata emitted by the CLI).
    """
    pred_errors = as_float_vector(pred_errors, "pred_errors")
    if pred_errors.size == 0:
        raise EmptyLabeledSet("bias_test received zero labeled rows")
    design = _prepare_design(design, add_intercept)
    fit = ols_fit(design, pred_errors, se_kind=se_kind)
    se = fit.se
    gamma = fit.coefficients
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, gamma / np.where(se > 0, se, 1.0), np.where(gamma == 0, 0.0, np.inf * np.sign(gamma)))
    p = 2.0 * norm.sf(np.abs(t))
    return BiasTestResult(
        gamma_hat=gamma,
        se=se,
        t_stats=t,
        p_values=p,
        n_labeled=pred_errors.size,
        se_kind=se_kind,
    )


def bias_correct(beta_fit: FitResult, bias: BiasTestResult, treatment_index: int) -> CorrectedEstimate:
    """Subtract the estimated bias from the naive coefficient.

    The corrected standard error combines the two estimation errors in
    quadrature, which treats the evaluation-sample fit and the labeled-set
    bias estimate as independent. When the samples overlap, prefer a
    bootstrap over the whole pipeline (see ``train.bootstrap_train``): its
    spread is the authoritative uncertainty.
    """
    n_beta = len(beta_fit.coefficients)
    n_gamma = len(bias.gamma_hat)
    if not 0 <= treatment_index < min(n_beta, n_gamma):
        raise IndexOutOfRange(
            f"treatment_index {treatment_index} out of range for fits with "
            f"{n_beta} and {n_gamma} coefficients"
        )
    beta_naive = float(beta_fit.coefficients[treatment_index])
    gamma_hat = float(bias.gamma_hat[treatment_index])
    se_beta = float(beta_fit.se[treatment_index])
    se_gamma = float(bias.se[treatment_index])
    return CorrectedEstimate(
        beta_naive=beta_naive,
        gamma_hat=gamma_hat,
        beta_corrected=beta_naive - gamma_hat,
        se_corrected=float(np.hypot(se_beta, se_gamma)),
        method="normal_approx",
    )


def minimum_detectable_bias(se_gamma: float, power: float = 0.8,
                            alpha_level: float = 0.05) -> float:
    """Smallest bias detectable at the given power and significance.

    Standard normal-approximation power calculation:
    (z_{1 - alpha/2} + z_{power}) * se_gamma.
    """
    se_gamma = check_positive(se_gamma, "se_gamma")
    power = check_open_unit(power, "power")
    alpha_level = check_open_unit(alpha_level, "alpha_level")
    return float((norm.ppf(1.0 - alpha_level / 2.0) + norm.ppf(power)) * se_gamma)


def _treatment_se(pred_errors, design_cols) -> float:
    result = bias_test(pred_errors, design_cols, add_intercept=True)
    return float(result.se[1])


def power_curve(data: Dataset, model_errors, sample_sizes, draws: int = 200,
                seed: int = 0, power: float = 0.8, alpha_level: float = 0.05) -> PowerCurve:
    """Monte Carlo minimum-detectable-bias curve over labeled subsets.

    For each requested size J, ``draws`` random labeled subsets are drawn
    without replacement, the bias-test standard error of the treatment
    slope is estimated on each, and the average is mapped through
    :func:`minimum_detectable_bias`. ``mdb_true`` scales the full-sample
    standard error by sqrt(N/J) instead of resampling.
    """
    model_errors = as_float_vector(model_errors, "model_errors")
    labeled = data.labeled_indices
    if model_errors.size != labeled.size:
        raise EmptyLabeledSet(
            f"model_errors has {model_errors.size} rows, expected one per "
            f"labeled row ({labeled.size})"
        )
    treatment = data.treatment_matrix[labeled]
    n_lab = labeled.size
    min_rows = treatment.shape[1] + 2
    sizes = np.asarray(sample_sizes, dtype=np.int64)
    if sizes.size == 0:
        raise DomainError("sample_sizes is empty")
    if sizes.max() > n_lab:
        raise InsufficientLabels(
            f"requested subset of {int(sizes.max())} exceeds {n_lab} labeled rows"
        )
    if sizes.min() < min_rows:
        raise InsufficientLabels(
            f"subset sizes below {min_rows} cannot support the bias regression"
        )
    se_full = _treatment_se(model_errors, treatment)
    mdb = np.empty(sizes.size)
    mdb_true = np.empty(sizes.size)
    for i, size in enumerate(sizes):
        level = np.empty(draws)
        for d in range(draws):
            rng = spawn_rng(seed, _TAG_POWER, int(size), d)
            rows = rng.choice(n_lab, size=int(size), replace=False)
            se_sub = _treatment_se(model_errors[rows], treatment[rows])
            level[d] = minimum_detectable_bias(se_sub, power, alpha_level)
        mdb[i] = level.mean()
        mdb_true[i] = minimum_detectable_bias(
            se_full * np.sqrt(n_lab / size), power, alpha_level
        )
    return PowerCurve(
        sample_sizes=sizes,
        mdb=mdb,
        mdb_true=mdb_true,
        power=power,
        alpha_level=alpha_level,
        draws=draws,
        seed=seed,
    )


def decile_table(treatment, pred_errors, bins: int = 10):
    """Mean prediction error within treatment quantile bins.

    Returns an array of rows (bin index, mean treatment, mean error, count),
    the shape behind error-gradient plots.
    """
    treatment = as_float_vector(treatment, "treatment")
    pred_errors = as_float_vector(pred_errors, "pred_errors")
    if treatment.size != pred_errors.size:
        raise EmptyLabeledSet("treatment and pred_errors must align")
    edges = np.quantile(treatment, np.linspace(0.0, 1.0, bins + 1))
    idx = np.clip(np.searchsorted(edges, treatment, side="right") - 1, 0, bins - 1)
    rows = []
    for b in range(bins):
        mask = idx == b
        if not mask.any():
            continue
        rows.append([b, treatment[mask].mean(), pred_errors[mask].mean(), int(mask.sum())])
    return np.asarray(rows)

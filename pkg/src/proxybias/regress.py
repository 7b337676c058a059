"""Exact closed-form linear estimation.

Ordinary least squares with classical and HC0 sandwich covariance,
partialling-out (residualization) of control blocks, and two-stage /
indirect least squares for instrumented designs. All solvers go through
a rank-revealing SVD; the Gram inverse is only materialized for
covariance assembly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import (
    DimensionMismatch,
    DivisionByNearZero,
    SingularDesign,
    WeakInstrumentWarning,
)
from .validation import as_float_matrix, as_float_vector, check_rows

DEFAULT_COND_FLOOR = 1e-12

SE_KINDS = ("classical", "hc_robust", "bootstrap")


class DesignMatrix:
    """Validated dense regression design.

    Parameters
    ----------
    values : array_like, shape (n, p)
        Columns of the design. Never modified after construction.
    has_intercept : bool
        Declares that the leading column is a constant. The library never
        inserts an intercept silently; callers opt in.
    cond_floor : float
        Minimum reciprocal condition number of the Gram matrix X'X.
        Designs below the floor are rejected at construction.
    """

    __slots__ = ("values", "has_intercept", "cond_floor", "_u", "_s", "_vt", "_xtx_inv")

    def __init__(self, values, has_intercept: bool = False, cond_floor: float = DEFAULT_COND_FLOOR):
        X = as_float_matrix(values, "design")
        n, p = X.shape
        if p == 0:
            raise DimensionMismatch("design needs at least one column")
        if n < p:
            raise SingularDesign(f"design has more columns ({p}) than rows ({n})")
        if np.any(np.max(np.abs(X), axis=0) == 0.0):
            raise SingularDesign("design contains an all-zero column")
        if has_intercept:
            lead = X[:, 0]
            if np.ptp(lead) != 0.0 or lead[0] == 0.0:
                raise DimensionMismatch(
                    "has_intercept=True but the leading column is not a nonzero constant"
                )
        u, s, vt = np.linalg.svd(X, full_matrices=False)
        rcond_gram = (s[-1] / s[0]) ** 2 if s[0] > 0 else 0.0
        if not np.isfinite(rcond_gram) or rcond_gram < cond_floor:
            raise SingularDesign(
                f"Gram matrix reciprocal condition number {rcond_gram:.3e} "
                f"is below the floor {cond_floor:.3e}"
            )
        self.values = X
        self.has_intercept = bool(has_intercept)
        self.cond_floor = float(cond_floor)
        self._u, self._s, self._vt = u, s, vt
        self._xtx_inv = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def xtx_inv(self) -> np.ndarray:
        """(X'X)^{-1}, assembled from the SVD; used for covariance only."""
        if self._xtx_inv is None:
            vt = self._vt
            self._xtx_inv = (vt.T / self._s**2) @ vt
        return self._xtx_inv

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Least-squares coefficients for one or more right-hand sides."""
        rhs = np.asarray(rhs, dtype=np.float64)
        check_rows(self.n, rhs, "rhs")
        scaled = self._u.T @ rhs
        if scaled.ndim == 1:
            scaled = scaled / self._s
        else:
            scaled = scaled / self._s[:, None]
        return self._vt.T @ scaled

    def project(self, rhs: np.ndarray) -> np.ndarray:
        """Orthogonal projection of ``rhs`` onto the design's column space."""
        return self.values @ self.solve(rhs)


def _as_design(design) -> DesignMatrix:
    return design if isinstance(design, DesignMatrix) else DesignMatrix(design)


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


@dataclass(frozen=True)
class FitResult:
    """Coefficients plus inference bundle from a single linear fit.

    ``vcov`` is symmetric PSD; its flavor is recorded in ``se_kind``.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    vcov: np.ndarray
    se_kind: str
    n_obs: int

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))


def ols_fit(design, y, se_kind: str = "classical") -> FitResult:
    """Ordinary least squares of ``y`` on ``design``.

    Parameters
    ----------
    design : DesignMatrix or array_like
    y : array_like, shape (n,)
    se_kind : {"classical", "hc_robust"}
        Classical covariance is s^2 (X'X)^{-1} with a degrees-of-freedom
        corrected s^2; ``hc_robust`` is the HC0 sandwich.
    """
    design = _as_design(design)
    y = as_float_vector(y, "y")
    check_rows(design.n, y, "y")
    beta = design.solve(y)
    residuals = y - design.values @ beta
    if se_kind == "classical":
        dof = max(design.n - design.p, 1)
        sigma2 = float(residuals @ residuals) / dof
        vcov = _symmetrize(sigma2 * design.xtx_inv)
    elif se_kind == "hc_robust":
        vcov = hc_robust_vcov(design, residuals)
    else:
        raise ValueError(f"unknown se_kind {se_kind!r} for ols_fit")
    return FitResult(
        coefficients=beta,
        residuals=residuals,
        vcov=vcov,
        se_kind=se_kind,
        n_obs=design.n,
    )


def hc_robust_vcov(design, residuals) -> np.ndarray:
    """HC0 sandwich: (X'X)^{-1} X' diag(e^2) X (X'X)^{-1}."""
    design = _as_design(design)
    residuals = as_float_vector(residuals, "residuals")
    check_rows(design.n, residuals, "residuals")
    X = design.values
    meat = (X * residuals[:, None] ** 2).T @ X
    bread = design.xtx_inv
    return _symmetrize(bread @ meat @ bread)


def fwl_residualize(target, controls):
    """Residuals of ``target`` after projecting out the ``controls`` block.

    Implements the partialling-out step of the Frisch-Waugh-Lovell
    decomposition; works column-wise for matrix targets. Output columns are
    orthogonal to every control column.
    """
    controls = _as_design(controls)
    target = np.asarray(target, dtype=np.float64)
    check_rows(controls.n, target, "target")
    return target - controls.project(target)


class Residualizer:
    """Cached residualizing map against a fixed control block.

    The map is symmetric and idempotent, so it doubles as its own
    gradient pullback when chained inside a training loop.
    """

    def __init__(self, controls):
        self._design = _as_design(controls)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return v - self._design.project(v)

    @property
    def n(self) -> int:
        return self._design.n


@dataclass(frozen=True)
class IVSpec:
    """Column selection for instrumented fits.

    Indices are relative to their own block in the dataset:
    ``treatment_col`` selects a column of ``Dataset.treatment``,
    ``control_cols`` of ``Dataset.controls`` (None means all), and
    ``instrument_cols`` of ``Dataset.instrument`` (None means all).
    The blocks are physically disjoint arrays, which enforces the
    role-disjointness requirement structurally.
    """

    treatment_col: int = 0
    control_cols: tuple = None
    instrument_cols: tuple = None

    def resolve(self, data: Dataset):
        t = data.treatment_matrix
        if not 0 <= self.treatment_col < t.shape[1]:
            raise DimensionMismatch(
                f"treatment_col {self.treatment_col} out of range for {t.shape[1]} column(s)"
            )
        x1 = t[:, self.treatment_col]
        if self.control_cols is None:
            controls = data.controls
        else:
            if data.controls is None:
                raise DimensionMismatch("control_cols given but dataset has no controls")
            cols = tuple(self.control_cols)
            if len(set(cols)) != len(cols):
                raise DimensionMismatch("control_cols contains duplicates")
            controls = data.controls[:, list(cols)]
        if data.instrument is None:
            raise DimensionMismatch("dataset has no instrument block")
        if self.instrument_cols is None:
            z = data.instrument
        else:
            cols = tuple(self.instrument_cols)
            if len(set(cols)) != len(cols):
                raise DimensionMismatch("instrument_cols contains duplicates")
            z = data.instrument[:, list(cols)]
        if z.shape[1] < 1:
            raise DimensionMismatch("at least one instrument column is required")
        return x1, controls, z


def _with_intercept(n: int, *blocks) -> np.ndarray:
    cols = [np.ones((n, 1))]
    for b in blocks:
        if b is None:
            continue
        b = np.asarray(b, dtype=np.float64)
        cols.append(b[:, None] if b.ndim == 1 else b)
    return np.hstack(cols)


def _first_stage_f(x1, first_design, restricted_design) -> float:
    full = ols_fit(first_design, x1)
    restricted = ols_fit(restricted_design, x1)
    rss_full = float(full.residuals @ full.residuals)
    rss_restricted = float(restricted.residuals @ restricted.residuals)
    m = first_design.p - restricted_design.p
    dof = first_design.n - first_design.p
    if rss_full <= 0.0 or dof <= 0:
        return np.inf
    return ((rss_restricted - rss_full) / m) / (rss_full / dof)


def tsls_fit(data: Dataset, spec: IVSpec, se_kind: str = "classical",
             weak_f_threshold: float = 10.0) -> FitResult:
    """Two-stage least squares for the treatment column of ``data``.

    First stage projects the treatment on [1, controls, instruments]; the
    second stage regresses the outcome on [1, fitted treatment, controls].
    The treatment coefficient sits at index 1 of the returned coefficients.
    A first-stage instrument F below ``weak_f_threshold`` raises
    :class:`WeakInstrumentWarning` but does not abort.
    """
    x1, controls, z = spec.resolve(data)
    n = data.n
    first_design = DesignMatrix(_with_intercept(n, controls, z), has_intercept=True)
    restricted = DesignMatrix(_with_intercept(n, controls), has_intercept=True)
    f_stat = _first_stage_f(x1, first_design, restricted)
    if f_stat < weak_f_threshold:
        warnings.warn(
            f"first-stage instrument F = {f_stat:.3f} below {weak_f_threshold:.1f}",
            WeakInstrumentWarning,
            stacklevel=2,
        )
    x1_hat = first_design.project(x1)
    second = DesignMatrix(_with_intercept(n, x1_hat, controls), has_intercept=True)
    return ols_fit(second, data.y, se_kind=se_kind)


def regression_design(data: Dataset, rows=None) -> DesignMatrix:
    """The downstream regression design [1, treatment, controls].

    The treatment block starts at column 1, so with a univariate treatment
    its coefficient sits at index 1.
    """
    if rows is None:
        rows = np.arange(data.n)
    else:
        rows = np.asarray(rows, dtype=np.int64)
    blocks = [np.ones((rows.size, 1)), data.treatment_matrix[rows]]
    if data.controls is not None:
        blocks.append(data.controls[rows])
    return DesignMatrix(np.hstack(blocks), has_intercept=True)


def ils_fit(data: Dataset, spec: IVSpec, atol: float = 1e-12) -> float:
    """Indirect least squares for a single-instrument design.

    Ratio of the reduced-form instrument coefficient (outcome on
    [1, instrument, controls]) to the first-stage instrument coefficient
    (treatment on the same design). Coincides with :func:`tsls_fit` in the
    single-instrument case.
    """
    x1, controls, z = spec.resolve(data)
    if z.shape[1] != 1:
        raise DimensionMismatch(f"indirect least squares needs exactly one instrument, got {z.shape[1]}")
    design = DesignMatrix(_with_intercept(data.n, z, controls), has_intercept=True)
    reduced = design.solve(data.y)[1]
    first = design.solve(x1)[1]
    if abs(first) <= atol:
        raise DivisionByNearZero(
            f"first-stage instrument coefficient {first:.3e} is below tolerance {atol:.1e}; "
            "the instrument appears irrelevant"
        )
    return float(reduced) / float(first)

"""Training loops, cross-fitting, adversary-weight tuning, and bootstrap.

The adversarial loop alternates one adversary update with one primary
update per iteration: forward pass, prediction errors, adversary refresh,
then a primary gradient step on (primary loss - alpha * adversary loss)
chained through the errors. Because a single run can land on an unstable
iterate, the loop tracks an in-sample bias-test trajectory and returns
the checkpoint that best combines an insignificant bias with a low
primary loss; this selection is an engineering stabilizer, not part of
the core update rule, and is skipped when alpha is zero so that
adversarial training with a disabled adversary matches standard training
bit for bit.
"""
from __future__ import annotations

import json
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .adversary import (
    AdversarySpec,
    adversary_design,
    adversary_grad_wrt_errors,
    adversary_loss,
    adversary_step,
    init_adversary_state,
)
from .data import Dataset
from .diagnose import bias_test
from .exceptions import (
    EmptyLabeledSet,
    InsufficientLabels,
    NonFiniteLoss,
    NonMonotoneLossWarning,
    OverparameterizedWarning,
    ReplicateFailure,
)
from .model import (
    ModelSpec,
    ParamVector,
    _backprop_from_cache,
    _forward_pass,
    absorb_standardization,
    canonical_loss,
    forward,
    init_params,
    loss_grad_wrt_pred,
    loss_value,
)
from .regress import DesignMatrix, ols_fit, regression_design
from .report import ExperimentReport, MethodRecord
from .util import spawn_rng, spawn_seed

_TAG_FOLD = 41
_TAG_FOLD_SEED = 42
_TAG_BOOT = 43
_TAG_STUDY = 44

METHODS = ("ground_truth", "baseline", "adv_slr", "adv_cov", "correct")


@dataclass(frozen=True)
class TrainConfig:
    """Knobs of the gradient loop.

    ``batch_size=None`` runs full-batch gradient descent, the default and
    the mode in which the closed-form adversary is exact. ``early_stop``
    is an optional (patience, metric) pair; the only metric is
    "primary_loss". ``checkpoint_pvalue`` is the significance level above
    which an iterate's in-sample bias test counts as clean for checkpoint
    selection.
    """

    primary_lr: float = 1e-2
    adversary_lr: float = 1e-2
    iterations: int = 2000
    batch_size: int = None
    seed: int = 0
    folds: int = 3
    early_stop: tuple = None
    standardize: bool = True
    adversary_steps: int = 1
    checkpoint_selection: bool = True
    checkpoint_pvalue: float = 0.05
    checkpoint_every: int = 10
    log_every: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if self.primary_lr <= 0 or self.adversary_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.adversary_steps < 1:
            raise ValueError("adversary_steps must be at least 1")
        if self.early_stop is not None:
            patience, metric = self.early_stop
            if int(patience) < 1:
                raise ValueError("early_stop patience must be at least 1")
            if metric != "primary_loss":
                raise ValueError(f"unknown early_stop metric {metric!r}")


@dataclass(frozen=True)
class CrossFitResult:
    """Out-of-fold predictions and fold bookkeeping for the labeled rows."""

    predictions: np.ndarray
    fold_assignment: np.ndarray
    labeled_indices: np.ndarray
    per_fold_models: list
    mse: float
    accuracy: float = None


@dataclass(frozen=True)
class BootstrapDistribution:
    """Draws of a statistic across retrained replicates."""

    draws: np.ndarray

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=np.float64)
        if draws.size < 2:
            raise ValueError("a bootstrap distribution needs at least 2 draws")
        if not np.isfinite(draws).all():
            raise ValueError("bootstrap draws must be finite")
        object.__setattr__(self, "draws", draws)

    @property
    def mean(self) -> float:
        return float(self.draws.mean())

    @property
    def sd(self) -> float:
        return float(self.draws.std(ddof=1))

    def ci(self, level: float = 0.95):
        tail = (1.0 - level) / 2.0
        lo, hi = np.quantile(self.draws, [tail, 1.0 - tail])
        return float(lo), float(hi)

    def summary(self) -> dict:
        lo, hi = self.ci()
        return {"mean": self.mean, "sd": self.sd, "ci_low": lo, "ci_high": hi,
                "n_draws": int(self.draws.size)}


def resolve_loss(spec: ModelSpec, loss: str) -> str:
    # Squared error is the default for every output kind: its per-row
    # gradient scale matches the adversary penalties, which keeps the
    # adversary weight meaningful on a 0..1 scale.
    if loss == "auto":
        return "mse"
    return canonical_loss(loss)


class _Scaler:
    def __init__(self, features: np.ndarray, enabled: bool):
        if enabled:
            self.mean = features.mean(axis=0)
            scale = features.std(axis=0)
            self.scale = np.where(scale < 1e-12, 1.0, scale)
        else:
            self.mean = np.zeros(features.shape[1])
            self.scale = np.ones(features.shape[1])

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.scale

    def absorb(self, spec: ModelSpec, params: ParamVector) -> ParamVector:
        return absorb_standardization(spec, params, self.mean, self.scale)


class _BiasProbe:
    """Cheap in-sample bias test reused every checkpoint evaluation."""

    def __init__(self, design: DesignMatrix, n_treatment: int):
        self.values = design.values
        self.pinv = np.linalg.pinv(design.values)
        self.diag = np.clip(np.diag(design.xtx_inv), 0.0, None)
        self.slots = slice(1, 1 + n_treatment)
        self.dof = max(design.n - design.p, 1)

    def __call__(self, errors: np.ndarray):
        gamma = self.pinv @ errors
        resid = errors - self.values @ gamma
        sigma2 = float(resid @ resid) / self.dof
        se = np.sqrt(sigma2 * self.diag)
        g = gamma[self.slots]
        s = se[self.slots]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(s > 0, np.abs(g) / np.where(s > 0, s, 1.0),
                         np.where(g == 0, 0.0, np.inf))
        p_value = float(np.min(2.0 * norm.sf(t)))
        return p_value, float(np.max(np.abs(g)))


class _AdversaryBundle:
    """Everything the loop needs to apply one adversary family."""

    def __init__(self, data: Dataset, spec: AdversarySpec, lr: float):
        design, residualizer = adversary_design(data, spec)
        self.spec = spec
        self.design = design.values
        self.residualizer = residualizer
        self.state = init_adversary_state(spec, design)
        self.lr = spec.adversary_lr if spec.adversary_lr is not None else lr
        self.controls_block = None
        if residualizer is not None:
            self.controls_block = residualizer._design.values

    def errors_in(self, errors: np.ndarray) -> np.ndarray:
        if self.residualizer is None:
            return errors
        return self.residualizer(errors)

    def update(self, errors_in: np.ndarray, steps: int) -> None:
        for _ in range(steps):
            self.state = adversary_step(
                self.state, self.spec, self.design, errors_in, lr=self.lr
            )

    def grad_wrt_errors(self, errors_in: np.ndarray) -> np.ndarray:
        grad = adversary_grad_wrt_errors(self.state, self.spec, self.design, errors_in)
        if self.residualizer is not None:
            grad = self.residualizer(grad)
        return grad

    def loss(self, errors_in: np.ndarray) -> float:
        return adversary_loss(self.state, self.spec, self.design, errors_in)


def _log_line(stream, **payload):
    stream.write(json.dumps(payload, sort_keys=True) + "\n")


def _train(spec: ModelSpec, data: Dataset, cfg: TrainConfig, loss: str,
           adv: AdversarySpec = None, log_stream=None) -> ParamVector:
    loss = resolve_loss(spec, loss)
    rows = data.labeled_indices
    if rows.size == 0:
        raise EmptyLabeledSet("training requires labeled rows")
    if rows.size < spec.n_params:
        warnings.warn(
            f"{rows.size} labeled rows for {spec.n_params} parameters",
            OverparameterizedWarning,
            stacklevel=3,
        )
    features = data.features[rows]
    labels = data.y[rows]
    scaler = _Scaler(features, cfg.standardize)
    scaled = scaler.apply(features)
    params = init_params(spec, cfg.seed)
    values = params.values.copy()
    stream = log_stream if log_stream is not None else sys.stderr

    bundle = None
    probe = None
    if adv is not None and adv.alpha > 0:
        bundle = _AdversaryBundle(data, adv, cfg.adversary_lr)
        if cfg.checkpoint_selection:
            probe = _BiasProbe(
                regression_design(data, rows), data.treatment_matrix.shape[1]
            )

    full_batch = cfg.batch_size is None or cfg.batch_size >= rows.size
    if not full_batch:
        batch_rng = spawn_rng(cfg.seed, 17)
        order = batch_rng.permutation(rows.size)
        cursor = 0

    best = None  # (qualifies, primary_loss, p_value, values copy)
    loss_history = []
    no_improve = 0
    best_metric = np.inf
    warned_window = False

    def evaluate_checkpoint(candidate_values, step):
        nonlocal best
        if probe is None:
            return
        cand = ParamVector(values=candidate_values, layout=params.layout)
        pred_full = forward(spec, cand, scaled)
        lp_full = _loss_only(pred_full, labels, loss)
        errors_full = pred_full - labels
        p_value, _ = probe(errors_full)
        qualifies = p_value >= cfg.checkpoint_pvalue
        entry = (qualifies, lp_full, p_value, candidate_values.copy())
        if best is None:
            best = entry
        elif qualifies != best[0]:
            if qualifies:
                best = entry
        elif qualifies:
            if lp_full < best[1]:
                best = entry
        elif p_value > best[2]:
            best = entry

    for step in range(cfg.iterations):
        if full_batch:
            batch_x, batch_y = scaled, labels
            batch_rows = None
        else:
            if cursor + cfg.batch_size > rows.size:
                order = batch_rng.permutation(rows.size)
                cursor = 0
            batch_rows = order[cursor:cursor + cfg.batch_size]
            cursor += cfg.batch_size
            batch_x, batch_y = scaled[batch_rows], labels[batch_rows]

        try:
            current = ParamVector(values=values, layout=params.layout)
        except Exception as exc:
            raise NonFiniteLoss(
                f"parameters became non-finite at step {step}; lower primary_lr"
            ) from exc
        pred, acts, pre_acts = _forward_pass(spec, current, batch_x)
        value = loss_value(pred, batch_y, loss)
        if not np.isfinite(value):
            raise NonFiniteLoss(
                f"loss became non-finite at step {step}; lower primary_lr"
            )
        d_pred = loss_grad_wrt_pred(pred, batch_y, loss)
        adv_value = None
        if bundle is not None:
            errors = pred - batch_y
            if full_batch:
                errors_in = bundle.errors_in(errors)
                bundle.update(errors_in, cfg.adversary_steps)
                adv_grad = bundle.grad_wrt_errors(errors_in)
                adv_value = bundle.loss(errors_in)
            else:
                adv_grad, adv_value = _minibatch_adversary(bundle, batch_rows, errors)
            d_pred = d_pred - adv.alpha * adv_grad
        total = _backprop_from_cache(spec, current, d_pred, pred, acts, pre_acts)

        if probe is not None and (step % cfg.checkpoint_every == 0):
            evaluate_checkpoint(values, step)
        if cfg.log_every and step % cfg.log_every == 0:
            payload = {"step": step, "loss": value}
            if adv_value is not None:
                payload["adversary_loss"] = adv_value
            _log_line(stream, **payload)

        values = values - cfg.primary_lr * total

        if full_batch and bundle is None:
            loss_history.append(value)
            if len(loss_history) > 100 and not warned_window:
                prev = loss_history[-101]
                if value > prev + 1e-8 * (1.0 + abs(prev)):
                    warnings.warn(
                        f"loss rose over a 100-step window at step {step} "
                        f"({prev:.6g} -> {value:.6g}); consider lowering primary_lr",
                        NonMonotoneLossWarning,
                        stacklevel=3,
                    )
                    warned_window = True
        if full_batch and cfg.early_stop is not None:
            patience, _ = cfg.early_stop
            if value < best_metric:
                best_metric = value
                no_improve = 0
            else:
                no_improve += 1
                if no_improve >= int(patience):
                    break

    evaluate_checkpoint(values, cfg.iterations)
    if best is not None:
        values = best[3]
    final = ParamVector(values=values, layout=params.layout)
    return scaler.absorb(spec, final)


def _loss_only(pred, labels, loss):
    return loss_value(pred, labels, loss)


def _minibatch_adversary(bundle, batch_rows, errors):
    """Per-batch adversary refresh on the batch slice of the cached design.

    Centering and residualized design columns come from full-training-set
    statistics; the least-squares refresh and error residualization use
    the batch rows only.
    """
    spec = bundle.spec
    n = errors.size
    if spec.family == "covariance_penalty":
        centered = bundle.state.centered[batch_rows]
        s = float(centered @ errors)
        return np.sign(s) * centered, abs(s)
    design = bundle.design[batch_rows]
    e_in = errors
    if bundle.controls_block is not None:
        block = bundle.controls_block[batch_rows]
        e_in = errors - block @ np.linalg.lstsq(block, errors, rcond=None)[0]
    gamma = np.linalg.lstsq(design, e_in, rcond=None)[0]
    resid = e_in - design @ gamma
    grad = 2.0 / n * resid
    if bundle.controls_block is not None:
        block = bundle.controls_block[batch_rows]
        grad = grad - block @ np.linalg.lstsq(block, grad, rcond=None)[0]
    return grad, float(resid @ resid) / n


def train_standard(spec: ModelSpec, data: Dataset, cfg: TrainConfig,
                   loss: str = "auto", log_stream=None) -> ParamVector:
    """Plain gradient training on the labeled rows.

    Returns the parameters after the configured number of steps (or an
    early stop). Feature standardization happens internally and is folded
    back into the returned parameters, which therefore consume raw
    features.
    """
    return _train(spec, data, cfg, loss, adv=None, log_stream=log_stream)


def train_adversarial(spec: ModelSpec, data: Dataset, cfg: TrainConfig,
                      loss: str, adv: AdversarySpec, log_stream=None) -> ParamVector:
    """Alternating adversarial training on the labeled rows.

    Each iteration runs a forward pass, recomputes prediction errors,
    updates the adversary (once, or ``cfg.adversary_steps`` times), and
    then takes one primary step on (primary loss - alpha * adversary
    loss). With ``alpha == 0`` this is exactly :func:`train_standard`.
    """
    if adv is None or adv.alpha == 0:
        return _train(spec, data, cfg, loss, adv=None, log_stream=log_stream)
    return _train(spec, data, cfg, loss, adv=adv, log_stream=log_stream)


def fold_split(n_items: int, folds: int, seed: int):
    """Deterministic disjoint fold positions covering range(n_items)."""
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if folds > n_items:
        raise InsufficientLabels(f"{folds} folds exceed {n_items} labeled rows")
    perm = spawn_rng(seed, _TAG_FOLD).permutation(n_items)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cross_fit(spec: ModelSpec, data: Dataset, cfg: TrainConfig,
              loss: str = "auto", adv: AdversarySpec = None) -> CrossFitResult:
    """K-fold cross-fitting: every labeled row predicted out of fold.

    Fold assignment is deterministic in the seed; each fold's model trains
    on the other folds only, so the assembled predictions carry honest
    errors for bias testing.
    """
    labeled = data.labeled_indices
    parts = fold_split(labeled.size, cfg.folds, cfg.seed)
    predictions = np.empty(labeled.size)
    fold_assignment = np.empty(labeled.size, dtype=np.int64)
    models = []
    for f, test_pos in enumerate(parts):
        mask = np.ones(labeled.size, dtype=bool)
        mask[test_pos] = False
        fold_data = data.with_labels(labeled[mask])
        fold_cfg = replace(cfg, seed=spawn_seed(cfg.seed, _TAG_FOLD_SEED, f))
        if adv is not None and adv.alpha > 0:
            params = train_adversarial(spec, fold_data, fold_cfg, loss, adv)
        else:
            params = train_standard(spec, fold_data, fold_cfg, loss)
        models.append(params)
        predictions[test_pos] = forward(spec, params, data.features[labeled[test_pos]])
        fold_assignment[test_pos] = f
    y_lab = data.y[labeled]
    mse = float(np.mean((predictions - y_lab) ** 2))
    accuracy = None
    if spec.output == "probability":
        accuracy = float(np.mean((predictions >= 0.5) == (y_lab >= 0.5)))
    return CrossFitResult(
        predictions=predictions,
        fold_assignment=fold_assignment,
        labeled_indices=labeled,
        per_fold_models=models,
        mse=mse,
        accuracy=accuracy,
    )


def oof_bias_test(data: Dataset, fit: CrossFitResult, se_kind: str = "classical"):
    """Bias test on the out-of-fold errors against [1, treatment, controls]."""
    labeled = fit.labeled_indices
    errors = fit.predictions - data.y[labeled]
    cols = [data.treatment_matrix[labeled]]
    if data.controls is not None:
        cols.append(data.controls[labeled])
    return bias_test(errors, np.hstack(cols), se_kind=se_kind, add_intercept=True)


def _as_adv_spec(adv_family) -> AdversarySpec:
    if isinstance(adv_family, AdversarySpec):
        return adv_family
    return AdversarySpec(family=str(adv_family))


def tune_alpha(spec: ModelSpec, data: Dataset, cfg: TrainConfig, loss: str,
               adv_family, alpha_grid, jobs: int = 1):
    """Cross-fitted sweep over adversary weights.

    For every grid value the labeled data is cross-fitted with that
    weight, recording out-of-fold MSE and the bias test on the out-of-fold
    errors. The selected weight is the smallest one whose treatment-slope
    bias is statistically indistinguishable from zero (p > 0.1); if none
    qualifies, the weight with the smallest absolute bias wins. The full
    table is returned so the caller can overrule.

    Returns
    -------
    (alpha_star, rows)
        ``rows`` is a list of dicts with keys alpha, oof_mse, accuracy,
        gamma, gamma_se, gamma_p.
    """
    template = _as_adv_spec(adv_family)
    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise ValueError("alpha_grid is empty")
    if any(a < 0 for a in grid):
        raise ValueError("alpha values must be nonnegative")

    def one(alpha: float) -> dict:
        adv = replace(template, alpha=alpha)
        fit = cross_fit(spec, data, cfg, loss, adv=adv if alpha > 0 else None)
        bias = oof_bias_test(data, fit)
        return {
            "alpha": alpha,
            "oof_mse": fit.mse,
            "accuracy": fit.accuracy,
            "gamma": float(bias.gamma_hat[1]),
            "gamma_se": float(bias.se[1]),
            "gamma_p": float(bias.p_values[1]),
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, grid))
    else:
        rows = [one(a) for a in grid]
    ordered = sorted(rows, key=lambda r: r["alpha"])
    qualifying = [r for r in ordered if r["gamma_p"] > 0.1]
    if qualifying:
        alpha_star = qualifying[0]["alpha"]
    else:
        alpha_star = min(ordered, key=lambda r: abs(r["gamma"]))["alpha"]
    return alpha_star, rows


def bootstrap_train(n_replicates: int, pipeline, labeled_indices, seed: int,
                    jobs: int = 1) -> BootstrapDistribution:
    """Bootstrap over model training.

    Each replicate resamples the labeled index set with replacement
    (evaluation rows stay fixed inside the pipeline's closure) and calls
    ``pipeline(resampled_indices, replicate_seed)``, which must retrain,
    re-predict, and return the downstream coefficient. A replicate failure
    aborts the whole bootstrap with the replicate index attached; nothing
    is silently skipped.
    """
    if n_replicates < 2:
        raise ValueError("n_replicates must be at least 2")
    labeled_indices = np.asarray(labeled_indices, dtype=np.int64)

    def one(b: int) -> float:
        rng = spawn_rng(seed, _TAG_BOOT, b)
        idx = rng.choice(labeled_indices, size=labeled_indices.size, replace=True)
        rep_seed = int(rng.integers(0, 1 << 62))
        try:
            return float(pipeline(idx, rep_seed))
        except Exception as exc:
            raise ReplicateFailure(b, repr(exc)) from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            draws = list(pool.map(one, range(n_replicates)))
    else:
        draws = [one(b) for b in range(n_replicates)]
    return BootstrapDistribution(draws=np.asarray(draws))


@dataclass
class MethodOutcome:
    """Point estimates and metrics from one canonical (non-bootstrap) run."""

    method: str
    beta_hat: float
    se_naive: float
    gamma: float = None
    gamma_se: float = None
    gamma_p: float = None
    oof_mse: float = None
    accuracy: float = None


def _default_adv_specs(alphas=None) -> dict:
    alphas = alphas or {}
    return {
        "adv_slr": AdversarySpec(family="slr", alpha=float(alphas.get("adv_slr", 1.0))),
        "adv_cov": AdversarySpec(
            family="covariance_penalty", alpha=float(alphas.get("adv_cov", 1.0))
        ),
    }


def evaluate_method(method: str, spec: ModelSpec, data: Dataset, cfg: TrainConfig,
                    loss: str = "auto", adv_specs: dict = None,
                    eval_design: DesignMatrix = None, with_bias_test: bool = True) -> MethodOutcome:
    """Run one estimation method end to end on the current labeled rows.

    Prediction-based methods train on the labeled rows, predict every row,
    and regress the predictions on [1, treatment, controls] over the full
    sample; ``ground_truth`` regresses the observed outcome over the
    labeled rows only. ``correct`` subtracts the cross-fitted bias-test
    slope from the baseline coefficient.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    adv_specs = adv_specs or _default_adv_specs()
    if eval_design is None:
        eval_design = regression_design(data)

    if method == "ground_truth":
        fit = ols_fit(regression_design(data, data.labeled_indices),
                      data.y[data.labeled_indices])
        return MethodOutcome(method=method, beta_hat=float(fit.coefficients[1]),
                             se_naive=float(fit.se[1]))

    if method in ("baseline", "correct"):
        params = train_standard(spec, data, cfg, loss)
        adv = None
    else:
        adv = adv_specs[method]
        params = train_adversarial(spec, data, cfg, loss, adv)

    predictions = forward(spec, params, data.features)
    fit = ols_fit(eval_design, predictions)
    beta = float(fit.coefficients[1])
    outcome = MethodOutcome(method=method, beta_hat=beta, se_naive=float(fit.se[1]))

    if with_bias_test or method == "correct":
        cf = cross_fit(spec, data, cfg, loss, adv=adv)
        bias = oof_bias_test(data, cf)
        outcome.gamma = float(bias.gamma_hat[1])
        outcome.gamma_se = float(bias.se[1])
        outcome.gamma_p = float(bias.p_values[1])
        outcome.oof_mse = cf.mse
        outcome.accuracy = cf.accuracy
        if method == "correct":
            outcome.beta_hat = beta - outcome.gamma
    return outcome


def bootstrap_methods(methods, spec: ModelSpec, data: Dataset, n_replicates: int,
                      seed: int, cfg: TrainConfig, loss: str = "auto",
                      adv_specs: dict = None, jobs: int = 1) -> dict:
    """Paired bootstrap over training for several methods at once.

    Every replicate resamples the labeled rows once and evaluates all
    requested methods on that same resample, sharing the baseline model
    between ``baseline`` and ``correct``. Returns one
    :class:`BootstrapDistribution` per method.
    """
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    if n_replicates < 2:
        raise ValueError("n_replicates must be at least 2")
    adv_specs = adv_specs or _default_adv_specs()
    labeled = data.labeled_indices
    eval_design = regression_design(data)

    def one(b: int) -> dict:
        rng = spawn_rng(seed, _TAG_BOOT, b)
        idx = rng.choice(labeled, size=labeled.size, replace=True)
        rep_seed = int(rng.integers(0, 1 << 62))
        rep_cfg = replace(cfg, seed=rep_seed)
        train_data = data.take(idx)
        out = {}
        try:
            baseline_params = None
            if "baseline" in methods or "correct" in methods:
                baseline_params = train_standard(spec, train_data, rep_cfg, loss)
                predictions = forward(spec, baseline_params, data.features)
                beta = float(ols_fit(eval_design, predictions).coefficients[1])
                if "baseline" in methods:
                    out["baseline"] = beta
                if "correct" in methods:
                    cf = cross_fit(spec, train_data, rep_cfg, loss)
                    bias = oof_bias_test(train_data, cf)
                    out["correct"] = beta - float(bias.gamma_hat[1])
            for name in ("adv_slr", "adv_cov"):
                if name in methods:
                    params = train_adversarial(spec, train_data, rep_cfg, loss,
                                               adv_specs[name])
                    predictions = forward(spec, params, data.features)
                    out[name] = float(ols_fit(eval_design, predictions).coefficients[1])
            if "ground_truth" in methods:
                fit = ols_fit(regression_design(train_data), train_data.y)
                out["ground_truth"] = float(fit.coefficients[1])
        except Exception as exc:
            raise ReplicateFailure(b, repr(exc)) from exc
        return out

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, range(n_replicates)))
    else:
        results = [one(b) for b in range(n_replicates)]
    return {
        m: BootstrapDistribution(draws=np.asarray([r[m] for r in results]))
        for m in methods
    }


def progressive_label_study(data: Dataset, sample_sizes, methods, draws: int,
                            seed: int, spec: ModelSpec = None,
                            cfg: TrainConfig = None, loss: str = "auto",
                            adv_specs: dict = None, jobs: int = 1) -> ExperimentReport:
    """Full pipeline comparison across labeled-sample sizes.

    For each size J a deterministic subset of the labeled pool is treated
    as the labeled set; every requested method runs once for point
    estimates and ``draws`` more times under the training bootstrap for
    spread. Per-replicate coefficients land in the report's
    ``coefficient_draws`` table so distribution plots need no rerun.
    """
    spec = spec or default_model_spec(data)
    cfg = cfg or TrainConfig(seed=seed)
    adv_specs = adv_specs or _default_adv_specs()
    methods = list(methods)
    pool = data.labeled_indices
    sizes = [int(j) for j in sample_sizes]
    if max(sizes) > pool.size:
        raise InsufficientLabels(
            f"largest study size {max(sizes)} exceeds the labeled pool {pool.size}"
        )
    records = []
    draw_rows = []
    for size in sizes:
        rows = np.sort(spawn_rng(seed, _TAG_STUDY, size).choice(pool, size=size, replace=False))
        study_data = data.with_labels(rows)
        dists = bootstrap_methods(methods, spec, study_data, draws, spawn_seed(seed, _TAG_STUDY, size, 1),
                                  cfg, loss, adv_specs, jobs=jobs)
        for method in methods:
            start = time.perf_counter()
            outcome = evaluate_method(method, spec, study_data, cfg, loss, adv_specs,
                                      with_bias_test=method != "ground_truth")
            elapsed = time.perf_counter() - start
            dist = dists[method]
            records.append(MethodRecord(
                method=method,
                J=size,
                beta_hat=outcome.beta_hat,
                se=dist.sd,
                se_kind="bootstrap",
                seed=seed,
                gamma=outcome.gamma,
                gamma_se=outcome.gamma_se,
                gamma_p=outcome.gamma_p,
                oof_mse=outcome.oof_mse,
                accuracy=outcome.accuracy,
                runtime_s=elapsed,
            ))
            for b, value in enumerate(dist.draws):
                draw_rows.append({"method": method, "J": size, "replicate": b,
                                  "beta": float(value)})
    return ExperimentReport(
        command="study",
        seed=seed,
        config={"sample_sizes": sizes, "methods": methods, "draws": draws},
        records=records,
        tables={"coefficient_draws": draw_rows},
        meta={"se_caveats": ["iid sampling assumed; no spatial or serial adjustment"]},
    )


def default_model_spec(data: Dataset) -> ModelSpec:
    """Logistic for binary outcomes, linear otherwise."""
    y = data.y[data.labeled_indices]
    binary = np.isin(y, (0.0, 1.0)).all()
    if binary:
        return ModelSpec(architecture="logistic", input_dim=data.features.shape[1])
    return ModelSpec(architecture="linear", input_dim=data.features.shape[1])

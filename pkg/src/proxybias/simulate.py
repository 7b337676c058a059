"""Synthetic data-generating processes.

A calibrated synthetic pixel bank stands in for hand-labeled satellite
points: 24 noisy monotone transforms of a latent forest share, tuned so a
cross-fitted logistic model lands at a target accuracy. On top of the
bank sit the greening simulation (confounded binary treatment with
feature swaps), a continuous-treatment variant with an injectable error
gradient, and small DAG scenarios that wire prediction error to the
treatment through different paths.

Every generator is bitwise reproducible from (scenario, n, seed) plus the
calibrated parameters recorded in its metadata: calibration pilots draw
from streams that never touch the generation stream.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .exceptions import CalibrationFailed, DimensionMismatch, InsufficientLabels
from .model import ModelSpec
from .train import TrainConfig, cross_fit, oof_bias_test
from .util import spawn_rng

logger = logging.getLogger(__name__)

N_BANK_FEATURES = 24
GREENNESS_COLS = tuple(range(8))

_TAG_BANK = 61
_TAG_GREEN = 62
_TAG_CONT = 63
_TAG_DAG = 64
_TAG_PILOT = 65
_TAG_CTRL = 66

DAG_SCENARIOS = ("classical", "outcome_induced", "confounder_induced", "treatment_induced")

# Default error noise for the DAG scenarios; with the unit-variance
# confounder construction this puts the detectable-bias crossing for a
# 0.025 slope in the low thousands of labeled points.
DAG_ERROR_SD = 0.65

_PILOT_CFG = TrainConfig(primary_lr=1.0, iterations=500, folds=3)
_PILOT_LOSS = "mse"


@dataclass(frozen=True)
class PixelBank:
    """Synthetic labeled pixels: features, forest share, binary label."""

    features: np.ndarray
    percent_forest: np.ndarray
    forest_label: np.ndarray
    noise_scale: float
    seed: int
    accuracy: float = None

    @property
    def n(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class SimulatedDataset:
    """A dataset plus the generator metadata needed to recreate it."""

    data: Dataset
    scenario: str
    seed: int
    true_beta: float
    params: dict
    w: np.ndarray = None
    predictions: np.ndarray = None


def _bank_columns(rng: np.random.Generator):
    # Per-column response curves, fixed given the column rng stream.
    slopes = np.empty(N_BANK_FEATURES)
    slopes[:8] = rng.uniform(0.8, 1.4, 8)          # greenness block
    slopes[8:16] = rng.uniform(-1.0, -0.4, 8)      # built-up style block
    slopes[16:] = rng.uniform(-0.25, 0.25, 8)      # weakly informative block
    offsets = rng.uniform(-0.5, 0.5, N_BANK_FEATURES)
    noise_sd = rng.uniform(0.8, 1.2, N_BANK_FEATURES)
    shapes = np.arange(N_BANK_FEATURES) % 3
    return slopes, offsets, noise_sd, shapes


def _bank_features(pf, slopes, offsets, noise_sd, shapes, noise_scale, rng):
    curves = np.empty((pf.size, N_BANK_FEATURES))
    for j in range(N_BANK_FEATURES):
        if shapes[j] == 0:
            base = pf
        elif shapes[j] == 1:
            base = pf**2
        else:
            base = np.sqrt(pf)
        curves[:, j] = offsets[j] + slopes[j] * base
    # Noise is mostly shared across columns (one scene-level factor), so
    # calibrating overall accuracy down does not wash out per-column signal.
    shared = rng.standard_normal(pf.size)
    idio = rng.standard_normal((pf.size, N_BANK_FEATURES))
    noise = 0.88 * shared[:, None] + np.sqrt(1.0 - 0.88**2) * idio
    return curves + noise_scale * noise_sd * noise


def _holdout_accuracy(features, labels, seed) -> float:
    from .train import train_standard
    from .model import forward

    n = labels.size
    half = n // 2
    order = spawn_rng(seed, _TAG_PILOT, 1).permutation(n)
    train_rows, test_rows = order[:half], order[half:]
    data = Dataset(features=features, treatment=np.zeros(n), y=labels)
    spec = ModelSpec(architecture="logistic", input_dim=features.shape[1])
    cfg = replace(_PILOT_CFG, seed=seed)
    params = train_standard(spec, data.with_labels(train_rows), cfg, _PILOT_LOSS)
    pred = forward(spec, params, features[test_rows])
    return float(np.mean((pred >= 0.5) == (labels[test_rows] >= 0.5)))


def make_pixel_bank(n: int, seed: int, accuracy_target: float = 0.75,
                    noise_scale: float = None) -> PixelBank:
    """Generate the synthetic pixel bank.

    When ``noise_scale`` is None a bisection on a global noise multiplier
    calibrates a pilot logistic holdout accuracy to
    ``accuracy_target`` +/- 0.015, raising :class:`CalibrationFailed`
    after a bounded number of attempts. Passing a scale skips calibration.
    """
    if n < 100:
        raise InsufficientLabels("pixel bank needs at least 100 rows")
    gen = spawn_rng(seed, _TAG_BANK, 0)
    pf = gen.beta(0.9, 1.1, size=n)
    slopes, offsets, noise_sd, shapes = _bank_columns(spawn_rng(seed, _TAG_BANK, 1))
    labels = (pf >= 0.5).astype(np.float64)

    def build(scale, stream_key):
        rng = spawn_rng(seed, _TAG_BANK, 2, stream_key)
        return _bank_features(pf, slopes, offsets, noise_sd, shapes, scale, rng)

    if noise_scale is not None:
        features = build(float(noise_scale), 0)
        return PixelBank(features=features, percent_forest=pf, forest_label=labels,
                         noise_scale=float(noise_scale), seed=seed)

    lo, hi = 0.05, 24.0
    accuracy = None
    scale = None
    for attempt in range(26):
        mid = np.sqrt(lo * hi)
        features = build(mid, 0)
        accuracy = _holdout_accuracy(features, labels, spawn_rng(seed, _TAG_PILOT, 2, attempt).integers(1 << 31))
        if abs(accuracy - accuracy_target) <= 0.015:
            scale = mid
            break
        if accuracy > accuracy_target:
            lo = mid  # more noise lowers accuracy
        else:
            hi = mid
    if scale is None:
        raise CalibrationFailed(
            f"could not reach accuracy {accuracy_target:+.3f} (last {accuracy:.3f})"
        )
    features = build(scale, 0)
    return PixelBank(features=features, percent_forest=pf, forest_label=labels,
                     noise_scale=float(scale), seed=seed, accuracy=float(accuracy))


def _greening_assign(bank: PixelBank, n: int, seed: int, swap_prob: float):
    rng = spawn_rng(seed, _TAG_GREEN, 0)
    w = rng.poisson(1.0, size=n).astype(np.float64)
    x = (rng.uniform(size=n) < np.maximum(1.0 - w / 4.0, 0.0)).astype(np.float64)
    rows = rng.choice(bank.n, size=n, replace=False)
    y = bank.forest_label[rows]
    pf_own = bank.percent_forest[rows]
    features = bank.features[rows].copy()

    order = np.argsort(bank.percent_forest, kind="stable")
    pf_sorted = bank.percent_forest[order]
    # Count of strictly greener bank rows for every sampled row.
    first_greater = np.searchsorted(pf_sorted, pf_own, side="right")
    coins = rng.uniform(size=n)
    draw = rng.uniform(size=n)
    swap = (w > 0) & (coins < swap_prob)
    n_no_greener = int(np.sum(swap & (first_greater >= bank.n)))
    can_swap = swap & (first_greater < bank.n)
    span = bank.n - first_greater[can_swap]
    pick = first_greater[can_swap] + np.floor(draw[can_swap] * span).astype(np.int64)
    pick = np.minimum(pick, bank.n - 1)
    features[can_swap] = bank.features[order[pick]]
    meta = {
        "n_swapped": int(can_swap.sum()),
        "n_no_greener": n_no_greener,
        "source_rows": rows,
    }
    return features, x, y, w, meta


def simulate_greening(bank: PixelBank, n: int = 20000, seed: int = 0,
                      swap_prob: float = None, target_bias: float = 0.025) -> SimulatedDataset:
    """Confounded greening simulation with a binary treatment.

    A latent count W lowers the treatment propensity max(1 - W/4, 0); rows
    with W > 0 have their features swapped for those of a uniformly drawn
    strictly-greener bank row while keeping their own label, so prediction
    errors end up correlated with the treatment although the true effect
    is zero. Rows already at the maximum forest share keep their own
    features; the count is logged and recorded.

    ``swap_prob`` scales how often eligible rows are swapped. When None it
    is calibrated by a pilot cross-fit so the induced error slope is close
    to ``target_bias`` in magnitude; the realized value lands in
    ``params["swap_prob"]``, and rerunning with that value reproduces the
    dataset bitwise.
    """
    if bank.n < n:
        raise InsufficientLabels(f"bank has {bank.n} rows, need at least {n}")
    calibrated = None
    if swap_prob is None:
        probe = _greening_dataset(bank, n, seed, 1.0)
        pilot_cfg = replace(_PILOT_CFG, seed=spawn_rng(seed, _TAG_PILOT, 3).integers(1 << 31))
        spec = ModelSpec(architecture="logistic", input_dim=N_BANK_FEATURES)
        fit = cross_fit(spec, probe.data, pilot_cfg, _PILOT_LOSS)
        slope = float(oof_bias_test(probe.data, fit).gamma_hat[1])
        if abs(slope) <= abs(target_bias):
            swap_prob = 1.0
        else:
            swap_prob = float(abs(target_bias) / abs(slope))
        calibrated = {"pilot_gamma_full_swap": slope, "target_bias": target_bias}
    result = _greening_dataset(bank, n, seed, float(swap_prob))
    if calibrated:
        params = dict(result.params)
        params.update(calibrated)
        result = replace(result, params=params)
    if result.params["n_no_greener"]:
        logger.info("greening swap skipped %d rows with no greener pixel",
                    result.params["n_no_greener"])
    return result


def _greening_dataset(bank, n, seed, swap_prob) -> SimulatedDataset:
    features, x, y, w, meta = _greening_assign(bank, n, seed, swap_prob)
    data = Dataset(features=features, treatment=x, y=y)
    params = {
        "n": n,
        "swap_prob": swap_prob,
        "bank_seed": bank.seed,
        "bank_noise_scale": bank.noise_scale,
        "n_swapped": meta["n_swapped"],
        "n_no_greener": meta["n_no_greener"],
    }
    return SimulatedDataset(data=data, scenario="sim1_greening", seed=seed,
                            true_beta=0.0, params=params, w=w)


def _continuous_assign(bank, n, seed, shift_scale):
    rng = spawn_rng(seed, _TAG_CONT, 0)
    x = rng.normal(1.6, 0.8, size=n)
    slope = 0.1875
    p = np.clip(0.5 + slope * (x - 1.6), 0.05, 0.95)
    u = rng.uniform(size=n)
    y = (u <= p).astype(np.float64)
    ones = np.flatnonzero(bank.forest_label == 1.0)
    zeros = np.flatnonzero(bank.forest_label == 0.0)
    pick_one = ones[rng.integers(0, ones.size, size=n)]
    pick_zero = zeros[rng.integers(0, zeros.size, size=n)]
    q = np.clip(p + shift_scale * (x - x.mean()), 0.02, 0.98)
    y_seen = u <= q
    rows = np.where(y_seen, pick_one, pick_zero)
    features = bank.features[rows]
    data = Dataset(features=features, treatment=x, y=y)
    return data, slope


def _continuous_pilot_slope(bank, n, seed, shift_scale, key) -> float:
    data, _ = _continuous_assign(bank, n, seed, shift_scale)
    pilot_cfg = replace(_PILOT_CFG, seed=spawn_rng(seed, _TAG_PILOT, 4, key).integers(1 << 31))
    spec = ModelSpec(architecture="logistic", input_dim=N_BANK_FEATURES)
    fit = cross_fit(spec, data, pilot_cfg, _PILOT_LOSS)
    return float(oof_bias_test(data, fit).gamma_hat[1])


def simulate_continuous_treatment(bank: PixelBank, n: int, seed: int,
                                  gamma_err: float) -> SimulatedDataset:
    """Continuous treatment with an injectable differential-error gradient.

    The treatment plays the role of a log distance; the binary outcome
    follows a clipped linear probability in it. Features are drawn from
    bank rows matching a corrupted label whose probability is shifted by
    an amount proportional to the centered treatment, so a model trained
    on them makes errors with a gradient in the treatment. The shift scale
    is pilot-calibrated (two secant steps) so the cross-fitted error slope
    is close to ``gamma_err``; zero injects nothing.
    """
    shift = 0.0
    pilot = {}
    if gamma_err != 0.0:
        probe_scale = 0.15 * np.sign(gamma_err)
        slope_probe = _continuous_pilot_slope(bank, n, seed, probe_scale, 0)
        if abs(slope_probe) < 1e-6:
            raise CalibrationFailed("pilot failed to register an error gradient")
        shift = probe_scale * gamma_err / slope_probe
        slope_check = _continuous_pilot_slope(bank, n, seed, shift, 1)
        if abs(slope_check) > 1e-6:
            shift = float(np.clip(shift * gamma_err / slope_check, -0.6, 0.6))
        pilot = {"pilot_slope_probe": slope_probe, "pilot_slope_check": slope_check}
    data, true_beta = _continuous_assign(bank, n, seed, shift)
    params = {
        "n": n,
        "gamma_err": gamma_err,
        "shift_scale": shift,
        "bank_seed": bank.seed,
        "bank_noise_scale": bank.noise_scale,
    }
    params.update(pilot)
    return SimulatedDataset(data=data, scenario="continuous_distance", seed=seed,
                            true_beta=true_beta, params=params)


def simulate_dag(scenario: str, n: int, seed: int, strength: float = 0.025,
                 error_sd: float = DAG_ERROR_SD) -> SimulatedDataset:
    """Small mechanistic scenarios wiring prediction error to the treatment.

    ``strength`` is the implied bias slope (error regressed on treatment)
    except for the classical scenario, where the error is independent of
    everything and the implied slope is zero. The returned dataset carries
    the mechanistic predictions directly (outcome plus error), so bias
    tests can run without training a model; the feature columns are noisy
    outcome proxies kept only for API uniformity.
    """
    if scenario not in DAG_SCENARIOS:
        raise DimensionMismatch(
            f"unknown scenario {scenario!r}; expected one of {DAG_SCENARIOS}"
        )
    rng = spawn_rng(seed, _TAG_DAG, DAG_SCENARIOS.index(scenario))
    w = rng.standard_normal(n)
    implied = float(strength)
    if scenario == "classical":
        x = rng.standard_normal(n)
        true_beta = 0.5
        y = true_beta * x + rng.standard_normal(n)
        errors = error_sd * rng.standard_normal(n)
        implied = 0.0
    elif scenario == "outcome_induced":
        x = rng.standard_normal(n)
        true_beta = 0.5
        y = true_beta * x + rng.standard_normal(n)
        # Cov(errors, x) = (strength / beta) * Cov(y, x) = strength * Var(x).
        errors = (strength / true_beta) * (y - y.mean()) + error_sd * rng.standard_normal(n)
    elif scenario == "confounder_induced":
        x = w + rng.standard_normal(n)
        true_beta = 0.0
        y = rng.standard_normal(n)
        errors = 2.0 * strength * w + error_sd * rng.standard_normal(n)
    else:  # treatment_induced
        x = rng.standard_normal(n)
        w = x + rng.standard_normal(n)
        true_beta = 0.0
        y = rng.standard_normal(n)
        errors = strength * w + error_sd * rng.standard_normal(n)
    predictions = y + errors
    features = y[:, None] + rng.standard_normal((n, 3))
    data = Dataset(features=features, treatment=x, y=y)
    params = {"n": n, "strength": float(strength), "error_sd": float(error_sd),
              "implied_gamma": implied}
    return SimulatedDataset(data=data, scenario=f"dag_{scenario}", seed=seed,
                            true_beta=true_beta, params=params, w=w,
                            predictions=predictions)


def simulate_confounded_controls(n: int, seed: int, contamination: float = 0.3,
                                 n_features: int = 6) -> SimulatedDataset:
    """Controls-confounded continuous outcome for residualized adversaries.

    The treatment loads on a control; features carry the outcome signal
    plus a contamination along the treatment's residual (post-control)
    direction, so a model trained on them makes errors correlated with
    the residualized treatment. True treatment effect is zero given the
    control.
    """
    rng = spawn_rng(seed, _TAG_CTRL, 0)
    x2 = rng.standard_normal(n)
    resid_t = rng.standard_normal(n)
    x1 = 0.7 * x2 + np.sqrt(1.0 - 0.49) * resid_t
    signal = rng.standard_normal(n)
    y = signal + 0.3 * x2
    tilde = x1 - 0.7 * x2
    noise = rng.standard_normal((n, n_features))
    features = signal[:, None] + contamination * tilde[:, None] + 0.6 * noise
    data = Dataset(features=features, treatment=x1, y=y, controls=x2[:, None])
    params = {"n": n, "contamination": float(contamination), "n_features": n_features}
    return SimulatedDataset(data=data, scenario="confounded_controls", seed=seed,
                            true_beta=0.0, params=params)


def poisson_treatment_share() -> float:
    """Closed-form P(treated) when the propensity is max(1 - W/4, 0), W ~ Poisson(1)."""
    from math import exp, factorial

    return sum(exp(-1.0) / factorial(w) * (1.0 - w / 4.0) for w in range(4))

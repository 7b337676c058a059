"""Unbiased regression on machine-learned outcome variables.

Detect differential measurement error in model predictions (bias test and
power analysis), correct it after the fact, or prevent it during training
with an adversarial penalty on treatment-predictable errors.
"""

from .adversary import (
    AdversarySpec,
    AdversaryState,
    adversary_design,
    adversary_grad_wrt_errors,
    adversary_loss,
    adversary_step,
    init_adversary_state,
    make_residualized_design,
)
from .data import Dataset, read_dataset_csv, write_dataset_csv
from .diagnose import (
    BiasTestResult,
    CorrectedEstimate,
    PowerCurve,
    bias_correct,
    bias_test,
    decile_table,
    minimum_detectable_bias,
    power_curve,
)
from .estimator import AdversarialDebiaser
from .model import (
    ModelSpec,
    ParamVector,
    forward,
    init_params,
    load_params,
    loss_and_grad,
    predict_error,
    save_params,
)
from .regress import (
    DesignMatrix,
    FitResult,
    IVSpec,
    Residualizer,
    fwl_residualize,
    hc_robust_vcov,
    ils_fit,
    ols_fit,
    regression_design,
    tsls_fit,
)
from .report import ExperimentReport, MethodRecord
from .simulate import (
    PixelBank,
    SimulatedDataset,
    make_pixel_bank,
    simulate_confounded_controls,
    simulate_continuous_treatment,
    simulate_dag,
    simulate_greening,
)
from .train import (
    BootstrapDistribution,
    CrossFitResult,
    TrainConfig,
    bootstrap_methods,
    bootstrap_train,
    cross_fit,
    evaluate_method,
    oof_bias_test,
    progressive_label_study,
    train_adversarial,
    train_standard,
    tune_alpha,
)

__version__ = "0.1.0"

__all__ = [
    "AdversarialDebiaser",
    "AdversarySpec",
    "AdversaryState",
    "BiasTestResult",
    "BootstrapDistribution",
    "CorrectedEstimate",
    "CrossFitResult",
    "Dataset",
    "DesignMatrix",
    "ExperimentReport",
    "FitResult",
    "IVSpec",
    "MethodRecord",
    "ModelSpec",
    "ParamVector",
    "PixelBank",
    "PowerCurve",
    "Residualizer",
    "SimulatedDataset",
    "TrainConfig",
    "adversary_design",
    "adversary_grad_wrt_errors",
    "adversary_loss",
    "adversary_step",
    "bias_correct",
    "bias_test",
    "bootstrap_methods",
    "bootstrap_train",
    "cross_fit",
    "decile_table",
    "evaluate_method",
    "forward",
    "fwl_residualize",
    "hc_robust_vcov",
    "ils_fit",
    "init_adversary_state",
    "init_params",
    "load_params",
    "loss_and_grad",
    "make_pixel_bank",
    "make_residualized_design",
    "minimum_detectable_bias",
    "oof_bias_test",
    "ols_fit",
    "power_curve",
    "predict_error",
    "progressive_label_study",
    "read_dataset_csv",
    "regression_design",
    "save_params",
    "simulate_confounded_controls",
    "simulate_continuous_treatment",
    "simulate_dag",
    "simulate_greening",
    "train_adversarial",
    "train_standard",
    "tsls_fit",
    "tune_alpha",
    "write_dataset_csv",
]

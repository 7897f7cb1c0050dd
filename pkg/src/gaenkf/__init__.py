"""Ensemble Kalman filtering of flood models with gauge levels and wet surface ratios.

Subpackages by concern:

- :mod:`gaenkf.hydro` explicit 2D diffusive-wave flood model;
- :mod:`gaenkf.observation` observation types and operators;
- :mod:`gaenkf.anamorphosis` empirical normal-score transform;
- :mod:`gaenkf.enkf` control vector, ensemble and stochastic EnKF cycle;
- :mod:`gaenkf.metrics` RMSE, contingency maps and CSI;
- :mod:`gaenkf.harness` twin experiments (FR / IDA / IGDA).
"""

from .anamorphosis import AnamorphosisFn, build, identity_fn, std_normal_quantile
from .enkf import (
    ControlLayout,
    ControlVector,
    CycleConfig,
    Ensemble,
    PriorSpec,
    analysis,
    enkf_update,
    forecast,
    init_ensemble,
    kalman_gain,
    run_cycle,
    transform_batch,
)
from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateDistributionError,
    NumericalBlowupError,
    SingularMatrixError,
)
from .harness import ExperimentConfig, RunReport, generate_truth, load_config, run_experiment
from .hydro import Grid, HydroState, PhysicalParams, SolverConfig, apply_control, run_window, step
from .metrics import ContingencyCounts, contingency, csi, rmse
from .observation import GaugeObs, ObservationBatch, Subdomain, WsrObs, model_equivalents

__version__ = "0.1.0"

__all__ = [
    "AnamorphosisFn", "build", "identity_fn", "std_normal_quantile",
    "ControlLayout", "ControlVector", "CycleConfig", "Ensemble", "PriorSpec", "analysis",
    "enkf_update", "forecast", "init_ensemble", "kalman_gain", "run_cycle", "transform_batch",
    "ConfigurationError", "ContractError", "DegenerateDistributionError",
    "NumericalBlowupError", "SingularMatrixError",
    "ExperimentConfig", "RunReport", "generate_truth", "load_config", "run_experiment",
    "Grid", "HydroState", "PhysicalParams", "SolverConfig", "apply_control", "run_window",
    "step",
    "ContingencyCounts", "contingency", "csi", "rmse",
    "GaugeObs", "ObservationBatch", "Subdomain", "WsrObs", "model_equivalents",
]

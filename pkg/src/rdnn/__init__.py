"""Robust deep ReLU network estimation of location functions for
multi-dimensional functional data."""

from rdnn.loss import LossSpec
from rdnn.sim import GridSpec, FunctionalSample, NoiseSpec, make_grid, simulate
from rdnn.contam import ContaminationSpec
from rdnn.network import NetworkParams
from rdnn.trainer import TrainConfig
from rdnn.estimator import ArchitectureConfig, FitResult, fit, fit_quantiles, predict, select_architecture

__all__ = [
    "LossSpec",
    "GridSpec",
    "FunctionalSample",
    "NoiseSpec",
    "make_grid",
    "simulate",
    "ContaminationSpec",
    "NetworkParams",
    "TrainConfig",
    "ArchitectureConfig",
    "FitResult",
    "fit",
    "fit_quantiles",
    "predict",
    "select_architecture",
]

__version__ = "0.1.0"

"""Global-local Gaussian process regression with twinning-selected global points."""
from .dataset import (DataError, Dataset, ScalerParams, apply_scaler, fit_scaler, invert_scaler,
                      load_csv, random_split)
from .gp_core import FitSettings, GPHyperParams, Prediction, fit_full_gp, fit_global, predict_full
from .kernels import CombinedKernel, GlobalKernelParams, LocalKernelParams, MixtureParams
from .linalg import NotPositiveDefinite
from .model import (TwinGPConfig, TwinGPModel, default_sizes, load_model, predict, predict_batch,
                    save_model, train)
from .spatial import covering_radius, energy_distance, twin_sample

__version__ = "0.1.0"

__all__ = [
    "DataError", "Dataset", "ScalerParams", "apply_scaler", "fit_scaler", "invert_scaler",
    "load_csv", "random_split", "FitSettings", "GPHyperParams", "Prediction", "fit_full_gp",
    "fit_global", "predict_full", "CombinedKernel", "GlobalKernelParams", "LocalKernelParams",
    "MixtureParams", "NotPositiveDefinite", "TwinGPConfig", "TwinGPModel", "default_sizes",
    "load_model", "predict", "predict_batch", "save_model", "train", "covering_radius",
    "energy_distance", "twin_sample",
]

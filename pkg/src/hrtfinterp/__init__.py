"""HRTF interpolation from neighboring measurements: a pointwise-convolution
interpolator calibrated by a conditioned residual network."""

from .baseline import LinearBaseline, linear_interp
from .evaluation import EvalReport, ModelPredictor, evaluate
from .formats import load_dataset, load_grid, write_dataset, write_grid
from .geometry import Grid, make_geographical_grid, make_quasi_uniform_grid
from .network import ModelParams, forward, init_params, load_checkpoint, save_checkpoint
from .spectra import Dataset, make_synthetic_dataset
from .training import TrainConfig, train

__all__ = [
    "Dataset",
    "EvalReport",
    "Grid",
    "LinearBaseline",
    "ModelParams",
    "ModelPredictor",
    "TrainConfig",
    "evaluate",
    "forward",
    "init_params",
    "linear_interp",
    "load_checkpoint",
    "load_dataset",
    "load_grid",
    "make_geographical_grid",
    "make_quasi_uniform_grid",
    "make_synthetic_dataset",
    "save_checkpoint",
    "train",
    "write_dataset",
    "write_grid",
]

"""Riemannian sample selection and RegGNN regression on connectomes."""

from .config import ExperimentConfig, SelectionConfig, SynthSpec, TrainConfig
from .data import Dataset, Subject, generate_synthetic, load_dataset, write_dataset
from .errors import ConvergenceError, NumericalError, ValidationError
from .harness import k_sweep, mae, rmse, run_experiment
from .reggnn import RegGnnModel, predict, train
from .selection import select_samples

__version__ = "0.1.0"

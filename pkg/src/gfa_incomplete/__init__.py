"""Group factor analysis with missing data, fitted by mean-field variational EM."""

from .dataset import DataError, GroupedDataset, ModalityMatrix
from .model import FitResult, Hyperparams, NumericalError, fit, fit_restarts

__all__ = [
    "DataError",
    "FitResult",
    "GroupedDataset",
    "Hyperparams",
    "ModalityMatrix",
    "NumericalError",
    "fit",
    "fit_restarts",
]

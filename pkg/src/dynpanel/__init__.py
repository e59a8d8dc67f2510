"""Two-step maximum score estimation for dynamic binary-choice panels with fixed effects."""

from .dgp import DgpSpec, design, simulate, true_params
from .errors import DataError, DynPanelError, NumericalError
from .estimator import EstimateResult, EstimationConfig, bandwidth, estimate
from .inference import BootstrapConfig, BootstrapResult, run_bootstrap
from .panel_data import ModelParams, PanelDataset, load_csv, save_csv, switcher_counts

__all__ = [
    "BootstrapConfig",
    "BootstrapResult",
    "DataError",
    "DgpSpec",
    "DynPanelError",
    "EstimateResult",
    "EstimationConfig",
    "ModelParams",
    "NumericalError",
    "PanelDataset",
    "bandwidth",
    "design",
    "estimate",
    "load_csv",
    "run_bootstrap",
    "save_csv",
    "simulate",
    "switcher_counts",
    "true_params",
]

__version__ = "0.1.0"

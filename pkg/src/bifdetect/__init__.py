"""Data-driven detection of local bifurcations via learned conjugacies."""
from .basis import PolyBasis, build_basis
from .conjugacy import FitOptions, FitResult, assemble, fit, objective, scaled_mse
from .detection import DetectionCurve, detect_curve, flag_bifurcation
from .dynamics import (
    ParamSystem,
    TargetLinearDynamics,
    flow,
    linearize_diag,
    matrix_exp,
    resonance_check,
)
from .kernels import BACKEND
from .koopman import scan, select_pair
from .sampling import OrbitDataset, generate_dataset, load_dataset, sample_initial, save_dataset
from .systems import get_system, linear_system, pitchfork_system

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DetectionCurve", "FitOptions", "FitResult", "OrbitDataset", "ParamSystem",
    "PolyBasis", "TargetLinearDynamics", "assemble", "build_basis", "detect_curve", "fit",
    "flag_bifurcation", "flow", "generate_dataset", "get_system", "linear_system",
    "linearize_diag", "load_dataset", "matrix_exp", "objective", "pitchfork_system",
    "resonance_check", "sample_initial", "save_dataset", "scaled_mse", "scan", "select_pair",
]

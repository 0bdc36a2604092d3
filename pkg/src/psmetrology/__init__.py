"""Post-selected qubit-meter metrology: forward model, Fisher bounds, estimators and sweeps."""
from .errors import (
    ConfigError,
    DegeneratePostSelection,
    EstimationError,
    InadequateGrid,
    MetrologyError,
)
from .estimator import EstimatorKind, estimate_from_meter, estimate_from_postselection, estimate_joint_mle
from .fisher import crb, fisher_total, quantum_fisher
from .forward import OpticalSetup, forward_point, mean_momentum, postselection_probability
from .qcore import SAME, SIGMA3_MODE, NoiseModel, PostSelectionMode, make_state, noise_from_visibilities
from .sampler import derive_seed, run_repetitions, sample_counts

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegeneratePostSelection",
    "EstimationError",
    "EstimatorKind",
    "InadequateGrid",
    "MetrologyError",
    "NoiseModel",
    "OpticalSetup",
    "PostSelectionMode",
    "SAME",
    "SIGMA3_MODE",
    "crb",
    "derive_seed",
    "estimate_from_meter",
    "estimate_from_postselection",
    "estimate_joint_mle",
    "fisher_total",
    "forward_point",
    "make_state",
    "mean_momentum",
    "noise_from_visibilities",
    "postselection_probability",
    "quantum_fisher",
    "run_repetitions",
    "sample_counts",
]

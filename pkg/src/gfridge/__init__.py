"""Exact finite-sample and limiting risk curves for gradient flow and ridge
regression on least squares, with numerical certificates for their
relative-risk bounds."""

__version__ = "0.1.0"

from .errors import (
    DegenerateInputError,
    DomainError,
    InputError,
    NumericError,
    PreconditionError,
    SingularityError,
)
from .spectral import SpectralData, decompose
from .estimators import TuningValue, gradient_flow_solution, ridge_solution, shrinkage_map
from .risk import PriorModel, RiskCurve, RiskFlavor, RiskPoint, risk_bayes, risk_curve, risk_fixed
from .asymptotics import MPLaw
from .bounds import BoundCertificate
from .experiments import ExperimentConfig, RatioSummary, run_experiment

__all__ = [
    "__version__",
    "BoundCertificate",
    "DegenerateInputError",
    "DomainError",
    "ExperimentConfig",
    "InputError",
    "MPLaw",
    "NumericError",
    "PreconditionError",
    "PriorModel",
    "RatioSummary",
    "RiskCurve",
    "RiskFlavor",
    "RiskPoint",
    "SingularityError",
    "SpectralData",
    "TuningValue",
    "decompose",
    "gradient_flow_solution",
    "ridge_solution",
    "risk_bayes",
    "risk_curve",
    "risk_fixed",
    "run_experiment",
    "shrinkage_map",
]

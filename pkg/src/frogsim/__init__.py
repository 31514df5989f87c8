"""Frog model with geometric lifetimes on complete graphs."""

__version__ = "0.1.0"

from .dists import EtaSpec, eta_pmf, initial_actives, sample_eta, sample_lifetime  # noqa: E402
from .errors import CappedRunError, ConfigError, NumericalError, SizeError  # noqa: E402
from .model import SimParams, TrialOutcome  # noqa: E402
from .rng import RngStream  # noqa: E402

__all__ = [
    "CappedRunError", "ConfigError", "EtaSpec", "NumericalError", "RngStream", "SimParams",
    "SizeError", "TrialOutcome", "eta_pmf", "initial_actives", "sample_eta", "sample_lifetime",
]

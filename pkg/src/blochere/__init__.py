"""Optical Bloch ensembles under broadband incoherent light, checked against Einstein's rate equation."""

__version__ = "0.1.0"

from .spectrum import SpectrumSpec  # noqa: E402
from .field import DriveConfig  # noqa: E402
from .ensemble import run_ensemble, estimate_correlations  # noqa: E402
from .ere import EREParams, solve_ere  # noqa: E402

__all__ = ["SpectrumSpec", "DriveConfig", "run_ensemble", "estimate_correlations", "EREParams",
           "solve_ere", "__version__"]

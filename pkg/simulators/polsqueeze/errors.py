"""
Exception hierarchy for PolSqueeze
Every error raised on purpose by the package derives from PolSqueezeError
"""

from typing import Any, Dict, Optional


class PolSqueezeError(Exception):
    """Base class for all package errors"""


class ConfigError(PolSqueezeError):
    """Invalid or incomplete experiment configuration"""


class DomainError(PolSqueezeError, ValueError):
    """Physical input outside its allowed domain"""


class ContractError(PolSqueezeError, ValueError):
    """Array shape does not match the simulation grid"""


class ValidationError(PolSqueezeError, ValueError):
    """Invalid nonlinear response model"""


class IntegrationError(PolSqueezeError):
    """Stochastic integration failed at a given propagation position"""

    def __init__(self, message: str, zeta: Optional[float] = None):
        if zeta is not None:
            message = f"{message} (zeta={zeta:.6g})"
        super().__init__(message)
        self.zeta = zeta


class StepSizeError(IntegrationError):
    """Step too large for the nonlinear phase bound"""


class AnalysisError(PolSqueezeError):
    """Ensemble statistics are degenerate or insufficient"""


class ExtrapolationError(AnalysisError):
    """Requested energy lies outside the simulated range"""


class FitError(PolSqueezeError):
    """Phase-noise fit could not be performed or did not converge"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AliasingWarning(UserWarning):
    """Spectral power is approaching the edge of the frequency grid"""

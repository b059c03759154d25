from typing import Any, Dict, Optional


class AlmostQuantumError(Exception):
    """Base class for every error raised by the toolkit"""


class ScenarioStructureError(AlmostQuantumError, ValueError):
    """Shapes, ranges or sizes that do not fit the scenario"""


class InvalidCGError(AlmostQuantumError, ValueError):
    """Collins-Gisin coefficients that reconstruct a negative probability"""


class BoxValidationError(AlmostQuantumError, ValueError):
    """A box that fails normalization, positivity or no-signalling"""


class NotPSDError(AlmostQuantumError, ValueError):
    pass


class ZeroProbabilityError(AlmostQuantumError, ValueError):
    pass


class OrthogonalityError(AlmostQuantumError, ValueError):
    pass


class SolverError(AlmostQuantumError, RuntimeError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InconsistentOptimumError(AlmostQuantumError, RuntimeError):
    """The box rebuilt from a solver optimum is not a valid box"""


class ProblemStructureError(AlmostQuantumError, ValueError):
    """Conic problem whose blocks or constraints reference unknown variables or are not symmetric"""

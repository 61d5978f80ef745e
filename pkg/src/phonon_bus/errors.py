"""Exception hierarchy shared across the package."""


class PhononBusError(Exception):
    """Base class for all errors raised by phonon_bus."""


class HilbertSpaceError(PhononBusError, ValueError):
    """Operator/state built on an incompatible or mis-indexed space."""


class ConvergenceError(PhononBusError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FrequencyCollisionError(PhononBusError, ValueError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class NumericalContractError(PhononBusError, RuntimeError):
    """A numerical guarantee (norm, truncation, resolution) was violated."""


class NormDriftError(NumericalContractError):
    pass


class TruncationLeakageError(NumericalContractError):
    pass


class UnderResolvedGridError(NumericalContractError, ValueError):
    def __init__(self, message, omega_max=None):
        super().__init__(message)
        self.omega_max = omega_max


class TruncationWarning(UserWarning):
    """Fock cutoff may be too small for the requested displacement."""


class RegimeWarning(UserWarning):
    """Parameters sit outside the regime where an approximation is valid."""

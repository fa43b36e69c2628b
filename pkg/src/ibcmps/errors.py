"""Exception hierarchy shared by all modules."""


class IbcError(Exception):
    """Base class for all errors raised by this package."""


class LabelError(IbcError):
    """An index label is missing, duplicated, or otherwise invalid."""


class DimensionError(IbcError):
    """Index extents of contracted or combined tensors do not match."""


class ConvergenceError(IbcError):
    """An iterative solver did not reach its tolerance within the cap."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CanonicalizationError(IbcError):
    """Canonical form could not be established (e.g. rank-deficient state)."""


class UnsupportedHamiltonianError(IbcError):
    """MPO structure outside what the boundary recursion supports."""


class AnnihilationError(IbcError):
    """A local operator annihilated the state (zero resulting norm)."""


class NumericalError(IbcError):
    """A quantity that must be real/Hermitian/unitary failed its check."""


class ConfigError(IbcError):
    """Invalid run configuration."""

"""Exception and warning classes shared across the package."""


class QuenchError(Exception):
    """Base class for all errors raised by quenchtopo."""


class ConfigurationError(QuenchError):
    """Invalid model family, parameter, or scenario file."""


class GaplessError(QuenchError):
    """A Bloch vector vanishes where a gap is required."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class HarmonicRangeError(QuenchError):
    """Hopping range exceeds what the lattice builder supports."""


class AmbiguousFillingError(QuenchError):
    """Zero-energy single-particle states make half filling ambiguous."""


class DimensionError(QuenchError):
    """Shape mismatch or a Hilbert space too large to build."""


class NumericalError(QuenchError):
    """An iterative or numerical routine failed to reach its tolerance."""


class SingularPointWarning(RuntimeWarning):
    """A quadrature node hit an exact zero of the Loschmidt integrand."""


class NearFixedMomentumWarning(RuntimeWarning):
    """Pre- and post-quench unit vectors are almost, but not exactly, collinear."""


class SaturationWarning(RuntimeWarning):
    """A return amplitude underflowed and its logarithm was capped."""


class UndefinedInvariantError(NumericalError):
    """A topological invariant is ill-defined because its defining sign vanishes."""

"""Exception types shared across the package."""


class PoseMfaError(Exception):
    """Base class for all package errors."""


class InputError(PoseMfaError):
    """Bad user input (files, indices, configuration). CLI exit code 2."""


class NumericalError(PoseMfaError):
    """Numerical failure during fitting or evaluation. CLI exit code 3."""


class ParseError(InputError):
    """Malformed mesh file."""


class CorrespondenceError(InputError):
    """Shapes in a sequence disagree in vertex count or connectivity."""


class TooFewShapes(InputError):
    """A training sequence needs at least two shapes."""


class IoError(InputError):
    """Failed to read or write an output file."""


class IndexOutOfRange(InputError):
    """Shape or part index outside the valid range."""


class DegenerateExtent(InputError):
    """Joint bounding box has zero extent along every axis."""


class SingularCovariance(NumericalError):
    """A covariance block is not invertible even after the noise floor."""


class EmptyComponent(NumericalError):
    """A mixture component lost all of its responsibility mass."""


class NegativeEigenvalue(NumericalError):
    """A covariance eigenvalue is negative beyond tolerance."""


class AllZeroLikelihood(NumericalError):
    """Every component underflowed for some data vector (log-space guard)."""


class DegenerateConfiguration(NumericalError):
    """Point set too degenerate for rigid alignment."""

"""Exception and warning types raised by parampca."""


class PpcaError(Exception):
    """Base class for all parampca errors."""


class UsageError(PpcaError, ValueError):
    """Invalid arguments or inconsistent inputs."""


class OutOfRangeError(UsageError):
    """A parameter value lies outside the bin grid."""


class DimensionError(UsageError):
    """Array shapes do not line up."""


class EmptyEndpointError(UsageError):
    """An endpoint or bin receives no observations."""


class ReorderError(UsageError):
    """Basis counts do not admit the requested reordering direction."""


class NumericalError(PpcaError, ArithmeticError):
    """A numerical procedure failed."""


class SingularSystemError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class DegenerateBasisError(NumericalError):
    pass


class RankDeficientError(NumericalError):
    pass


class RankDeficientWarning(UserWarning):
    """A fit or solve had fewer independent directions than requested."""

"""Exception hierarchy shared by the solvers and the command line front end."""


class AtlasforgeError(Exception):
    """Base class for all package errors."""


class ConfigError(AtlasforgeError, ValueError):
    """Invalid or inconsistent parameters."""


class DataError(AtlasforgeError, ValueError):
    """Unreadable, missing or mismatched input data."""


class NumericalError(AtlasforgeError, ArithmeticError):
    """A solver failed (singular system, degenerate geometry, no convergence)."""


class DegenerateTriangulationError(NumericalError):
    pass


class SolverError(NumericalError):
    pass

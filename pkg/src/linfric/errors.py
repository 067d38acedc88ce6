"""Exception types shared across the package."""


class ContactInputError(ValueError):
    """Rejected input: non-finite values, non-unit normals, bad parameters."""


class DegenerateDirectionError(ValueError):
    """A direction was requested from a (near) zero vector."""


class InconsistentKinematicsError(ValueError):
    """Overlap history and movement increments contradict each other."""


class NumericalInconsistencyError(ArithmeticError):
    """A solver reached a state its preconditions should have excluded."""


class InstabilityError(RuntimeError):
    """Explicit integration blew up (kinetic energy grew without bound)."""


class ConfigError(ValueError):
    """A scenario configuration failed validation."""


class DegenerateGeometryError(ValueError):
    """Coincident particle centers or an otherwise undefined contact geometry."""

"""Exception types shared across the package."""


class QMFError(Exception):
    pass


class InvariantError(QMFError, ValueError):
    """A quantum-state invariant (norm, trace, hermiticity, PSD) does not hold."""


class DataError(QMFError):
    pass


class NumericalError(QMFError):
    """Divergence or a non-finite intermediate value."""

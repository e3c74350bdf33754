"""Exception hierarchy shared by all subpackages."""


class GNSEError(Exception):
    """Base class for all errors raised by :mod:`gnse`."""


class DomainError(GNSEError, ValueError):
    """An argument lies outside the domain of a function (e.g. ``t < 0``)."""


class ConfigurationError(GNSEError, ValueError):
    """Invalid or unsupported configuration (element name, degree, case id, ...)."""


class MeshError(GNSEError, ValueError):
    """Invalid triangulation or mismatched mesh genealogy."""


class NumericError(GNSEError, ArithmeticError):
    """A scalar iteration (root finding, eigenvalue iteration) failed to converge."""


class LinearSolverError(GNSEError, RuntimeError):
    """The sparse direct solver failed (singular or structurally deficient matrix)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NonConvergenceError(GNSEError, RuntimeError):
    """Newton's method hit ``max_iter`` without meeting the tolerances."""

    def __init__(self, message, history=(), p=None, level=None):
        super().__init__(message)
        self.history = list(history)
        self.p = p
        self.level = level

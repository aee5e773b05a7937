"""Exception hierarchy.

``ConfigurationError`` subclasses signal bad input; ``NumericalFailure``
subclasses signal that a numerical safeguard tripped.  The CLI maps the two
families to distinct exit codes.
"""


class DBSamplingError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DBSamplingError, ValueError):
    pass


class NumericalFailure(DBSamplingError, ArithmeticError):
    pass


# hamiltonian
class EmptyDomain(ConfigurationError):
    pass


class GapInPartition(ConfigurationError):
    pass


class NonPositiveSemidefinite(ConfigurationError):
    pass


# solver
class StepUnderflow(NumericalFailure):
    pass


class NonDiagonalHamiltonian(ConfigurationError):
    pass


class FormMismatch(NumericalFailure):
    pass


# spectrum
class ExceptionalExtension(ConfigurationError):
    pass


class MonotonicityFailure(NumericalFailure):
    pass


# kernels
class CoincidenceInstability(NumericalFailure):
    pass


class NonConstantRatio(NumericalFailure):
    pass


# reconstruct
class SupportViolation(ConfigurationError):
    pass


class SubspaceMismatch(ConfigurationError):
    pass


class UnsupportedP(ConfigurationError):
    pass


# airy
class BranchMismatch(NumericalFailure):
    pass


class EnumerationGap(NumericalFailure):
    pass

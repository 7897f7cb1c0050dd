"""Exception types raised by the toolkit."""

import numpy as np


class ContractError(ValueError):
    """An argument violates the documented precondition of an operation."""


class ConfigurationError(ValueError):
    """An experiment or prior configuration cannot be satisfied."""


class NumericalBlowupError(FloatingPointError):
    """The hydraulic solver produced a non-finite depth."""

    def __init__(self, message, cell=None, time=None, member=None):
        super().__init__(message)
        self.cell = cell
        self.time = time
        self.member = member


class DegenerateDistributionError(ValueError):
    """Too few distinct samples to build an anamorphosis."""


class SingularMatrixError(np.linalg.LinAlgError):
    """The innovation covariance could not be factorized."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number

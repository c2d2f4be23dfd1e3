# -*- coding: utf-8 -*-

__all__ = ["SimException", "InvalidSurvey", "InvalidConfiguration",
           "DomainError", "ResponseParseError", "BackendError",
           "TransientBackendFailure", "PermanentBackendFailure",
           "BackendTimeout", "SimulationFailed", "MatchingError",
           "ConvergenceError", "InvalidStrategy", "InvalidSource"]


class SimException(Exception):
    pass


class InvalidSurvey(SimException):
    pass


class InvalidConfiguration(SimException):
    pass


class DomainError(SimException):
    pass


class ResponseParseError(SimException):
    def __init__(self, message: str, raw: str = None):
        super().__init__(message)
        self.raw = raw


class BackendError(SimException):
    pass


class TransientBackendFailure(BackendError):
    pass


class PermanentBackendFailure(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class SimulationFailed(SimException):
    pass


class MatchingError(SimException):
    pass


class ConvergenceError(MatchingError):
    def __init__(self, message: str, trace: list = None):
        super().__init__(message)
        self.trace = trace or []


class InvalidStrategy(SimException):
    pass


class InvalidSource(SimException):
    pass

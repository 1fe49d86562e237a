"""Exception hierarchy shared by the numerical modules and the CLI."""


class OamPnrError(Exception):
    exit_code = 1


class InvalidParameter(OamPnrError, ValueError):
    exit_code = 2


class DegenerateCovariance(OamPnrError):
    exit_code = 3


class NonPositiveQuadratic(OamPnrError, ValueError):
    exit_code = 3


class OrderCapExceeded(OamPnrError):
    exit_code = 3


class PhotonCapExceeded(OamPnrError):
    exit_code = 3


class TailToleranceExceeded(OamPnrError):
    exit_code = 3


class PrecisionLoss(OamPnrError):
    exit_code = 4


class InsufficientFrames(OamPnrError):
    exit_code = 3


class ConfigError(OamPnrError):
    exit_code = 2

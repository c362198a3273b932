"""Exception types raised across the package."""


class ToralNodalError(Exception):
    """Base class for all package errors."""


class NotRepresentable(ToralNodalError, ValueError):
    pass


class LevelTooLarge(ToralNodalError, ValueError):
    pass


class CurvatureVanishes(ToralNodalError, ValueError):
    pass


class CurveExceedsDomain(ToralNodalError, ValueError):
    pass


class FourthCoefficientOutOfRange(ToralNodalError, ValueError):
    pass


class RegimeMismatch(ToralNodalError, ValueError):
    pass


class UnresolvedTangency(ToralNodalError, RuntimeError):
    pass


class NearDiagonal(ToralNodalError, ValueError):
    pass


class NonPositiveDiscriminant(ToralNodalError, ValueError):
    pass


class QuadratureNotConverged(ToralNodalError, RuntimeError):
    pass


class RouteDisagreement(ToralNodalError, RuntimeError):
    pass


class DegenerateDenominator(ToralNodalError, ValueError):
    pass


class KernelNotPSD(ToralNodalError, ValueError):
    pass


class ConfigInvalid(ToralNodalError, ValueError):
    pass


class CampaignFailed(ToralNodalError, RuntimeError):
    pass

"""Exception hierarchy shared by every entrolab module."""


class EntrolabError(Exception):
    """Base class for all library errors."""


class NegativeRate(EntrolabError):
    pass


class TargetOutsideSpace(EntrolabError):
    pass


class Reducible(EntrolabError):
    pass


class MissingInverse(EntrolabError):
    pass


class DimensionMismatch(EntrolabError):
    pass


class NonFinite(EntrolabError):
    pass


class NonPositiveF(EntrolabError):
    pass


class DomainError(EntrolabError):
    pass


class FormMismatch(EntrolabError):
    pass


class DegenerateCurve(EntrolabError):
    pass


class EigenFailure(EntrolabError):
    pass


class FiniteDifferenceMismatch(EntrolabError):
    pass


class UnknownSeed(EntrolabError):
    pass


class NegativeCouplingRate(EntrolabError):
    pass


class InadmissibleCoupling(EntrolabError):
    pass


class HypothesisViolation(EntrolabError):
    pass


class HessianSignViolation(EntrolabError):
    pass


class NoSuchM(EntrolabError):
    pass


class ConditionFailed(EntrolabError):
    pass


class NonSimpleGraph(EntrolabError):
    pass


class InvalidParams(EntrolabError):
    pass


class InfeasibleMarginals(EntrolabError):
    pass


class TimeTooLarge(EntrolabError):
    pass


class MassLeak(EntrolabError):
    pass


class ConfigError(EntrolabError):
    pass


class SchemaMismatch(EntrolabError):
    pass

"""Exception hierarchy shared across the laboratory."""


class GplabError(Exception):
    """Base class for all errors raised by gplab."""


# geometry
class DimensionMismatch(GplabError):
    pass


class DegenerateInput(GplabError):
    """Input points are affinely dependent beyond repair; caller should resample."""


class EmptyInterior(GplabError):
    pass


class InvalidDimension(GplabError):
    pass


class BadFrame(GplabError):
    pass


class SingularGenerators(GplabError):
    pass


class OriginOutside(GplabError):
    pass


# sampling
class RejectionStall(GplabError):
    """Truncation radius leaves essentially no acceptance mass."""


class QuadratureFailure(GplabError):
    pass


# models
class RadicandNegative(GplabError):
    pass


class RhoTooSmall(GplabError):
    pass


# constructions
class FrameConstructionFailure(GplabError):
    pass


class ConditionBViolated(GplabError):
    """The hull does not contain the inner sandwich ball."""


# stats
class DegenerateVariance(GplabError):
    pass


class NonPositiveValue(GplabError):
    pass


# experiments
class ConfigInvalid(GplabError):
    """Experiment configuration failed validation; message names the field."""


class IoFailure(GplabError):
    pass

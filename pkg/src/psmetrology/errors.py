"""Exception hierarchy shared by the forward model, the Fisher module and the estimators."""


class MetrologyError(Exception):
    """Base class for every error raised by this package."""


class DegeneratePostSelection(MetrologyError):
    """The post-selection probability is below the floor, so conditional meter quantities are undefined."""


class InadequateGrid(MetrologyError):
    """The position grid of the brute-force oracle does not resolve the meter."""


class EstimationError(MetrologyError):
    """Base class for per-record estimator failures."""


class NoInformation(EstimationError):
    pass


class OutOfRange(EstimationError):
    pass


class NoPostSelectedPhotons(EstimationError):
    pass


class IllConditioned(EstimationError):
    pass


class ImpossibleOutcome(EstimationError):
    pass


class NonConvergence(EstimationError):
    pass


class TooFewTrials(EstimationError):
    pass


class ConfigError(MetrologyError):
    pass

class UnlearnLabError(ValueError):
    """
    Base error of the package.
    """


class ShapeError(UnlearnLabError):
    pass


class DomainError(UnlearnLabError):
    pass


class ConfigError(UnlearnLabError):
    """
    Invalid configuration value.

    Parameters
    ----------
    message : str
        what is wrong
    field : str, optional
        dotted path of the offending key, e.g. ``schedule.t1``
    """

    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class FormatError(UnlearnLabError):
    pass


class ScenarioError(UnlearnLabError):
    pass


class ContainmentError(UnlearnLabError):
    pass


class RangeError(UnlearnLabError):
    pass


class PolicyError(UnlearnLabError):
    pass


class MethodError(UnlearnLabError):
    pass


class DataError(UnlearnLabError):
    pass


class ComparisonError(UnlearnLabError):
    pass


class NumericError(UnlearnLabError):
    pass

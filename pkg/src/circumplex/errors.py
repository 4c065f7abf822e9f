"""Exception hierarchy shared across the toolkit."""


class AffectError(Exception):
    """Base class for every error raised by circumplex."""


class RangeError(AffectError, ValueError):
    pass


class DegenerateClassError(AffectError, ValueError):
    pass


class ShapeError(AffectError, ValueError):
    pass


class NumericError(AffectError, ArithmeticError):
    pass


class LabelError(AffectError, ValueError):
    pass


class ConfigError(AffectError, ValueError):
    pass


class SpaceError(AffectError, ValueError):
    pass


class ScheduleError(AffectError, ValueError):
    pass


class EmptyDatasetError(AffectError, ValueError):
    pass


class ParseError(AffectError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class ManifestValidationError(AffectError, ValueError):
    """Raised after a manifest load collected one or more invalid rows."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"row {row}: {msg}" for row, msg in self.problems]
        super().__init__("; ".join(lines))


class SpecError(AffectError, ValueError):
    pass

"""Exception hierarchy shared by all retinabench modules."""


class HarnessError(Exception):
    """Base class for every error raised by this package."""


# --- dataset catalog ---------------------------------------------------------

class MissingFile(HarnessError):
    pass


class MalformedRow(HarnessError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class InvalidLabel(HarnessError):
    def __init__(self, line_number: int, label: int, num_classes: int):
        super().__init__(
            f"line {line_number}: label {label} outside [0, {num_classes})"
        )
        self.line_number = line_number
        self.label = label


class EmptySplit(HarnessError):
    pass


class FractionOutOfRange(HarnessError):
    pass


# --- image pipeline ----------------------------------------------------------

class NoFundusDetected(HarnessError):
    pass


class EmptyImage(HarnessError):
    pass


# --- model zoo ---------------------------------------------------------------

class UnknownArchitecture(HarnessError):
    def __init__(self, name: str):
        super().__init__(f"unknown architecture: {name!r}")
        self.name = name


class ProviderUnavailable(HarnessError):
    pass


class ShapeMismatch(HarnessError):
    pass


# --- trainer / metrics -------------------------------------------------------

class LabelOutOfRange(HarnessError):
    pass


class ClassCountMismatch(HarnessError):
    pass


class EmptyMatrix(HarnessError):
    pass


class UndefinedMetric(HarnessError):
    pass


class DegenerateMarginals(HarnessError):
    pass


class MissingPatientId(HarnessError):
    pass


# --- statistics --------------------------------------------------------------

class EmptyInput(HarnessError):
    pass


class SampleTooSmall(HarnessError):
    pass


class LengthMismatch(HarnessError):
    pass


class AllZeroDifferences(HarnessError):
    pass


class ZeroValidationLoss(HarnessError):
    pass


# --- reporting / CLI ---------------------------------------------------------

class ConfigError(HarnessError):
    def __init__(self, field: str, message: str):
        super().__init__(f"config field {field!r}: {message}")
        self.field = field


class MissingArtifacts(HarnessError):
    pass


class MissingMetric(HarnessError):
    pass

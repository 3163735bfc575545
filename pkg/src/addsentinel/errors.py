"""Exception hierarchy shared across the package.

Two broad families matter for the CLI exit-code mapping: ``DataError``
(malformed or contract-violating input, exit code 2) and ``NumericError``
(linear-algebra failures, exit code 3).
"""


class SentinelError(Exception):
    """Base class for all package-specific errors."""


class DataError(SentinelError):
    """Invalid input data or a violated operation precondition."""


class NumericError(SentinelError):
    """A numerical routine received input it cannot handle."""


class EmptySampleSet(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NotSymmetric(NumericError):
    pass


class IndefiniteMatrix(NumericError):
    pass


class ClassTooSmall(DataError):
    def __init__(self, class_id: int, count: int):
        super().__init__(f"class {class_id} has {count} sample(s), need at least 2")
        self.class_id = class_id
        self.count = count


class LabelOutOfRange(DataError):
    pass


class IoFailure(DataError):
    pass


class FormatVersionMismatch(DataError):
    pass


class ChecksumMismatch(DataError):
    pass


class SeedPoolTooSmall(DataError):
    pass


class WindowTooSmall(DataError):
    pass


class UnknownClassId(DataError):
    pass


class NotADistribution(DataError):
    pass


class EmptyStream(DataError):
    pass


class MissingClass(DataError):
    pass


class InvalidSubset(DataError):
    pass


class SeparationInfeasible(DataError):
    pass


class PremiseViolated(SentinelError):
    """The idealized evasion premise does not hold for this world/threshold."""

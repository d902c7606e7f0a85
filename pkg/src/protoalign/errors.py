"""Exception types separating data problems from numerical failures.

The CLI maps these onto exit codes: DataError/FormatError -> 2,
NumericalError -> 3.
"""


class ProtoAlignError(Exception):
    pass


class DataError(ProtoAlignError):
    """Semantic data problem: mismatched labels, missing classes, bad dims."""


class FormatError(DataError):
    """Malformed file. `offset` is the byte position of the problem, when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(ProtoAlignError):
    """Numerical precondition or stability failure."""


class NotPSDError(NumericalError):
    """Matrix has an eigenvalue below the negative tolerance floor."""


class RankError(NumericalError):
    """Requested dimensionality exceeds the numerical rank. `rank` holds the rank found."""

    def __init__(self, message, rank):
        super().__init__(message)
        self.rank = rank

"""Exception types shared across the package."""


class PNLFError(Exception):
    """Base class for all errors raised by pnlf."""


class IndexOutOfRange(PNLFError, IndexError):
    pass


class DuplicateIndex(PNLFError, ValueError):
    pass


class EmptyTensor(PNLFError, ValueError):
    pass


class EmptySet(PNLFError, ValueError):
    pass


class DegenerateRange(PNLFError, ValueError):
    """All values equal: linear scaling is undefined."""


class RatioSum(PNLFError, ValueError):
    pass


class NonFiniteUpdate(PNLFError, FloatingPointError):
    """A factor or controller cell became NaN/Inf during an update."""

    def __init__(self, matrix: str, row: int, r: int, position: int = -1):
        self.matrix = matrix
        self.row = row
        self.r = r
        self.position = position
        where = f"{matrix}[{row}, {r}]"
        if position >= 0:
            where += f" at instance {position} of the epoch"
        super().__init__(f"non-finite update in {where}")


class DivergenceDetected(PNLFError, FloatingPointError):
    """Raised by ``train(strict=True)``; carries the partial report."""

    def __init__(self, report, cause: NonFiniteUpdate):
        self.report = report
        self.cause = cause
        super().__init__(f"training diverged after {report.epochs_run} epochs: {cause}")


class ParseError(PNLFError, ValueError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class NegativeValue(ParseError):
    pass


class UnknownColumn(PNLFError, KeyError):
    pass


class DensityTooLow(UserWarning):
    """Fewer known entries than free parameters in the generating model."""

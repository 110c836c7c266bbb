"""
Exception hierarchy shared by the solvers, baselines, metrics and scripts.

Scripts turn these into exit codes via `exit_code_for` and into JSON error
records via `PkmError.to_record()`.
"""
from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_NOT_CONVERGED = 4


class PkmError(Exception):
    """Base class for every error raised by this package."""

    def context(self) -> Dict[str, Any]:
        return {}

    def to_record(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": str(self),
            **self.context(),
        }


class InputError(PkmError, ValueError):
    pass


class InvalidDataset(InputError):
    pass


class EmptyDataset(InputError):
    def __init__(self, path: Optional[str] = None):
        self.path = path
        super().__init__(f"Dataset is empty: {path}" if path else "Dataset is empty")

    def context(self) -> Dict[str, Any]:
        return {"path": self.path}


class ParseError(InputError):
    def __init__(self, row: int, col: int, value: Any = None):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"Cannot parse value {value!r} at row {row}, column {col}")

    def context(self) -> Dict[str, Any]:
        return {"row": self.row, "col": self.col, "value": None if self.value is None else str(self.value)}


class NonFiniteValue(InputError):
    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"Non-finite value at row {row}, column {col}")

    def context(self) -> Dict[str, Any]:
        return {"row": self.row, "col": self.col}


class DimensionCap(InputError):
    def __init__(self, lk: int, cap: int):
        self.lk = lk
        self.cap = cap
        super().__init__(f"L*K = {lk} exceeds the dense projection cap of {cap}")

    def context(self) -> Dict[str, Any]:
        return {"lk": self.lk, "cap": self.cap}


class NumericalError(PkmError, ArithmeticError):
    pass


class DegenerateCluster(NumericalError):
    def __init__(self, cluster: int, mass: float):
        self.cluster = cluster
        self.mass = mass
        super().__init__(f"Cluster {cluster} vanished (column mass {mass:.3e})")

    def context(self) -> Dict[str, Any]:
        return {"cluster": self.cluster, "mass": self.mass}


class RankDeficient(NumericalError):
    pass


class DegenerateDirection(NumericalError):
    def __init__(self, coordinate: int, norm_sq: float):
        self.coordinate = coordinate
        self.norm_sq = norm_sq
        super().__init__(
            f"Constraint row {coordinate} already lies in the active span (|Qn|^2 = {norm_sq:.3e})"
        )

    def context(self) -> Dict[str, Any]:
        return {"coordinate": self.coordinate, "norm_sq": self.norm_sq}


class IdenticalCenters(NumericalError):
    def __init__(self, first: int, second: int):
        self.first = first
        self.second = second
        super().__init__(f"Centers {first} and {second} coincide")

    def context(self) -> Dict[str, Any]:
        return {"first": self.first, "second": self.second}


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, InputError):
        return EXIT_INPUT_ERROR
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL_FAILURE
    return EXIT_NUMERICAL_FAILURE

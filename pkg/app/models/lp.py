from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from app.models.base import DomainModel


def _vector(value, dtype=float) -> np.ndarray:
    array = np.array(value, dtype=dtype, copy=True).reshape(-1)
    array.setflags(write=False)
    return array


class LpStatus(str, Enum):
    """Solver outcomes"""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    NODE_LIMIT = "node_limit"


class LpProblem(DomainModel):
    """maximize c.x subject to A x <= b, lower <= x <= upper"""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray
    row_labels: Tuple[str, ...] = ()
    column_names: Tuple[str, ...] = ()

    @field_validator("c", "b", "lower", "upper", mode="before")
    @classmethod
    def _float_vector(cls, value):
        return _vector(value)

    @field_validator("integer", mode="before")
    @classmethod
    def _bool_vector(cls, value):
        return _vector(value, dtype=bool)

    @field_validator("A", mode="before")
    @classmethod
    def _matrix(cls, value):
        array = np.array(value, dtype=float, copy=True)
        if array.ndim == 1 and array.size == 0:
            array = array.reshape(0, 0)
        if array.ndim != 2:
            raise ValueError("A must be a matrix")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_dimensions(self) -> "LpProblem":
        m, n = self.A.shape
        if self.A.size == 0:
            m = self.b.shape[0]
            n = self.c.shape[0]
            if self.A.shape != (m, n):
                object.__setattr__(self, "A", _empty_matrix(m, n))
        if self.c.shape[0] != n:
            raise ValueError(f"Cost vector has {self.c.shape[0]} entries, A has {n} columns")
        if self.b.shape[0] != m:
            raise ValueError(f"Right-hand side has {self.b.shape[0]} entries, A has {m} rows")
        for name in ("lower", "upper", "integer"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} has the wrong length")
        if not np.all(np.isfinite(self.b)):
            raise ValueError("Right-hand side must be finite")
        if not np.all(np.isfinite(self.lower)):
            raise ValueError("Lower bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("Every variable needs lower <= upper")
        if self.row_labels and len(self.row_labels) != m:
            raise ValueError("One row label per row")
        if self.column_names and len(self.column_names) != n:
            raise ValueError("One column name per column")
        return self

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.A))

    def sparse_row(self, row: int) -> Tuple[np.ndarray, np.ndarray]:
        """(columns, coefficients) of the nonzeros of one row"""
        columns = np.flatnonzero(self.A[row])
        return columns, self.A[row, columns]

    def label(self, row: int) -> str:
        return self.row_labels[row] if self.row_labels else f"r{row}"

    def name(self, column: int) -> str:
        return self.column_names[column] if self.column_names else f"x{column}"

    def with_rhs(self, rows: Sequence[int], values: Sequence[float]) -> "LpProblem":
        b = np.array(self.b, copy=True)
        b[list(rows)] = values
        return self.model_copy(update={"b": _vector(b)})

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LpProblem":
        return self.model_copy(update={"lower": _vector(lower), "upper": _vector(upper)})

    def with_cost(self, c: np.ndarray) -> "LpProblem":
        return self.model_copy(update={"c": _vector(c)})

    def relaxed(self) -> "LpProblem":
        return self.model_copy(update={"integer": _vector(np.zeros(self.n_vars), dtype=bool)})

    def rows_labelled(self, prefix: str) -> List[int]:
        return [i for i, label in enumerate(self.row_labels) if label.startswith(prefix)]


def _empty_matrix(m: int, n: int) -> np.ndarray:
    array = np.zeros((m, n))
    array.setflags(write=False)
    return array


class LpSolution(DomainModel):
    """Status, primal point and row multipliers of a solve"""

    status: LpStatus
    x: np.ndarray = Field(default_factory=lambda: _vector([]))
    objective: float = float("nan")
    duals: np.ndarray = Field(default_factory=lambda: _vector([]))
    reduced_costs: np.ndarray = Field(default_factory=lambda: _vector([]))
    iterations: int = 0
    nodes: int = 0
    bound: Optional[float] = None

    @field_validator("x", "duals", "reduced_costs", mode="before")
    @classmethod
    def _float_vector(cls, value):
        return _vector(value)

    @property
    def is_optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL

    def dual_objective(self, problem: LpProblem) -> float:
        """b.lambda plus the bound terms of the reduced costs"""
        if self.duals.size != problem.n_rows or self.reduced_costs.size != problem.n_vars:
            return float("nan")
        d = self.reduced_costs
        upper_terms = np.where(d > 0, d * np.where(np.isfinite(problem.upper), problem.upper, 0.0), 0.0)
        lower_terms = np.where(d < 0, d * problem.lower, 0.0)
        return float(problem.b @ self.duals + upper_terms.sum() + lower_terms.sum())


class LpBuilder:
    """Incremental construction of an LpProblem from sparse rows"""

    def __init__(self):
        self._names: List[str] = []
        self._index: Dict[str, int] = {}
        self._cost: List[float] = []
        self._lower: List[float] = []
        self._upper: List[float] = []
        self._integer: List[bool] = []
        self._rows: List[Tuple[Dict[int, float], float, str]] = []

    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def index_map(self) -> Dict[str, int]:
        return dict(self._index)

    def add_variable(
        self,
        name: str,
        cost: float = 0.0,
        lower: float = 0.0,
        upper: float = 1.0,
        integer: bool = False,
    ) -> int:
        if name in self._index:
            raise ValueError(f"Duplicate variable name {name}")
        column = len(self._names)
        self._names.append(name)
        self._index[name] = column
        self._cost.append(cost)
        self._lower.append(lower)
        self._upper.append(upper)
        self._integer.append(integer)
        return column

    def add_row(self, coefficients: Mapping[int, float], rhs: float, label: str) -> int:
        row = {col: float(val) for col, val in coefficients.items() if val != 0}
        self._rows.append((row, float(rhs), label))
        return len(self._rows) - 1

    def build(self) -> LpProblem:
        n = len(self._names)
        A = np.zeros((len(self._rows), n))
        for i, (row, _, _) in enumerate(self._rows):
            for col, val in row.items():
                A[i, col] += val
        return LpProblem(
            c=np.array(self._cost, dtype=float),
            A=A,
            b=np.array([rhs for _, rhs, _ in self._rows], dtype=float),
            lower=np.array(self._lower, dtype=float),
            upper=np.array(self._upper, dtype=float),
            integer=np.array(self._integer, dtype=bool),
            row_labels=tuple(label for _, _, label in self._rows),
            column_names=tuple(self._names),
        )

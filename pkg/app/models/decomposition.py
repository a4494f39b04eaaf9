import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from app.models.base import DomainModel
from app.models.embedding import UtilitySpec
from app.models.lp import LpProblem, LpStatus
from app.models.request import VnRequest


def _frozen(value, dtype=float) -> np.ndarray:
    array = np.array(value, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class PolicyKind(str, Enum):
    """How a VN is cut into subproblems"""
    NONE = "none"
    HALVES = "halves"
    K_WAY = "k_way"
    CAPACITY_ORDERED = "capacity_ordered"


class PartitionPolicy(DomainModel):
    kind: PolicyKind = PolicyKind.NONE
    k: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_k(self) -> "PartitionPolicy":
        if self.kind in (PolicyKind.K_WAY, PolicyKind.CAPACITY_ORDERED) and self.k is None:
            raise ValueError(f"Policy {self.kind.value} needs k")
        return self

    @property
    def parts(self) -> int:
        if self.kind == PolicyKind.NONE:
            return 1
        if self.kind == PolicyKind.HALVES:
            return 2
        return self.k

    def for_request(self, gamma: int) -> "PartitionPolicy":
        """Same policy with the part count capped at the request size"""
        if self.parts <= gamma:
            return self
        if gamma == 1:
            return PartitionPolicy()
        kind = PolicyKind.K_WAY if self.kind == PolicyKind.HALVES else self.kind
        return PartitionPolicy(kind=kind, k=gamma)


class VnPartition(DomainModel):
    """One part of a VN: its vnodes, internal vlinks and the vlinks leaving it"""

    index: int = Field(ge=0)
    vnodes: Tuple[int, ...]
    internal_vlinks: Tuple[int, ...] = ()
    cross_vlinks: Tuple[int, ...] = ()

    @field_validator("vnodes")
    @classmethod
    def _non_empty(cls, value):
        if not value:
            raise ValueError("A partition needs at least one vnode")
        return value


class SubproblemBlock(DomainModel):
    """c_s, A_s x <= b_s and the coupling block F_s of one partition"""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    F: np.ndarray
    upper: np.ndarray
    # (vnode, physical node) for each column
    columns: Tuple[Tuple[int, int], ...]
    row_labels: Tuple[str, ...] = ()

    @field_validator("c", "b", "upper", "A", "F", mode="before")
    @classmethod
    def _freeze(cls, value):
        return _frozen(value)

    @model_validator(mode="after")
    def _check_shapes(self) -> "SubproblemBlock":
        n = len(self.columns)
        if self.c.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("Cost and bounds need one entry per column")
        if self.A.ndim != 2 or self.A.shape != (self.b.shape[0], n):
            raise ValueError("Local system does not match the column count")
        if self.F.ndim != 2 or self.F.shape[1] != n:
            raise ValueError("Coupling block does not match the column count")
        return self

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def n_local(self) -> int:
        return self.b.shape[0]

    def usage(self, x: np.ndarray) -> np.ndarray:
        return self.F @ x


class PartitionedLp(DomainModel):
    """Block structure of the partitioned node-embedding program"""

    request: VnRequest
    partitions: Tuple[VnPartition, ...]
    blocks: Tuple[SubproblemBlock, ...]
    h: np.ndarray
    util: UtilitySpec = Field(default_factory=UtilitySpec)
    exact_assignment: bool = False

    @field_validator("h", mode="before")
    @classmethod
    def _freeze_h(cls, value):
        return _frozen(value)

    @model_validator(mode="after")
    def _check_blocks(self) -> "PartitionedLp":
        if not self.blocks or len(self.blocks) != len(self.partitions):
            raise ValueError("One block per partition, at least one")
        for block in self.blocks:
            if block.F.shape[0] != self.h.shape[0]:
                raise ValueError("Coupling rows must match the shared capacity vector")
        return self

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def n_nodes(self) -> int:
        return self.h.shape[0]

    @property
    def total_columns(self) -> int:
        return sum(block.n_cols for block in self.blocks)

    def subproblem(self, s: int, share: Optional[np.ndarray] = None) -> LpProblem:
        """Local system of partition s, with coupling rows F_s x <= share when given"""
        block = self.blocks[s]
        labels = list(block.row_labels) or [f"local[{r}]" for r in range(block.n_local)]
        if share is None:
            A, b = block.A, block.b
        else:
            A = np.vstack([block.A, block.F])
            b = np.concatenate([block.b, np.asarray(share, dtype=float)])
            labels += [f"share[{i}]" for i in range(self.n_nodes)]
        return LpProblem(
            c=block.c,
            A=A,
            b=b,
            lower=np.zeros(block.n_cols),
            upper=block.upper,
            integer=np.zeros(block.n_cols, dtype=bool),
            row_labels=tuple(labels),
            column_names=tuple(f"x[{s},{v},{i}]" for v, i in block.columns),
        )

    def coupled_problem(self) -> LpProblem:
        """All partitions stacked with the shared rows sum_s F_s x_s <= h"""
        n = self.total_columns
        local_rows = sum(block.n_local for block in self.blocks)
        A = np.zeros((local_rows + self.n_nodes, n))
        b = np.zeros(local_rows + self.n_nodes)
        labels: List[str] = []
        row = col = 0
        for s, block in enumerate(self.blocks):
            A[row : row + block.n_local, col : col + block.n_cols] = block.A
            b[row : row + block.n_local] = block.b
            A[local_rows:, col : col + block.n_cols] = block.F
            labels += [f"{label}@{s}" for label in block.row_labels] or [
                f"local[{r}]@{s}" for r in range(block.n_local)
            ]
            row += block.n_local
            col += block.n_cols
        b[local_rows:] = self.h
        labels += [f"capacity[{i}]" for i in range(self.n_nodes)]
        return LpProblem(
            c=np.concatenate([block.c for block in self.blocks]),
            A=A,
            b=b,
            lower=np.zeros(n),
            upper=np.concatenate([block.upper for block in self.blocks]),
            integer=np.zeros(n, dtype=bool),
            row_labels=tuple(labels),
            column_names=tuple(
                f"x[{s},{v},{i}]" for s, block in enumerate(self.blocks) for v, i in block.columns
            ),
        )

    def split_vector(self, x: np.ndarray) -> List[np.ndarray]:
        """Cut a coupled-program point into per-partition pieces"""
        pieces, col = [], 0
        for block in self.blocks:
            pieces.append(np.asarray(x[col : col + block.n_cols], dtype=float))
            col += block.n_cols
        return pieces

    def node_fractions(self, xs: List[np.ndarray]) -> np.ndarray:
        """gamma x N_p matrix of assignment fractions from per-partition points"""
        fractions = np.zeros((self.request.gamma, self.n_nodes))
        for block, x in zip(self.blocks, xs):
            for (v, i), value in zip(block.columns, x):
                fractions[v, i] += value
        return np.clip(fractions, 0.0, 1.0)

    def objective(self, xs: List[np.ndarray]) -> float:
        return float(sum(block.c @ x for block, x in zip(self.blocks, xs)))


class StepKind(str, Enum):
    DIMINISHING = "diminishing"
    CONSTANT = "constant"
    SQUARE_SUMMABLE = "square_summable"
    POLYAK = "polyak"


class StepRule(DomainModel):
    """Subgradient step sizes

    diminishing: scale / t; constant: scale; square_summable:
    scale / (offset + t); polyak: distance to the target over |g|^2.
    """

    kind: StepKind = StepKind.DIMINISHING
    scale: float = Field(default=0.5, gt=0)
    offset: float = Field(default=1.0, ge=0)

    def alpha(self, t: int, distance: Optional[float] = None, g_norm: Optional[float] = None) -> float:
        if t < 1:
            raise ValueError("Iterations are counted from 1")
        if self.kind == StepKind.CONSTANT:
            return self.scale
        if self.kind == StepKind.SQUARE_SUMMABLE:
            return self.scale / (self.offset + t)
        if self.kind == StepKind.POLYAK:
            if distance is None or not g_norm or not math.isfinite(distance):
                return self.scale / t
            return self.scale * max(distance, 0.0) / (g_norm * g_norm)
        return self.scale / t


class StopRule(DomainModel):
    max_iterations: int = Field(default=100, ge=1)
    # Relative to |reference|
    gap_tolerance: float = Field(default=1e-4, ge=0)
    g_tolerance: float = Field(default=1e-9, ge=0)


class IterateRecord(DomainModel):
    """One master iteration"""

    t: int
    alpha: float
    objective: float
    best_primal: float
    best_bound: float
    gap: float
    g_norm: float
    msgs_cum: int
    elapsed: float = 0.0


class IterateTrace(DomainModel):
    """Convergence history of one decomposition run"""

    algorithm: str
    partitions: int
    records: Tuple[IterateRecord, ...] = ()
    reference: Optional[float] = None
    stop_reason: str = "iteration_limit"
    # gamma x N_p fractions used for allocation
    allocation: Optional[np.ndarray] = None
    final_prices: Optional[np.ndarray] = None
    final_shares: Optional[np.ndarray] = None

    @field_validator("allocation", "final_prices", "final_shares", mode="before")
    @classmethod
    def _freeze(cls, value):
        return None if value is None else _frozen(value)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def final_gap(self) -> float:
        return self.records[-1].gap if self.records else float("nan")

    @property
    def converged(self) -> bool:
        return self.stop_reason != "iteration_limit"

    @property
    def best_primal(self) -> float:
        return self.records[-1].best_primal if self.records else float("-inf")

    @property
    def best_bound(self) -> float:
        return self.records[-1].best_bound if self.records else float("inf")

    @property
    def solver_seconds(self) -> float:
        return self.records[-1].elapsed if self.records else 0.0

    def with_reference(self, reference: float) -> "IterateTrace":
        """Recompute gaps against another reference value"""
        records = []
        for record in self.records:
            if self.algorithm == "dual":
                gap = record.best_bound - reference
            else:
                gap = reference - record.best_primal
            records.append(record.model_copy(update={"gap": gap}))
        return self.model_copy(update={"records": tuple(records), "reference": reference})


class PrimalState(DomainModel):
    """Master state between two primal iterations"""

    t: int = 1
    h: np.ndarray
    shares: np.ndarray
    values: Tuple[float, ...] = ()
    duals: Optional[np.ndarray] = None
    solutions: Tuple[np.ndarray, ...] = ()
    g: Optional[np.ndarray] = None
    alpha: float = 0.0
    best_value: float = float("-inf")
    best_solutions: Tuple[np.ndarray, ...] = ()
    step_rule: StepRule = Field(default_factory=StepRule)
    reference: Optional[float] = None
    records: Tuple[IterateRecord, ...] = ()
    elapsed: float = 0.0

    @field_validator("h", "shares", "duals", "g", mode="before")
    @classmethod
    def _freeze(cls, value):
        return None if value is None else _frozen(value)

    @property
    def k(self) -> int:
        return self.shares.shape[0]

    @property
    def phi_sum(self) -> float:
        return float(sum(self.values))


class DualState(DomainModel):
    """Master state between two dual iterations"""

    t: int = 1
    h: np.ndarray
    prices: np.ndarray
    solutions: Tuple[np.ndarray, ...] = ()
    q: float = float("inf")
    g: Optional[np.ndarray] = None
    alpha: float = 0.0
    best_bound: float = float("inf")
    best_primal: float = float("-inf")
    average: Tuple[np.ndarray, ...] = ()
    step_rule: StepRule = Field(default_factory=StepRule)
    reference: Optional[float] = None
    records: Tuple[IterateRecord, ...] = ()
    elapsed: float = 0.0

    @field_validator("h", "prices", "g", mode="before")
    @classmethod
    def _freeze(cls, value):
        return None if value is None else _frozen(value)

    @property
    def k(self) -> int:
        return len(self.solutions)


class SubproblemAnswer(DomainModel):
    """What an agent reports back for one partition"""

    status: LpStatus
    value: float
    x: np.ndarray
    duals: Optional[np.ndarray] = None

    @field_validator("x", "duals", mode="before")
    @classmethod
    def _freeze(cls, value):
        return None if value is None else _frozen(value)

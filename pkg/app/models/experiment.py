from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import Field, field_validator, model_validator

from app.models.base import BaseAPIModel, DomainModel
from app.models.decomposition import IterateTrace, PartitionPolicy, StepRule, StopRule
from app.models.embedding import UtilityMode
from app.models.protocol import MessageLog, OverheadStats
from app.models.request import ValueRule


class Algorithm(str, Enum):
    MONOLITHIC = "monolithic"
    PRIMAL = "primal"
    DUAL = "dual"


class NetworkKind(str, Enum):
    MESH = "mesh"
    LINEAR = "linear"
    FILE = "file"


class NetworkSpec(BaseAPIModel):
    """Physical network: a generator or an instance file"""

    kind: NetworkKind = NetworkKind.MESH
    nodes: int = Field(default=5, ge=2)
    node_cap: float = Field(default=100.0, gt=0)
    link_cap: float = Field(default=100.0, gt=0)
    # When set, node_cap = ratio * mean total node demand of the stream / nodes
    node_cap_ratio: Optional[float] = Field(default=None, gt=0)
    instance_file: Optional[str] = None
    k_max: Optional[int] = Field(default=None, ge=1)
    hop_limit: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_file(self) -> "NetworkSpec":
        if self.kind == NetworkKind.FILE:
            if not self.instance_file:
                raise ValueError("network kind 'file' needs instance_file")
            if not Path(self.instance_file).is_file():
                raise ValueError(f"Instance file not found: {self.instance_file}")
        return self


class VnStreamSpec(BaseAPIModel):
    """Arriving VN requests; ignored when the instance file carries requests"""

    count: int = Field(default=10, ge=0)
    n_vnodes: int = Field(default=4, ge=1)
    link_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    demand_range: Tuple[float, float] = (1.0, 10.0)
    link_demand_range: Optional[Tuple[float, float]] = None
    value_rule: ValueRule = ValueRule.SUM_NODE_DEMAND
    integral: bool = False
    seed: int = 0

    @field_validator("demand_range", "link_demand_range")
    @classmethod
    def _check_range(cls, value):
        if value is not None and (value[0] <= 0 or value[0] > value[1]):
            raise ValueError("Demand ranges need 0 < low <= high")
        return value


class UtilityConfig(BaseAPIModel):
    mode: UtilityMode = UtilityMode.REVENUE
    node_weights: Optional[List[float]] = None
    # Affinity weights are drawn per request from this interval
    affinity_range: Tuple[float, float] = (0.5, 1.5)

    @field_validator("affinity_range")
    @classmethod
    def _check_affinity(cls, value):
        if value[0] < 0 or value[0] > value[1]:
            raise ValueError("affinity_range needs 0 <= low <= high")
        return value


class OutputSpec(BaseAPIModel):
    out_dir: Optional[str] = None
    format: str = Field(default="csv", pattern="^(csv|jsonl)$")
    name: str = "experiment"
    traces: bool = True


class ExperimentConfig(BaseAPIModel):
    """Everything one experiment or convergence study needs"""

    network: NetworkSpec = Field(default_factory=NetworkSpec)
    vn_stream: VnStreamSpec = Field(default_factory=VnStreamSpec)
    algorithm: Algorithm = Algorithm.PRIMAL
    study_algorithms: List[Algorithm] = Field(default_factory=lambda: [Algorithm.PRIMAL, Algorithm.DUAL])
    partition_policy: PartitionPolicy = Field(default_factory=PartitionPolicy)
    utility: UtilityConfig = Field(default_factory=UtilityConfig)
    step_rule: StepRule = Field(default_factory=StepRule)
    stop: StopRule = Field(default_factory=StopRule)
    exact_assignment: bool = False
    distinct_hosts: bool = False
    # Gaps against the other algorithm's best value instead of the coupled optimum
    blind: bool = False
    parallel: Optional[bool] = None
    seed: Optional[int] = None
    output: OutputSpec = Field(default_factory=OutputSpec)

    @property
    def stream_seed(self) -> int:
        return self.seed if self.seed is not None else self.vn_stream.seed


class VnOutcome(DomainModel):
    request_id: int
    accepted: bool
    value: float
    contribution: float
    hosts: Tuple[Optional[int], ...] = ()
    partitions: int = 1
    iterations: int = 0
    messages: int = 0
    attempts: int = 1
    reason: Optional[str] = None
    solver_seconds: float = 0.0


class ExperimentReport(DomainModel):
    """Aggregated outcome of one experiment"""

    name: str = "experiment"
    algorithm: str
    policy: str
    outcomes: Tuple[VnOutcome, ...] = ()
    requested: int = 0
    accepted: int = 0
    allocation_ratio: Optional[float] = Field(default=None, ge=0, le=1)
    revenue: float = Field(default=0.0, ge=0)
    overhead: OverheadStats = Field(default_factory=OverheadStats)
    message_log: MessageLog = Field(default_factory=MessageLog)
    traces: Dict[int, IterateTrace] = Field(default_factory=dict)
    wall_clock: Dict[str, float] = Field(default_factory=dict)
    error: Optional[str] = None

    @model_validator(mode="after")
    def _check_counts(self) -> "ExperimentReport":
        if self.accepted > self.requested:
            raise ValueError("Accepted count exceeds requested count")
        return self


class StudyRow(DomainModel):
    t: int
    primal_gap: Optional[float] = None
    dual_gap: Optional[float] = None
    primal_seconds: Optional[float] = None
    dual_seconds: Optional[float] = None


class ConvergenceStudy(DomainModel):
    """Primal and dual traces on one instance, aligned by iteration"""

    reference: Optional[float] = None
    blind: bool = False
    primal: Optional[IterateTrace] = None
    dual: Optional[IterateTrace] = None
    rows: Tuple[StudyRow, ...] = ()
    messages: Dict[str, int] = Field(default_factory=dict)

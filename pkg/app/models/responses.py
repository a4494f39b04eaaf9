import math
from typing import Any, Dict, List, Optional, Tuple

from pydantic import Field

from app.models.base import BaseAPIModel
from app.models.experiment import ConvergenceStudy, ExperimentReport
from app.models.request import ValueRule


class OutcomeSummary(BaseAPIModel):
    request_id: int
    accepted: bool
    value: float
    contribution: float
    hosts: List[Optional[int]] = []
    partitions: int
    iterations: int
    messages: int
    attempts: int
    reason: Optional[str] = None


class ExperimentSummaryResponse(BaseAPIModel):
    """Experiment result without traces or the per-message log"""

    success: bool = True
    name: str
    algorithm: str
    policy: str
    requested: int
    accepted: int
    allocation_ratio: Optional[float] = None
    revenue: float
    messages: int
    bytes: int
    outcomes: List[OutcomeSummary] = []
    wall_clock: Dict[str, float] = {}
    error: Optional[str] = None
    written: List[str] = Field(default=[], description="Files emitted when the request asked for output")

    @classmethod
    def from_report(cls, report: ExperimentReport, written: Optional[List[str]] = None) -> "ExperimentSummaryResponse":
        return cls(
            name=report.name,
            algorithm=report.algorithm,
            policy=report.policy,
            requested=report.requested,
            accepted=report.accepted,
            allocation_ratio=report.allocation_ratio,
            revenue=report.revenue,
            messages=report.overhead.messages,
            bytes=report.overhead.bytes,
            outcomes=[
                OutcomeSummary(
                    request_id=o.request_id,
                    accepted=o.accepted,
                    value=o.value,
                    contribution=o.contribution,
                    hosts=list(o.hosts),
                    partitions=o.partitions,
                    iterations=o.iterations,
                    messages=o.messages,
                    attempts=o.attempts,
                    reason=o.reason,
                )
                for o in report.outcomes
            ],
            wall_clock=dict(report.wall_clock),
            error=report.error,
            written=written or [],
        )


class TraceSummary(BaseAPIModel):
    iterations: int
    stop_reason: Optional[str] = None
    # None when the gap is not finite
    final_gap: Optional[float] = None
    gaps: List[Optional[float]] = []


class StudySummaryResponse(BaseAPIModel):
    success: bool = True
    reference: Optional[float] = None
    blind: bool
    primal: TraceSummary
    dual: TraceSummary
    messages: Dict[str, int] = {}

    @classmethod
    def from_study(cls, study: ConvergenceStudy) -> "StudySummaryResponse":
        def summary(trace) -> TraceSummary:
            return TraceSummary(
                iterations=trace.iterations,
                stop_reason=trace.stop_reason,
                final_gap=_finite(trace.final_gap),
                gaps=[_finite(record.gap) for record in trace.records],
            )

        return cls(
            reference=study.reference,
            blind=study.blind,
            primal=summary(study.primal),
            dual=summary(study.dual),
            messages=dict(study.messages),
        )


class GenerateInstanceRequest(BaseAPIModel):
    """Random instance: a full mesh plus a VN stream"""

    nodes: int = Field(default=5, ge=2)
    node_cap: float = Field(default=100.0, gt=0)
    link_cap: float = Field(default=100.0, gt=0)
    linear: bool = False
    count: int = Field(default=1, ge=0)
    n_vnodes: int = Field(default=4, ge=1)
    link_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    demand_range: Tuple[float, float] = (1.0, 10.0)
    value_rule: ValueRule = ValueRule.SUM_NODE_DEMAND
    integral: bool = False
    seed: int = 0


class InstanceResponse(BaseAPIModel):
    physical_network: Dict[str, Any]
    vn_requests: List[Dict[str, Any]]


class APIInfoResponse(BaseAPIModel):
    """API information response"""

    message: str
    version: str
    status: str
    endpoints: Dict[str, str]


class HealthCheckResponse(BaseAPIModel):
    """Health check response"""

    status: str
    timestamp: str
    service: str
    version: str
    dependencies: Optional[Dict[str, str]] = None


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return value

from pydantic import Field, model_validator
from typing import List, Tuple
from enum import Enum

from app.models.base import DomainModel


class ValueRule(str, Enum):
    """How a request's revenue is derived from its demands"""
    SUM_NODE_DEMAND = "sum_node_demand"
    SUM_TOTAL_DEMAND = "sum_total_demand"
    UNIT = "unit"


class VirtualNode(DomainModel):
    """Virtual node with a CPU demand"""

    demand: float = Field(gt=0)


class VirtualLink(DomainModel):
    """Virtual link between two vnodes of the same request"""

    source: int = Field(ge=0)
    target: int = Field(ge=0)
    demand: float = Field(gt=0)

    @property
    def key(self) -> Tuple[int, int]:
        return (min(self.source, self.target), max(self.source, self.target))


class VnRequest(DomainModel):
    """VN request j with gamma_j vnodes, psi_j vlinks and a value"""

    id: int = Field(ge=0)
    vnodes: Tuple[VirtualNode, ...]
    vlinks: Tuple[VirtualLink, ...] = ()
    value: float = Field(ge=0, description="Revenue earned when accepted")

    @model_validator(mode="after")
    def _check_links(self) -> "VnRequest":
        if not self.vnodes:
            raise ValueError(f"VN request {self.id} has no virtual nodes")
        seen = set()
        for vlink in self.vlinks:
            if vlink.source == vlink.target:
                raise ValueError(f"VN request {self.id} has a self-loop vlink")
            if vlink.source >= len(self.vnodes) or vlink.target >= len(self.vnodes):
                raise ValueError(f"VN request {self.id} vlink endpoint out of range")
            if vlink.key in seen:
                raise ValueError(f"VN request {self.id} repeats vlink {vlink.key}")
            seen.add(vlink.key)
        return self

    @property
    def gamma(self) -> int:
        """Number of virtual nodes"""
        return len(self.vnodes)

    @property
    def psi(self) -> int:
        """Number of virtual links"""
        return len(self.vlinks)

    @property
    def node_demands(self) -> List[float]:
        return [vnode.demand for vnode in self.vnodes]

    @property
    def total_node_demand(self) -> float:
        return sum(self.node_demands)


def request_value(vnodes: List[VirtualNode], vlinks: List[VirtualLink], rule: ValueRule) -> float:
    """Revenue of a request under a value rule"""
    rule = ValueRule(rule)
    if rule == ValueRule.UNIT:
        return 1.0
    node_part = sum(vnode.demand for vnode in vnodes)
    if rule == ValueRule.SUM_NODE_DEMAND:
        return node_part
    return node_part + sum(vlink.demand for vlink in vlinks)

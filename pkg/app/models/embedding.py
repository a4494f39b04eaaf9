import math
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from app.models.base import DomainModel


def _frozen_array(value, dtype=float) -> np.ndarray:
    array = np.array(value, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class DiscoveryMask(DomainModel):
    """Result of resource discovery: n^P_ij and p_kj"""

    node_available: np.ndarray = Field(description="(N_p, J) binary matrix")
    path_available: np.ndarray = Field(description="(|P|, J) binary matrix")

    @field_validator("node_available", "path_available", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        array = _frozen_array(value, dtype=np.int8)
        if array.ndim != 2:
            raise ValueError("Discovery masks are two-dimensional")
        if array.size and not np.isin(array, (0, 1)).all():
            raise ValueError("Discovery mask entries must be 0 or 1")
        return array

    @model_validator(mode="after")
    def _check_shapes(self) -> "DiscoveryMask":
        if self.node_available.shape[1] != self.path_available.shape[1]:
            raise ValueError("Node and path masks disagree on the request count")
        return self

    @property
    def request_count(self) -> int:
        return self.node_available.shape[1]


class UtilityMode(str, Enum):
    """Objective families"""
    REVENUE = "revenue"
    WEIGHTED_NODE = "weighted_node"
    AFFINITY = "affinity"


class UtilitySpec(DomainModel):
    """Which U_i the embedding maximizes"""

    mode: UtilityMode = UtilityMode.REVENUE
    node_weights: Optional[Tuple[float, ...]] = None
    # request id -> (gamma_j, N_p) weights
    affinity: Optional[Dict[int, Tuple[Tuple[float, ...], ...]]] = None

    @model_validator(mode="after")
    def _check_weights(self) -> "UtilitySpec":
        if self.mode == UtilityMode.WEIGHTED_NODE and self.node_weights is None:
            raise ValueError("weighted_node utility needs node_weights")
        if self.mode == UtilityMode.AFFINITY and self.affinity is None:
            raise ValueError("affinity utility needs an affinity matrix per request")
        values = list(self.node_weights or ())
        for rows in (self.affinity or {}).values():
            for row in rows:
                values.extend(row)
        for weight in values:
            if not math.isfinite(weight) or weight < 0:
                raise ValueError("Utility weights must be finite and nonnegative")
        return self


class Embedding(DomainModel):
    """Mapping of one request: y_j, n^V and l"""

    request_id: int = Field(ge=0)
    accepted: bool
    # Host of each vnode, None when rejected
    node_map: Tuple[Optional[int], ...] = ()
    # Physical node sequence of each vlink, None when co-located or rejected
    link_map: Tuple[Optional[Tuple[int, ...]], ...] = ()
    fractional: bool = False
    node_fractions: Optional[np.ndarray] = None
    reason: Optional[str] = None

    @field_validator("node_fractions", mode="before")
    @classmethod
    def _freeze_fractions(cls, value):
        if value is None:
            return None
        array = _frozen_array(value)
        if array.size and (array.min() < -1e-9 or array.max() > 1 + 1e-9):
            raise ValueError("Fractional mappings lie in [0, 1]")
        return array

    @model_validator(mode="after")
    def _check_mapping(self) -> "Embedding":
        if self.accepted and any(host is None for host in self.node_map):
            raise ValueError(f"Accepted request {self.request_id} has an unmapped vnode")
        return self

    @classmethod
    def rejected(cls, request_id: int, reason: str) -> "Embedding":
        return cls(request_id=request_id, accepted=False, reason=reason)


class ResidualCapacity(DomainModel):
    """Residual node, link and path capacities after a set of embeddings"""

    nodes: Tuple[float, ...]
    links: Dict[Tuple[int, int], float]
    paths: Tuple[float, ...] = ()

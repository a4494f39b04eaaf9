from typing import Dict, Optional, Tuple

from pydantic import Field

from app.models.base import DomainModel
from app.models.embedding import DiscoveryMask, UtilitySpec
from app.models.lp import LpProblem
from app.models.network import PhysicalNetwork
from app.models.request import VnRequest


class EmbeddingProgram(DomainModel):
    """Embedding program for a set of requests plus the column index map

    Column names follow ``family[j,...]`` where j is the position of the
    request in ``requests``: nP[j,i], p[j,k], nV[j,v,i], l[j,e,k],
    c[j,e,i] (co-location), y[j], w[j,v,i] = y*nV, u[j,e,k] = y*l.
    """

    problem: LpProblem
    index_map: Dict[str, int]
    net: PhysicalNetwork
    requests: Tuple[VnRequest, ...]
    mask: DiscoveryMask
    util: UtilitySpec
    relax: bool = False
    distinct_hosts: bool = False
    strict_paths: bool = False
    node_capacity: Tuple[float, ...]
    link_capacity: Dict[Tuple[int, int], float] = Field(default_factory=dict)

    def column(self, family: str, *indices: int) -> Optional[int]:
        key = f"{family}[{','.join(str(i) for i in indices)}]"
        return self.index_map.get(key)

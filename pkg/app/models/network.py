from pydantic import Field, model_validator
from typing import Dict, List, Optional, Tuple

from app.models.base import DomainModel


class PhysicalNode(DomainModel):
    """Hosting node with CPU capacity C^n_i"""

    id: int = Field(ge=0)
    cpu_capacity: float = Field(gt=0)


class PhysicalLink(DomainModel):
    """Undirected physical link"""

    source: int = Field(ge=0)
    target: int = Field(ge=0)
    bandwidth: float = Field(gt=0)

    @property
    def key(self) -> Tuple[int, int]:
        """Endpoint pair in canonical (low, high) order"""
        return (min(self.source, self.target), max(self.source, self.target))


class Path(DomainModel):
    """Loop-free physical path with bottleneck capacity C^l_k"""

    index: int = Field(ge=0, description="Position in the path index set")
    nodes: Tuple[int, ...]
    capacity: float = Field(gt=0)

    @property
    def source(self) -> int:
        return self.nodes[0]

    @property
    def target(self) -> int:
        return self.nodes[-1]

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def link_keys(self) -> List[Tuple[int, int]]:
        """Canonical keys of the physical links the path crosses"""
        return [
            (min(a, b), max(a, b)) for a, b in zip(self.nodes[:-1], self.nodes[1:])
        ]

    @model_validator(mode="after")
    def _check_simple(self) -> "Path":
        if len(self.nodes) < 2:
            raise ValueError("A path needs at least two nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError(f"Path {self.nodes} repeats a node")
        return self


class PathSet(DomainModel):
    """Loop-free paths per ordered node pair, indexed 0..|P|-1"""

    k_max: int = Field(ge=1)
    paths: Tuple[Path, ...] = ()

    @model_validator(mode="after")
    def _check_indices(self) -> "PathSet":
        for position, path in enumerate(self.paths):
            if path.index != position:
                raise ValueError("Path indices must be contiguous from zero")
        counts: Dict[Tuple[int, int], int] = {}
        for path in self.paths:
            pair = (path.source, path.target)
            counts[pair] = counts.get(pair, 0) + 1
            if counts[pair] > self.k_max:
                raise ValueError(f"More than k_max paths for pair {pair}")
        return self

    def __len__(self) -> int:
        return len(self.paths)

    def between(self, source: int, target: int) -> List[Path]:
        """Paths for one ordered pair, in enumeration order"""
        return [p for p in self.paths if p.source == source and p.target == target]

    def pairs(self) -> List[Tuple[int, int]]:
        seen: List[Tuple[int, int]] = []
        for path in self.paths:
            pair = (path.source, path.target)
            if not seen or seen[-1] != pair:
                seen.append(pair)
        return seen


class PhysicalNetwork(DomainModel):
    """Physical substrate: hosting nodes, undirected links, optional paths"""

    nodes: Tuple[PhysicalNode, ...]
    links: Tuple[PhysicalLink, ...] = ()
    paths: Optional[PathSet] = None

    @model_validator(mode="after")
    def _check_topology(self) -> "PhysicalNetwork":
        ids = [node.id for node in self.nodes]
        if not ids:
            raise ValueError("A physical network needs at least one node")
        if ids != list(range(len(ids))):
            raise ValueError("Physical node ids must be 0..N_p-1 in order")
        seen = set()
        for link in self.links:
            if link.source == link.target:
                raise ValueError(f"Self-loop link on node {link.source}")
            if link.source >= len(ids) or link.target >= len(ids):
                raise ValueError(f"Link {link.key} references an unknown node")
            if link.key in seen:
                raise ValueError(f"Duplicate link {link.key}")
            seen.add(link.key)
        if self.paths is not None:
            bandwidths = {link.key: link.bandwidth for link in self.links}
            for path in self.paths.paths:
                missing = [key for key in path.link_keys if key not in bandwidths]
                if missing:
                    raise ValueError(f"Path {path.nodes} uses unknown links {missing}")
                bottleneck = min(bandwidths[key] for key in path.link_keys)
                if abs(bottleneck - path.capacity) > 1e-12:
                    raise ValueError(f"Path {path.nodes} capacity is not its bottleneck")
        return self

    @property
    def node_count(self) -> int:
        """N_p"""
        return len(self.nodes)

    @property
    def node_capacities(self) -> List[float]:
        return [node.cpu_capacity for node in self.nodes]

    @property
    def link_bandwidths(self) -> Dict[Tuple[int, int], float]:
        return {link.key: link.bandwidth for link in self.links}

    def with_paths(self, paths: PathSet) -> "PhysicalNetwork":
        return self.model_copy(update={"paths": paths})

    def require_paths(self) -> PathSet:
        if self.paths is None:
            from app.services.topology import topology_service

            return topology_service.enumerate_loopfree_paths(self)
        return self.paths

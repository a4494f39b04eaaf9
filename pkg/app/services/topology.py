import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from app.config import settings
from app.core.exceptions import (
    CapacityViolationError,
    InvalidNetworkError,
    InvalidRequestError,
)
from app.models.embedding import DiscoveryMask, Embedding, ResidualCapacity
from app.models.network import Path, PathSet, PhysicalLink, PhysicalNetwork, PhysicalNode
from app.models.request import ValueRule, VirtualLink, VirtualNode, VnRequest, request_value

logger = logging.getLogger("app.services.topology")

_CAPACITY_TOL = 1e-9


class TopologyService:
    """Physical networks, VN requests and capacity bookkeeping"""

    def __init__(self):
        self.logger = logger

    def to_graph(self, net: PhysicalNetwork) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(node.id for node in net.nodes)
        for link in net.links:
            graph.add_edge(link.source, link.target, bandwidth=link.bandwidth)
        return graph

    def enumerate_loopfree_paths(
        self,
        net: PhysicalNetwork,
        k_max: Optional[int] = None,
        hop_limit: Optional[int] = None,
    ) -> PathSet:
        """
        Enumerate up to k_max simple paths per ordered node pair

        Paths are ordered by hop count, then by node sequence. Disconnected
        pairs get no paths.

        Args:
            net: Physical network
            k_max: Path cap per pair (defaults to settings.path_k_max)
            hop_limit: Optional maximum hop count

        Returns:
            PathSet indexed in (source, target, rank) order
        """
        k_max = k_max if k_max is not None else settings.path_k_max
        hop_limit = hop_limit if hop_limit is not None else settings.path_hop_limit
        if k_max < 1:
            raise InvalidNetworkError("k_max must be at least 1", details={"k_max": k_max})

        graph = self.to_graph(net)
        bandwidth = net.link_bandwidths
        max_hops = net.node_count - 1 if hop_limit is None else min(hop_limit, net.node_count - 1)

        paths: List[Path] = []
        for source in sorted(graph.nodes):
            for target in sorted(graph.nodes):
                if source == target or not nx.has_path(graph, source, target):
                    continue
                found: List[Tuple[int, ...]] = []
                for hops in range(1, max_hops + 1):
                    layer = sorted(
                        tuple(p)
                        for p in nx.all_simple_paths(graph, source, target, cutoff=hops)
                        if len(p) - 1 == hops
                    )
                    found.extend(layer[: k_max - len(found)])
                    if len(found) >= k_max:
                        break
                for nodes in found:
                    capacity = min(
                        bandwidth[(min(a, b), max(a, b))] for a, b in zip(nodes[:-1], nodes[1:])
                    )
                    paths.append(Path(index=len(paths), nodes=nodes, capacity=capacity))

        self.logger.debug(f"Enumerated {len(paths)} loop-free paths with k_max={k_max}")
        return PathSet(k_max=k_max, paths=tuple(paths))

    def generate_full_mesh(self, n: int, node_cap: float, link_cap: float) -> PhysicalNetwork:
        """Fully connected network of n nodes with uniform capacities"""
        if n < 2:
            raise InvalidNetworkError("A full mesh needs at least two nodes", details={"n": n})
        self._check_capacities(node_cap, link_cap)
        nodes = tuple(PhysicalNode(id=i, cpu_capacity=node_cap) for i in range(n))
        links = tuple(
            PhysicalLink(source=a, target=b, bandwidth=link_cap)
            for a in range(n)
            for b in range(a + 1, n)
        )
        return PhysicalNetwork(nodes=nodes, links=links)

    def generate_linear(self, n: int, node_cap: float, link_cap: float) -> PhysicalNetwork:
        """Chain 0-1-...-(n-1) with uniform capacities"""
        if n < 2:
            raise InvalidNetworkError("A linear network needs at least two nodes", details={"n": n})
        self._check_capacities(node_cap, link_cap)
        nodes = tuple(PhysicalNode(id=i, cpu_capacity=node_cap) for i in range(n))
        links = tuple(PhysicalLink(source=i, target=i + 1, bandwidth=link_cap) for i in range(n - 1))
        return PhysicalNetwork(nodes=nodes, links=links)

    def _check_capacities(self, node_cap: float, link_cap: float) -> None:
        if node_cap <= 0 or link_cap <= 0:
            raise InvalidNetworkError(
                "Capacities must be strictly positive",
                details={"node_cap": node_cap, "link_cap": link_cap},
            )

    def generate_random_vn(
        self,
        n_vnodes: int,
        link_prob: float,
        demand_range: Tuple[float, float],
        value_rule: ValueRule = ValueRule.SUM_NODE_DEMAND,
        seed: int = 0,
        request_id: int = 0,
        link_demand_range: Optional[Tuple[float, float]] = None,
        integral: bool = False,
    ) -> VnRequest:
        """
        Random VN topology: each vnode pair linked with probability link_prob

        Node demands are drawn first, then one Bernoulli draw per unordered
        pair in (a, b) order, so an identical seed gives an identical request.
        """
        if n_vnodes < 1:
            raise InvalidRequestError("A VN needs at least one vnode", details={"n_vnodes": n_vnodes})
        if not 0.0 <= link_prob <= 1.0:
            raise InvalidRequestError("link_prob must lie in [0, 1]", details={"link_prob": link_prob})
        link_demand_range = link_demand_range or demand_range
        for low, high in (demand_range, link_demand_range):
            if low > high or low <= 0:
                raise InvalidRequestError(
                    "Demand interval must be nonempty and positive",
                    details={"range": [low, high]},
                )

        rng = np.random.default_rng(seed)

        def draw(interval: Tuple[float, float], size: Optional[int] = None):
            low, high = interval
            if integral:
                return rng.integers(int(np.ceil(low)), int(np.floor(high)) + 1, size=size)
            return rng.uniform(low, high, size=size)

        vnodes = [VirtualNode(demand=float(d)) for d in draw(demand_range, size=n_vnodes)]
        vlinks: List[VirtualLink] = []
        for a in range(n_vnodes):
            for b in range(a + 1, n_vnodes):
                if rng.random() < link_prob:
                    vlinks.append(VirtualLink(source=a, target=b, demand=float(draw(link_demand_range))))

        return VnRequest(
            id=request_id,
            vnodes=tuple(vnodes),
            vlinks=tuple(vlinks),
            value=request_value(vnodes, vlinks, value_rule),
        )

    def full_mask(self, net: PhysicalNetwork, n_requests: int) -> DiscoveryMask:
        """Every node and every enumerated path available to every request"""
        paths = net.require_paths()
        return DiscoveryMask(
            node_available=np.ones((net.node_count, n_requests), dtype=np.int8),
            path_available=np.ones((len(paths), n_requests), dtype=np.int8),
        )

    def discover(
        self,
        net: PhysicalNetwork,
        n_requests: int,
        hop_limit: Optional[int] = None,
        anchor: int = 0,
    ) -> DiscoveryMask:
        """Nodes within hop_limit of the anchor, and paths among them within the limit"""
        if hop_limit is None:
            return self.full_mask(net, n_requests)
        graph = self.to_graph(net)
        reach = nx.single_source_shortest_path_length(graph, anchor, cutoff=hop_limit)
        node_ok = np.array([1 if i in reach else 0 for i in range(net.node_count)], dtype=np.int8)
        paths = net.require_paths()
        path_ok = np.array(
            [
                1 if p.hops <= hop_limit and node_ok[p.source] and node_ok[p.target] else 0
                for p in paths.paths
            ],
            dtype=np.int8,
        )
        return DiscoveryMask(
            node_available=np.repeat(node_ok[:, None], n_requests, axis=1),
            path_available=np.repeat(path_ok.reshape(-1, 1), n_requests, axis=1),
        )

    def residual_capacity(
        self,
        net: PhysicalNetwork,
        embeddings: Sequence[Embedding],
        requests: Sequence[VnRequest],
    ) -> ResidualCapacity:
        """
        Capacities left after the accepted embeddings

        Raises:
            CapacityViolationError: naming the first oversubscribed resource
        """
        by_id: Dict[int, VnRequest] = {request.id: request for request in requests}
        nodes = np.array(net.node_capacities, dtype=float)
        links = dict(net.link_bandwidths)

        for embedding in embeddings:
            if not embedding.accepted:
                continue
            if embedding.fractional:
                raise InvalidRequestError(
                    "Residuals need integral embeddings",
                    details={"request_id": embedding.request_id},
                )
            request = by_id.get(embedding.request_id)
            if request is None:
                raise InvalidRequestError(
                    f"No request with id {embedding.request_id}",
                    details={"request_id": embedding.request_id},
                )
            for vnode, host in zip(request.vnodes, embedding.node_map):
                nodes[host] -= vnode.demand
            for vlink, route in zip(request.vlinks, embedding.link_map):
                if route is None:
                    continue
                for a, b in zip(route[:-1], route[1:]):
                    key = (min(a, b), max(a, b))
                    if key not in links:
                        raise InvalidNetworkError(f"Route uses unknown link {key}")
                    links[key] -= vlink.demand

        for node_id, residual in enumerate(nodes):
            if residual < -_CAPACITY_TOL:
                raise CapacityViolationError(f"node {node_id}", float(residual))
        for key, residual in sorted(links.items()):
            if residual < -_CAPACITY_TOL:
                raise CapacityViolationError(f"link {key}", float(residual))

        path_residuals: Tuple[float, ...] = ()
        if net.paths is not None:
            path_residuals = tuple(
                min(links[key] for key in path.link_keys) for path in net.paths.paths
            )
        return ResidualCapacity(
            nodes=tuple(float(v) for v in nodes), links=links, paths=path_residuals
        )

    def check_embedding(
        self,
        net: PhysicalNetwork,
        request: VnRequest,
        embedding: Embedding,
        node_available: Optional[Iterable[int]] = None,
    ) -> List[str]:
        """Violations of the mapping constraints, checked directly on the data"""
        if not embedding.accepted:
            return []
        problems: List[str] = []
        if len(embedding.node_map) != request.gamma:
            problems.append("every vnode must be mapped exactly once")
            return problems
        if len(embedding.link_map) != request.psi:
            problems.append("every vlink must be mapped")
            return problems
        allowed = set(node_available) if node_available is not None else set(range(net.node_count))
        for v, host in enumerate(embedding.node_map):
            if host not in allowed:
                problems.append(f"vnode {v} mapped to undiscovered node {host}")
        links = net.link_bandwidths
        for e, (vlink, route) in enumerate(zip(request.vlinks, embedding.link_map)):
            src, dst = embedding.node_map[vlink.source], embedding.node_map[vlink.target]
            if route is None:
                if src != dst:
                    problems.append(f"vlink {e} has no path between distinct hosts")
                continue
            if route[0] != src or route[-1] != dst:
                problems.append(f"vlink {e} path endpoints differ from its hosts")
            if len(set(route)) != len(route):
                problems.append(f"vlink {e} path is not loop-free")
            for a, b in zip(route[:-1], route[1:]):
                if (min(a, b), max(a, b)) not in links:
                    problems.append(f"vlink {e} path uses missing link {(a, b)}")
        return problems


# Global instance
topology_service = TopologyService()

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import DimensionMismatchError, PartitionPolicyError
from app.models.decomposition import (
    PartitionedLp,
    PartitionPolicy,
    PolicyKind,
    SubproblemBlock,
    VnPartition,
)
from app.models.embedding import UtilitySpec
from app.models.network import PhysicalNetwork
from app.models.request import VnRequest
from app.services.monolith import node_utility

logger = logging.getLogger("app.services.partitioner")

_CAPACITY_TOL = 1e-9


class Partitioner:
    """VN partitioning policies and the block programs built from them"""

    def __init__(self):
        self.logger = logger

    def split(self, vn: VnRequest, policy: PartitionPolicy) -> List[VnPartition]:
        """
        Cut the vnodes of a request into disjoint parts

        halves and k_way cut the ascending vnode order into contiguous
        parts, larger parts first. capacity_ordered sorts vnodes by
        descending demand (lowest index on ties) before cutting, so parts
        come out ordered by descending demand.

        Raises:
            PartitionPolicyError: if the policy asks for more parts than vnodes
        """
        k = policy.parts
        if k > vn.gamma:
            raise PartitionPolicyError(
                f"Policy {policy.kind.value} needs {k} parts but the request has {vn.gamma} vnodes",
                details={"k": k, "gamma": vn.gamma},
            )

        order = list(range(vn.gamma))
        if policy.kind == PolicyKind.CAPACITY_ORDERED:
            order.sort(key=lambda v: (-vn.vnodes[v].demand, v))

        groups = [tuple(int(v) for v in chunk) for chunk in np.array_split(order, k)]
        owner = {v: s for s, group in enumerate(groups) for v in group}

        partitions = []
        for s, group in enumerate(groups):
            internal, cross = [], []
            for e, vlink in enumerate(vn.vlinks):
                ends = (owner[vlink.source], owner[vlink.target])
                if ends == (s, s):
                    internal.append(e)
                elif s in ends:
                    cross.append(e)
            partitions.append(
                VnPartition(index=s, vnodes=group, internal_vlinks=tuple(internal), cross_vlinks=tuple(cross))
            )
        return partitions

    def build_partitioned_lp(
        self,
        net: PhysicalNetwork,
        request: VnRequest,
        partitions: Sequence[VnPartition],
        util: Optional[UtilitySpec] = None,
        node_available: Optional[Sequence[int]] = None,
        node_capacity: Optional[Sequence[float]] = None,
        exact_assignment: bool = False,
    ) -> PartitionedLp:
        """
        Node-embedding program of one request, one block per partition

        Column (v, i) places vnode v on physical node i with bounds
        [0, fit] where fit says whether the node is available and has room
        for the vnode. Local rows keep each vnode assigned at most once
        (exactly once with ``exact_assignment``); coupling rows charge
        vnode demands against the shared node capacities h.

        Raises:
            PartitionPolicyError: empty partition list
            DimensionMismatchError: availability or capacity vectors of the wrong size
        """
        if not partitions:
            raise PartitionPolicyError("At least one partition is required")
        util = util or UtilitySpec()
        n_nodes = net.node_count
        capacity = np.array(node_capacity if node_capacity is not None else net.node_capacities, dtype=float)
        available = np.array(node_available if node_available is not None else np.ones(n_nodes), dtype=int)
        if capacity.shape != (n_nodes,) or available.shape != (n_nodes,):
            raise DimensionMismatchError(
                "Node capacity and availability need one entry per physical node",
                details={"nodes": n_nodes, "capacity": len(capacity), "available": len(available)},
            )
        covered = sorted(v for part in partitions for v in part.vnodes)
        if covered != list(range(request.gamma)):
            raise DimensionMismatchError(
                "Partitions must cover every vnode exactly once",
                details={"gamma": request.gamma, "covered": covered},
            )

        blocks = [
            self._block(request, part, util, capacity, available, exact_assignment)
            for part in partitions
        ]
        self.logger.debug(
            f"Partitioned LP for request {request.id}: {len(blocks)} blocks, "
            f"{sum(b.n_cols for b in blocks)} columns"
        )
        return PartitionedLp(
            request=request,
            partitions=tuple(partitions),
            blocks=tuple(blocks),
            h=np.clip(capacity, 0.0, None),
            util=util,
            exact_assignment=exact_assignment,
        )

    def _block(
        self,
        request: VnRequest,
        part: VnPartition,
        util: UtilitySpec,
        capacity: np.ndarray,
        available: np.ndarray,
        exact_assignment: bool,
    ) -> SubproblemBlock:
        n_nodes = capacity.shape[0]
        columns: List[Tuple[int, int]] = [(v, i) for v in part.vnodes for i in range(n_nodes)]
        n = len(columns)
        c = np.array([node_utility(util, request, v, i) for v, i in columns])
        upper = np.array(
            [
                1.0 if available[i] and request.vnodes[v].demand <= capacity[i] + _CAPACITY_TOL else 0.0
                for v, i in columns
            ]
        )

        rows, rhs, labels = [], [], []
        for r, v in enumerate(part.vnodes):
            row = np.zeros(n)
            row[r * n_nodes : (r + 1) * n_nodes] = 1.0
            rows.append(row)
            rhs.append(1.0)
            labels.append(f"assign[{v}]")
            if exact_assignment:
                rows.append(-row)
                rhs.append(-1.0)
                labels.append(f"assign[{v}]-")

        F = np.zeros((n_nodes, n))
        for col, (v, i) in enumerate(columns):
            F[i, col] = request.vnodes[v].demand

        return SubproblemBlock(
            c=c,
            A=np.array(rows).reshape(len(rows), n),
            b=np.array(rhs),
            F=F,
            upper=upper,
            columns=tuple(columns),
            row_labels=tuple(labels),
        )

    def repair_node_embedding(
        self, plp: PartitionedLp, fractions: np.ndarray
    ) -> Tuple[List[Optional[int]], float]:
        """
        Round node fractions to a capacity-feasible host per vnode

        A vnode goes to its largest fraction (lowest id on ties) when at
        least half of it is placed. Overloaded nodes shed their least
        valuable vnodes (the later one on ties), which then try the other
        nodes in order of fraction.

        Returns:
            (host per vnode or None, utility of the rounded point)
        """
        request = plp.request
        n_nodes = plp.n_nodes
        fit = np.zeros((request.gamma, n_nodes))
        for block in plp.blocks:
            for (v, i), upper in zip(block.columns, block.upper):
                fit[v, i] = upper
        value = np.array(
            [[node_utility(plp.util, request, v, i) for i in range(n_nodes)] for v in range(request.gamma)]
        )
        demand = np.array(request.node_demands)
        residual = np.array(plp.h, dtype=float)

        hosts: List[Optional[int]] = [None] * request.gamma
        masked = np.where(fit > 0, fractions, -1.0)
        for v in range(request.gamma):
            if fractions[v].sum() >= 0.5 and masked[v].max() >= 0:
                hosts[v] = int(np.argmax(masked[v]))
                residual[hosts[v]] -= demand[v]

        dropped: List[int] = []
        for i in range(n_nodes):
            while residual[i] < -_CAPACITY_TOL:
                guests = [v for v in range(request.gamma) if hosts[v] == i]
                victim = min(guests, key=lambda v: (value[v, i], -v))
                hosts[victim] = None
                residual[i] += demand[victim]
                dropped.append(victim)

        for v in sorted(dropped):
            order = sorted(range(n_nodes), key=lambda i: (-fractions[v, i], i))
            for i in order:
                if fit[v, i] > 0 and demand[v] <= residual[i] + _CAPACITY_TOL:
                    hosts[v] = i
                    residual[i] -= demand[v]
                    break

        total = float(sum(value[v, hosts[v]] for v in range(request.gamma) if hosts[v] is not None))
        return hosts, total

    def hosts_to_vectors(self, plp: PartitionedLp, hosts: Sequence[Optional[int]]) -> List[np.ndarray]:
        """Per-partition 0/1 points for a host assignment"""
        xs = []
        for block in plp.blocks:
            x = np.array([1.0 if hosts[v] == i else 0.0 for v, i in block.columns])
            xs.append(x)
        return xs


# Global instance
partitioner = Partitioner()

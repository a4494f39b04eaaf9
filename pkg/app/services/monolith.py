import json
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import DimensionMismatchError, SolverError
from app.models.embedding import DiscoveryMask, Embedding, UtilityMode, UtilitySpec
from app.models.lp import LpBuilder, LpSolution, LpStatus
from app.models.network import PhysicalNetwork
from app.models.program import EmbeddingProgram
from app.models.request import VnRequest
from app.services.lp_engine import lp_engine
from app.services.topology import topology_service

logger = logging.getLogger("app.services.monolith")

_CAPACITY_TOL = 1e-9


def node_utility(util: UtilitySpec, request: VnRequest, vnode: int, node: int) -> float:
    """Per-unit utility of hosting one vnode on one physical node"""
    demand = request.vnodes[vnode].demand
    if util.mode == UtilityMode.WEIGHTED_NODE:
        return util.node_weights[node] * demand
    if util.mode == UtilityMode.AFFINITY:
        return util.affinity[request.id][vnode][node] * demand
    total = request.total_node_demand
    return request.value * demand / total if total > 0 else 0.0


class MonolithicEmbedder:
    """Centralized solve of the full embedding program"""

    def __init__(self, engine=None):
        self.engine = engine or lp_engine
        self.logger = logger

    def build_embedding_program(
        self,
        net: PhysicalNetwork,
        requests: Sequence[VnRequest],
        mask: Optional[DiscoveryMask] = None,
        util: Optional[UtilitySpec] = None,
        relax: bool = False,
        distinct_hosts: bool = False,
        strict_paths: bool = False,
        node_capacity: Optional[Sequence[float]] = None,
        link_capacity: Optional[Dict[Tuple[int, int], float]] = None,
    ) -> EmbeddingProgram:
        """
        Build the embedding program with linearized capacity products

        Capacity rows use w = y*nV and u = y*l with the standard product
        rows. Endpoint-consistency rows tie every path variable to the hosts
        of the vlink's endpoints; co-location variables let vlinks between
        vnodes on the same host skip the path requirement.

        Raises:
            DimensionMismatchError: when the mask does not fit the instance
        """
        util = util or UtilitySpec()
        paths = net.require_paths()
        net = net if net.paths is not None else net.with_paths(paths)
        mask = mask or topology_service.full_mask(net, len(requests))
        n_nodes, n_paths = net.node_count, len(paths)
        if mask.node_available.shape != (n_nodes, len(requests)):
            raise DimensionMismatchError(
                "Node mask shape does not match (nodes, requests)",
                details={"expected": [n_nodes, len(requests)], "got": list(mask.node_available.shape)},
            )
        if mask.path_available.shape != (n_paths, len(requests)):
            raise DimensionMismatchError(
                "Path mask shape does not match (paths, requests)",
                details={"expected": [n_paths, len(requests)], "got": list(mask.path_available.shape)},
            )
        node_capacity = tuple(node_capacity if node_capacity is not None else net.node_capacities)
        link_capacity = dict(link_capacity if link_capacity is not None else net.link_bandwidths)
        if len(node_capacity) != n_nodes:
            raise DimensionMismatchError("One node capacity per physical node")

        integer = not relax
        builder = LpBuilder()

        def var(name: str, cost: float = 0.0, upper: float = 1.0) -> int:
            return builder.add_variable(name, cost=cost, upper=upper, integer=integer)

        # Columns, blockwise per request: nP, p, nV, l, c, y, w, u
        cols: List[Dict[str, Dict]] = []
        for j, request in enumerate(requests):
            block: Dict[str, Dict] = {"nP": {}, "p": {}, "nV": {}, "l": {}, "c": {}, "w": {}, "u": {}}
            for i in range(n_nodes):
                block["nP"][i] = var(f"nP[{j},{i}]", upper=float(mask.node_available[i, j]))
            for k in range(n_paths):
                block["p"][k] = var(f"p[{j},{k}]", upper=float(mask.path_available[k, j]))
            for v in range(request.gamma):
                for i in range(n_nodes):
                    block["nV"][(v, i)] = var(f"nV[{j},{v},{i}]")
            for e in range(request.psi):
                for k in range(n_paths):
                    block["l"][(e, k)] = var(f"l[{j},{e},{k}]")
            if not distinct_hosts:
                for e in range(request.psi):
                    for i in range(n_nodes):
                        block["c"][(e, i)] = var(f"c[{j},{e},{i}]")
            revenue = request.value if util.mode == UtilityMode.REVENUE else 0.0
            block["y"] = var(f"y[{j}]", cost=revenue)
            for v in range(request.gamma):
                for i in range(n_nodes):
                    cost = 0.0 if util.mode == UtilityMode.REVENUE else node_utility(util, request, v, i)
                    block["w"][(v, i)] = var(f"w[{j},{v},{i}]", cost=cost)
            for e in range(request.psi):
                for k in range(n_paths):
                    block["u"][(e, k)] = var(f"u[{j},{e},{k}]")
            cols.append(block)

        for j, request in enumerate(requests):
            block = cols[j]
            y = block["y"]
            # discovery must offer enough candidates
            builder.add_row({block["nP"][i]: -1.0 for i in range(n_nodes)}, -request.gamma, f"disc_nodes[{j}]")
            builder.add_row({block["p"][k]: -1.0 for k in range(n_paths)}, -request.psi, f"disc_paths[{j}]")
            # each vnode mapped once
            for v in range(request.gamma):
                row = {block["nV"][(v, i)]: 1.0 for i in range(n_nodes)}
                builder.add_row(row, 1.0, f"map_vnode[{j},{v}]")
                builder.add_row({col: -1.0 for col in row}, -1.0, f"map_vnode[{j},{v}]-")
            # each vlink mapped once, to a path or by co-location
            for e in range(request.psi):
                row = {block["l"][(e, k)]: 1.0 for k in range(n_paths)}
                row.update({block["c"][(e, i)]: 1.0 for i in range(n_nodes) if (e, i) in block["c"]})
                builder.add_row(row, 1.0, f"map_vlink[{j},{e}]")
                builder.add_row({col: -1.0 for col in row}, -1.0, f"map_vlink[{j},{e}]-")
            # mapped resources must be discovered
            for v in range(request.gamma):
                for i in range(n_nodes):
                    builder.add_row({block["nV"][(v, i)]: 1.0, block["nP"][i]: -1.0}, 0.0, f"use_node[{j},{v},{i}]")
            for e in range(request.psi):
                for k in range(n_paths):
                    builder.add_row({block["l"][(e, k)]: 1.0, block["p"][k]: -1.0}, 0.0, f"use_path[{j},{e},{k}]")
            # acceptance needs every element mapped
            for v in range(request.gamma):
                row = {block["nV"][(v, i)]: -1.0 for i in range(n_nodes)}
                row[y] = 1.0
                builder.add_row(row, 0.0, f"accept_vnode[{j},{v}]")
            for e in range(request.psi):
                row = {block["l"][(e, k)]: -1.0 for k in range(n_paths)}
                row.update({block["c"][(e, i)]: -1.0 for i in range(n_nodes) if (e, i) in block["c"]})
                row[y] = 1.0
                builder.add_row(row, 0.0, f"accept_vlink[{j},{e}]")
            # path endpoints equal the hosts
            for e, vlink in enumerate(request.vlinks):
                for k, path in enumerate(paths.paths):
                    l_col = block["l"][(e, k)]
                    builder.add_row(
                        {l_col: 1.0, block["nV"][(vlink.source, path.source)]: -1.0}, 0.0, f"ep[{j},{e},{k}]s"
                    )
                    builder.add_row(
                        {l_col: 1.0, block["nV"][(vlink.target, path.target)]: -1.0}, 0.0, f"ep[{j},{e},{k}]t"
                    )
                for i in range(n_nodes):
                    if (e, i) not in block["c"]:
                        continue
                    c_col = block["c"][(e, i)]
                    builder.add_row({c_col: 1.0, block["nV"][(vlink.source, i)]: -1.0}, 0.0, f"co[{j},{e},{i}]s")
                    builder.add_row({c_col: 1.0, block["nV"][(vlink.target, i)]: -1.0}, 0.0, f"co[{j},{e},{i}]t")
            if distinct_hosts:
                for i in range(n_nodes):
                    builder.add_row(
                        {block["nV"][(v, i)]: 1.0 for v in range(request.gamma)}, 1.0, f"dh[{j},{i}]"
                    )
            # Product linearization for w = y*nV and u = y*l
            for product, factor in (("w", "nV"), ("u", "l")):
                for key, col in block[product].items():
                    other = block[factor][key]
                    builder.add_row({col: 1.0, y: -1.0}, 0.0, f"lin{product}[{j},{key}]a")
                    builder.add_row({col: 1.0, other: -1.0}, 0.0, f"lin{product}[{j},{key}]b")
                    builder.add_row({y: 1.0, other: 1.0, col: -1.0}, 1.0, f"lin{product}[{j},{key}]c")

        # node capacity
        for i in range(n_nodes):
            row: Dict[int, float] = {}
            for j, request in enumerate(requests):
                for v, vnode in enumerate(request.vnodes):
                    row[cols[j]["w"][(v, i)]] = vnode.demand
            builder.add_row(row, node_capacity[i], f"node_cap[{i}]")

        # bandwidth, per physical link or per path in strict mode
        if strict_paths:
            for k, path in enumerate(paths.paths):
                row = {}
                for j, request in enumerate(requests):
                    for e, vlink in enumerate(request.vlinks):
                        row[cols[j]["u"][(e, k)]] = vlink.demand
                capacity = min(link_capacity[key] for key in path.link_keys)
                builder.add_row(row, capacity, f"path_cap[{k}]")
        else:
            for key in sorted(link_capacity):
                row = {}
                for k, path in enumerate(paths.paths):
                    if key not in path.link_keys:
                        continue
                    for j, request in enumerate(requests):
                        for e, vlink in enumerate(request.vlinks):
                            row[cols[j]["u"][(e, k)]] = vlink.demand
                builder.add_row(row, link_capacity[key], f"link_cap[{key[0]}-{key[1]}]")

        problem = builder.build()
        self.logger.debug(
            f"Embedding program: {problem.n_vars} columns, {problem.n_rows} rows, "
            f"{len(requests)} requests, relax={relax}"
        )
        return EmbeddingProgram(
            problem=problem,
            index_map=builder.index_map,
            net=net,
            requests=tuple(requests),
            mask=mask,
            util=util,
            relax=relax,
            distinct_hosts=distinct_hosts,
            strict_paths=strict_paths,
            node_capacity=node_capacity,
            link_capacity=link_capacity,
        )

    def embed_monolithic(
        self,
        net: PhysicalNetwork,
        requests: Sequence[VnRequest],
        util: Optional[UtilitySpec] = None,
        mask: Optional[DiscoveryMask] = None,
        **program_options,
    ) -> Tuple[List[Embedding], float]:
        """
        Solve the embedding program to integral optimality and decode the embeddings

        Returns:
            (one Embedding per request, objective)

        Raises:
            SolverError: if no integral point could be certified or found
        """
        if not requests:
            return [], 0.0

        program = self.build_embedding_program(net, requests, mask, util, relax=False, **program_options)
        solution = self.engine.solve_ilp(program.problem)

        if solution.status == LpStatus.INFEASIBLE:
            self.logger.warning(f"Embedding program infeasible for {len(requests)} requests")
            return [Embedding.rejected(r.id, "embedding program infeasible") for r in requests], 0.0
        if solution.status == LpStatus.NODE_LIMIT and solution.x.size:
            self.logger.warning("Node limit reached, using the best incumbent")
        elif solution.status != LpStatus.OPTIMAL:
            raise SolverError(
                f"Monolithic solve ended with status {solution.status.value}",
                details={"status": solution.status.value, "nodes": solution.nodes},
            )

        embeddings = [self._decode(program, solution.x, j) for j in range(len(requests))]
        return embeddings, float(solution.objective)

    def _decode(self, program: EmbeddingProgram, x: np.ndarray, j: int) -> Embedding:
        request = program.requests[j]
        if x[program.column("y", j)] < 0.5:
            return Embedding.rejected(request.id, "not selected")
        n_nodes = program.net.node_count
        paths = program.net.paths.paths
        hosts = []
        for v in range(request.gamma):
            values = [x[program.column("nV", j, v, i)] for i in range(n_nodes)]
            hosts.append(int(np.argmax(values)))
        routes: List[Optional[Tuple[int, ...]]] = []
        for e in range(request.psi):
            chosen = [k for k in range(len(paths)) if x[program.column("l", j, e, k)] > 0.5]
            routes.append(paths[chosen[0]].nodes if chosen else None)
        return Embedding(
            request_id=request.id, accepted=True, node_map=tuple(hosts), link_map=tuple(routes)
        )

    def repair_to_integer(self, frac: LpSolution, program: EmbeddingProgram) -> List[Embedding]:
        """
        Round a relaxed solution into a capacity-feasible embedding

        Each vnode goes to its largest fractional host and each vlink to the
        consistent path with the largest fractional value (lowest index on
        ties). While capacities are violated the lowest-value request is
        dropped (the later one on equal values).
        """
        x = frac.x
        requests = program.requests
        candidates = [
            j for j in range(len(requests)) if x[program.column("y", j)] > 1e-6
        ]
        proposals: Dict[int, Embedding] = {}
        for j in list(candidates):
            proposal = self._round_request(program, x, j)
            if proposal is None:
                candidates.remove(j)
            else:
                proposals[j] = proposal

        while candidates:
            overflow = self._capacity_overflow(program, [proposals[j] for j in candidates])
            if overflow is None:
                break
            drop = min(candidates, key=lambda j: (requests[j].value, -j))
            self.logger.debug(f"Repair: {overflow} overflows, dropping request {requests[drop].id}")
            candidates.remove(drop)

        accepted = set(candidates)
        return [
            proposals[j] if j in accepted else Embedding.rejected(requests[j].id, "dropped by rounding")
            for j in range(len(requests))
        ]

    def _round_request(self, program: EmbeddingProgram, x: np.ndarray, j: int) -> Optional[Embedding]:
        request = program.requests[j]
        n_nodes = program.net.node_count
        paths = program.net.paths.paths
        node_ok = program.mask.node_available[:, j]
        fractions = np.array(
            [[x[program.column("nV", j, v, i)] for i in range(n_nodes)] for v in range(request.gamma)]
        )
        hosts = [int(np.argmax(row)) for row in fractions]
        if any(not node_ok[h] for h in hosts):
            return None
        if program.distinct_hosts and len(set(hosts)) != len(hosts):
            return None
        routes: List[Optional[Tuple[int, ...]]] = []
        for e, vlink in enumerate(request.vlinks):
            src, dst = hosts[vlink.source], hosts[vlink.target]
            if src == dst:
                routes.append(None)
                continue
            consistent = [
                k
                for k, path in enumerate(paths)
                if path.source == src and path.target == dst and program.mask.path_available[k, j]
            ]
            if not consistent:
                return None
            best = max(consistent, key=lambda k: (x[program.column("l", j, e, k)], -k))
            routes.append(paths[best].nodes)
        return Embedding(
            request_id=request.id,
            accepted=True,
            node_map=tuple(hosts),
            link_map=tuple(routes),
        )

    def _capacity_overflow(self, program: EmbeddingProgram, embeddings: List[Embedding]) -> Optional[str]:
        by_id = {request.id: request for request in program.requests}
        nodes = np.array(program.node_capacity, dtype=float)
        links = dict(program.link_capacity)
        path_load: Dict[Tuple[int, ...], float] = {}
        for embedding in embeddings:
            request = by_id[embedding.request_id]
            for vnode, host in zip(request.vnodes, embedding.node_map):
                nodes[host] -= vnode.demand
            for vlink, route in zip(request.vlinks, embedding.link_map):
                if route is None:
                    continue
                path_load[route] = path_load.get(route, 0.0) + vlink.demand
                for a, b in zip(route[:-1], route[1:]):
                    links[(min(a, b), max(a, b))] -= vlink.demand
        for i, residual in enumerate(nodes):
            if residual < -_CAPACITY_TOL:
                return f"node {i}"
        if program.strict_paths:
            for route, load in sorted(path_load.items()):
                capacity = min(
                    program.link_capacity[(min(a, b), max(a, b))] for a, b in zip(route[:-1], route[1:])
                )
                if load > capacity + _CAPACITY_TOL:
                    return f"path {route}"
        else:
            for key, residual in sorted(links.items()):
                if residual < -_CAPACITY_TOL:
                    return f"link {key}"
        return None

    def index_map_json(self, program: EmbeddingProgram) -> str:
        """Machine-readable column index sidecar"""
        return json.dumps(program.index_map, indent=2, sort_keys=True)


# Global instance
monolithic_embedder = MonolithicEmbedder()

import logging
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ConfigurationError, SolverError
from app.models.decomposition import IterateTrace, PartitionedLp
from app.models.embedding import DiscoveryMask, Embedding, ResidualCapacity, UtilityMode, UtilitySpec
from app.models.experiment import (
    Algorithm,
    ConvergenceStudy,
    ExperimentConfig,
    ExperimentReport,
    NetworkKind,
    StudyRow,
    VnOutcome,
)
from app.models.lp import LpStatus
from app.models.network import PhysicalNetwork
from app.models.protocol import MessageLog
from app.models.request import VnRequest
from app.services.instance_io import instance_io
from app.services.lp_engine import lp_engine
from app.services.monolith import monolithic_embedder, node_utility
from app.services.partitioner import partitioner
from app.services.primal_decomposition import PrimalDecomposition
from app.services.dual_decomposition import DualDecomposition
from app.services.protocol_sim import ProtocolSimulator
from app.services.subgradient import SubproblemRunner
from app.services.topology import topology_service

logger = logging.getLogger("app.services.harness")

_CAPACITY_TOL = 1e-9


class _Attempt:
    """Result of one placement attempt for one request"""

    def __init__(self):
        self.embedding: Optional[Embedding] = None
        self.reason: Optional[str] = None
        self.trace: Optional[IterateTrace] = None
        self.log = MessageLog()
        self.partitions = 1
        self.seconds = 0.0


def derive_seed(*parts: int) -> int:
    """Independent child seed for a (seed, index, ...) tuple"""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class ExperimentHarness:
    """Online VN arrivals against residual capacity, and the convergence study"""

    def __init__(self):
        self.logger = logger

    def _simulator(self, cfg: ExperimentConfig) -> ProtocolSimulator:
        runner = SubproblemRunner(parallel=cfg.parallel)
        return ProtocolSimulator(
            primal=PrimalDecomposition(runner=runner),
            dual=DualDecomposition(runner=runner),
        )

    # ------------------------------------------------------------------
    # Instance preparation
    # ------------------------------------------------------------------

    def prepare(self, cfg: ExperimentConfig) -> Tuple[PhysicalNetwork, List[VnRequest]]:
        """Physical network with its path set, and the arriving requests"""
        spec = cfg.network
        file_requests: List[VnRequest] = []
        if spec.kind == NetworkKind.FILE:
            net, file_requests = instance_io.load_instance(spec.instance_file)

        requests = file_requests or self.generate_requests(cfg)

        if spec.kind != NetworkKind.FILE:
            node_cap = spec.node_cap
            if spec.node_cap_ratio is not None and requests:
                mean_demand = float(np.mean([r.total_node_demand for r in requests]))
                node_cap = spec.node_cap_ratio * mean_demand / spec.nodes
            if spec.kind == NetworkKind.LINEAR:
                net = topology_service.generate_linear(spec.nodes, node_cap, spec.link_cap)
            else:
                net = topology_service.generate_full_mesh(spec.nodes, node_cap, spec.link_cap)

        paths = topology_service.enumerate_loopfree_paths(net, k_max=spec.k_max, hop_limit=spec.hop_limit)
        return net.with_paths(paths), requests

    def generate_requests(self, cfg: ExperimentConfig) -> List[VnRequest]:
        stream = cfg.vn_stream
        return [
            topology_service.generate_random_vn(
                n_vnodes=stream.n_vnodes,
                link_prob=stream.link_prob,
                demand_range=stream.demand_range,
                value_rule=stream.value_rule,
                seed=derive_seed(cfg.stream_seed, j),
                request_id=j,
                link_demand_range=stream.link_demand_range,
                integral=stream.integral,
            )
            for j in range(stream.count)
        ]

    def utility_for(
        self, cfg: ExperimentConfig, net: PhysicalNetwork, requests: Sequence[VnRequest]
    ) -> UtilitySpec:
        """
        Objective for the whole run

        Raises:
            ConfigurationError: node weights that do not match the network
        """
        utility = cfg.utility
        if utility.mode == UtilityMode.WEIGHTED_NODE:
            weights = utility.node_weights or []
            if len(weights) != net.node_count:
                raise ConfigurationError(
                    "weighted_node utility needs one weight per physical node",
                    details={"nodes": net.node_count, "weights": len(weights)},
                )
            return UtilitySpec(mode=UtilityMode.WEIGHTED_NODE, node_weights=tuple(weights))
        if utility.mode == UtilityMode.AFFINITY:
            low, high = utility.affinity_range
            affinity = {}
            for request in requests:
                rng = np.random.default_rng(derive_seed(cfg.stream_seed, request.id, 1))
                matrix = rng.uniform(low, high, size=(request.gamma, net.node_count))
                affinity[request.id] = tuple(tuple(float(a) for a in row) for row in matrix)
            return UtilitySpec(mode=UtilityMode.AFFINITY, affinity=affinity)
        return UtilitySpec()

    def coupled_optimum(self, plp: PartitionedLp) -> float:
        """Optimum of the partitioned program with coupling enforced"""
        solution = lp_engine.solve_lp(plp.coupled_problem())
        if solution.status != LpStatus.OPTIMAL:
            raise SolverError(
                f"Coupled program ended with status {solution.status.value}",
                details={"request_id": plp.request.id, "status": solution.status.value},
            )
        return float(solution.objective)

    # ------------------------------------------------------------------
    # Experiments
    # ------------------------------------------------------------------

    def run_experiment(self, cfg: ExperimentConfig) -> ExperimentReport:
        """
        Embed the VN stream in arrival order against residual capacity

        Accepted embeddings are permanent. A failed placement is retried once
        with a refreshed availability mask, then rejected. Capacity is
        re-verified after every acceptance.

        Raises:
            ConfigurationError: invalid configuration, before any work
            CapacityViolationError: an acceptance oversubscribed a resource
        """
        started = time.perf_counter()
        net, requests = self.prepare(cfg)
        util = self.utility_for(cfg, net, requests)
        setup_seconds = time.perf_counter() - started
        simulator = self._simulator(cfg)

        policy = cfg.partition_policy
        report_fields = {
            "name": cfg.output.name,
            "algorithm": Algorithm(cfg.algorithm).value,
            "policy": policy.kind.value if policy.k is None else f"{policy.kind.value}:{policy.k}",
        }
        if not requests:
            self.logger.warning("Experiment has no VN requests")
            return ExperimentReport(
                **report_fields,
                error="allocation ratio undefined without requests",
                wall_clock={"setup": setup_seconds, "solve": 0.0, "total": time.perf_counter() - started},
            )

        residual = topology_service.residual_capacity(net, [], requests)
        accepted: List[Embedding] = []
        outcomes: List[VnOutcome] = []
        traces: Dict[int, IterateTrace] = {}
        log = MessageLog()
        solve_seconds = 0.0

        for request in requests:
            outcome, embedding, attempt_logs, trace = self._embed_request(
                cfg, simulator, net, request, util, residual
            )
            for attempt_log in attempt_logs:
                log.extend(attempt_log)
            if trace is not None:
                traces[request.id] = trace
            solve_seconds += outcome.solver_seconds
            if embedding.accepted:
                accepted.append(embedding)
                residual = topology_service.residual_capacity(net, accepted, requests)
            self.logger.info(
                f"VN {request.id}: {'accepted' if outcome.accepted else 'rejected'}"
                + (f" ({outcome.reason})" if outcome.reason else "")
            )
            outcomes.append(outcome)

        n_accepted = sum(1 for outcome in outcomes if outcome.accepted)
        revenue = float(sum(outcome.value for outcome in outcomes if outcome.accepted))
        report = ExperimentReport(
            **report_fields,
            outcomes=tuple(outcomes),
            requested=len(requests),
            accepted=n_accepted,
            allocation_ratio=n_accepted / len(requests),
            revenue=revenue,
            overhead=simulator.overhead_stats(log),
            message_log=log,
            traces=traces,
            wall_clock={
                "setup": setup_seconds,
                "solve": solve_seconds,
                "total": time.perf_counter() - started,
            },
        )
        self.logger.info(
            f"Experiment {report.name}: {n_accepted}/{len(requests)} accepted, revenue {revenue:.4g}, "
            f"{report.overhead.messages} messages"
        )
        return report

    def _embed_request(
        self,
        cfg: ExperimentConfig,
        simulator: ProtocolSimulator,
        net: PhysicalNetwork,
        request: VnRequest,
        util: UtilitySpec,
        residual: ResidualCapacity,
    ) -> Tuple[VnOutcome, Embedding, List[MessageLog], Optional[IterateTrace]]:
        available = np.ones(net.node_count, dtype=np.int8)
        attempts: List[_Attempt] = []
        for _ in range(2):
            attempt = self._place(cfg, simulator, net, request, util, residual, available)
            attempts.append(attempt)
            if attempt.embedding is not None:
                break
            refreshed = self.refresh_mask(net, request, residual)
            if np.array_equal(refreshed & available, available):
                break
            available = refreshed & available

        last = attempts[-1]
        seconds = sum(a.seconds for a in attempts)
        messages = sum(a.log.messages for a in attempts)
        iterations = sum(a.trace.iterations for a in attempts if a.trace is not None)
        if last.embedding is None:
            embedding = Embedding.rejected(request.id, last.reason or "rejected")
            outcome = VnOutcome(
                request_id=request.id,
                accepted=False,
                value=request.value,
                contribution=0.0,
                partitions=last.partitions,
                iterations=iterations,
                messages=messages,
                attempts=len(attempts),
                reason=embedding.reason,
                solver_seconds=seconds,
            )
        else:
            embedding = last.embedding
            outcome = VnOutcome(
                request_id=request.id,
                accepted=True,
                value=request.value,
                contribution=self.contribution(util, request, embedding),
                hosts=embedding.node_map,
                partitions=last.partitions,
                iterations=iterations,
                messages=messages,
                attempts=len(attempts),
                solver_seconds=seconds,
            )
        return outcome, embedding, [a.log for a in attempts], last.trace

    def contribution(self, util: UtilitySpec, request: VnRequest, embedding: Embedding) -> float:
        """Objective earned by an accepted embedding"""
        if util.mode == UtilityMode.REVENUE:
            return request.value
        return float(
            sum(node_utility(util, request, v, host) for v, host in enumerate(embedding.node_map))
        )

    def refresh_mask(self, net: PhysicalNetwork, request: VnRequest, residual: ResidualCapacity) -> np.ndarray:
        """Nodes that can still host a vnode and, for linked requests, reach a neighbor"""
        smallest_vnode = min(request.node_demands)
        smallest_vlink = min((vlink.demand for vlink in request.vlinks), default=0.0)
        mask = np.zeros(net.node_count, dtype=np.int8)
        for i in range(net.node_count):
            if residual.nodes[i] + _CAPACITY_TOL < smallest_vnode:
                continue
            if request.vlinks:
                incident = [bw for (a, b), bw in residual.links.items() if i in (a, b)]
                if not any(bw + _CAPACITY_TOL >= smallest_vlink for bw in incident):
                    continue
            mask[i] = 1
        return mask

    def _place(
        self,
        cfg: ExperimentConfig,
        simulator: ProtocolSimulator,
        net: PhysicalNetwork,
        request: VnRequest,
        util: UtilitySpec,
        residual: ResidualCapacity,
        available: np.ndarray,
    ) -> _Attempt:
        attempt = _Attempt()
        started = time.perf_counter()
        try:
            if Algorithm(cfg.algorithm) == Algorithm.MONOLITHIC:
                self._place_monolithic(cfg, net, request, util, residual, available, attempt)
            else:
                self._place_decomposed(cfg, simulator, net, request, util, residual, available, attempt)
        except SolverError as e:
            self.logger.warning(f"VN {request.id}: solver failure, rejecting ({e.message})")
            attempt.embedding = None
            attempt.reason = f"solver failure: {e.message}"
        attempt.seconds = time.perf_counter() - started
        return attempt

    def _place_monolithic(self, cfg, net, request, util, residual, available, attempt: _Attempt) -> None:
        mask = DiscoveryMask(
            node_available=available.reshape(-1, 1),
            path_available=np.ones((len(net.paths), 1), dtype=np.int8),
        )
        embeddings, _ = monolithic_embedder.embed_monolithic(
            net,
            [request],
            util,
            mask,
            distinct_hosts=cfg.distinct_hosts,
            node_capacity=residual.nodes,
            link_capacity=residual.links,
        )
        embedding = embeddings[0]
        if embedding.accepted:
            problems = topology_service.check_embedding(
                net, request, embedding, node_available=np.flatnonzero(available).tolist()
            )
            if problems:
                raise SolverError("Decoded embedding violates mapping rules", details={"problems": problems})
            attempt.embedding = embedding
        else:
            attempt.reason = embedding.reason

    def _place_decomposed(
        self, cfg, simulator: ProtocolSimulator, net, request, util, residual, available, attempt: _Attempt
    ) -> None:
        policy = cfg.partition_policy.for_request(request.gamma)
        parts = partitioner.split(request, policy)
        plp = partitioner.build_partitioned_lp(
            net,
            request,
            parts,
            util,
            node_available=available,
            node_capacity=residual.nodes,
            exact_assignment=cfg.exact_assignment,
        )
        attempt.partitions = plp.k
        reference = None if cfg.blind else self.coupled_optimum(plp)
        trace, log = simulator.run_distributed(
            cfg.algorithm, plp, cfg.step_rule, cfg.stop, reference, run=request.id
        )
        attempt.trace, attempt.log = trace, log

        hosts, _ = partitioner.repair_node_embedding(plp, np.asarray(trace.allocation))
        unplaced = [v for v, host in enumerate(hosts) if host is None]
        if unplaced:
            attempt.reason = f"vnodes {unplaced} not placed"
            return

        routes, failed = self.route_vlinks(net, request, hosts, residual)
        if failed is not None:
            attempt.reason = f"no path with capacity for vlink {failed}"
            return
        attempt.embedding = Embedding(
            request_id=request.id,
            accepted=True,
            node_map=tuple(hosts),
            link_map=tuple(routes),
        )

    def route_vlinks(
        self,
        net: PhysicalNetwork,
        request: VnRequest,
        hosts: Sequence[int],
        residual: ResidualCapacity,
    ) -> Tuple[List[Optional[Tuple[int, ...]]], Optional[int]]:
        """
        Charge vlinks on the first path with enough residual bandwidth

        Paths are tried in path-set order (hop count, then node sequence).
        Co-located endpoints need no path.

        Returns:
            (route per vlink, index of the first vlink that found no path or None)
        """
        links = dict(residual.links)
        routes: List[Optional[Tuple[int, ...]]] = []
        for e, vlink in enumerate(request.vlinks):
            src, dst = hosts[vlink.source], hosts[vlink.target]
            if src == dst:
                routes.append(None)
                continue
            for path in net.paths.between(src, dst):
                if min(links[key] for key in path.link_keys) + _CAPACITY_TOL >= vlink.demand:
                    for key in path.link_keys:
                        links[key] -= vlink.demand
                    routes.append(path.nodes)
                    break
            else:
                return routes, e
        return routes, None

    # ------------------------------------------------------------------
    # Convergence study
    # ------------------------------------------------------------------

    def run_convergence_study(self, cfg: ExperimentConfig) -> ConvergenceStudy:
        """
        Primal and dual runs on one identical instance

        The first request of the stream is partitioned by the configured
        policy; gaps are measured against the coupled optimum, or in blind
        mode against the other algorithm's best value.

        Raises:
            ConfigurationError: if the config does not name both algorithms or has no request
        """
        wanted = {Algorithm(a) for a in cfg.study_algorithms}
        if not {Algorithm.PRIMAL, Algorithm.DUAL} <= wanted:
            raise ConfigurationError(
                "A convergence study needs both the primal and the dual algorithm",
                details={"study_algorithms": sorted(a.value for a in wanted)},
            )
        net, requests = self.prepare(cfg)
        if not requests:
            raise ConfigurationError("A convergence study needs at least one VN request")
        request = requests[0]
        util = self.utility_for(cfg, net, [request])
        simulator = self._simulator(cfg)

        parts = partitioner.split(request, cfg.partition_policy.for_request(request.gamma))
        plp = partitioner.build_partitioned_lp(net, request, parts, util, exact_assignment=cfg.exact_assignment)
        reference = None if cfg.blind else self.coupled_optimum(plp)

        primal, primal_log = simulator.run_distributed(Algorithm.PRIMAL, plp, cfg.step_rule, cfg.stop, reference)
        dual, dual_log = simulator.run_distributed(Algorithm.DUAL, plp, cfg.step_rule, cfg.stop, reference)
        if cfg.blind:
            primal_best, dual_best = primal.best_primal, dual.best_bound
            primal = primal.with_reference(dual_best)
            dual = dual.with_reference(primal_best)

        rows = []
        for t in range(1, max(primal.iterations, dual.iterations) + 1):
            p = primal.records[t - 1] if t <= primal.iterations else None
            d = dual.records[t - 1] if t <= dual.iterations else None
            rows.append(
                StudyRow(
                    t=t,
                    primal_gap=p.gap if p else None,
                    dual_gap=d.gap if d else None,
                    primal_seconds=p.elapsed if p else None,
                    dual_seconds=d.elapsed if d else None,
                )
            )

        self.logger.info(
            f"Convergence study on request {request.id} ({plp.k} partitions): "
            f"primal gap {primal.final_gap:.4g} after {primal.iterations}, "
            f"dual gap {dual.final_gap:.4g} after {dual.iterations}"
        )
        return ConvergenceStudy(
            reference=reference,
            blind=cfg.blind,
            primal=primal,
            dual=dual,
            rows=tuple(rows),
            messages={"primal": primal_log.messages, "dual": dual_log.messages},
        )


# Global instance
experiment_harness = ExperimentHarness()

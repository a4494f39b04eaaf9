import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.core.exceptions import DimensionMismatchError
from app.models.embedding import DiscoveryMask, UtilityMode, UtilitySpec
from app.models.lp import LpStatus
from app.models.network import PhysicalNetwork, PhysicalNode
from app.services.lp_engine import lp_engine
from app.services.monolith import monolithic_embedder, node_utility
from app.services.topology import topology_service
from tests.helpers import make_request


def with_paths(net, k_max=4):
    return net.with_paths(topology_service.enumerate_loopfree_paths(net, k_max=k_max))


class TestNodeUtility:
    def test_revenue_splits_value_by_demand(self):
        request = make_request([1.0, 3.0], value=8.0)
        assert node_utility(UtilitySpec(), request, 1, 0) == pytest.approx(6.0)

    def test_weighted_node(self):
        util = UtilitySpec(mode=UtilityMode.WEIGHTED_NODE, node_weights=(1.0, 2.0))
        assert node_utility(util, make_request([3.0]), 0, 1) == 6.0

    def test_affinity(self):
        util = UtilitySpec(mode=UtilityMode.AFFINITY, affinity={0: ((0.5, 2.0),)})
        assert node_utility(util, make_request([4.0]), 0, 0) == 2.0


class TestBuildProgram:
    def test_column_and_row_families(self, two_node_net):
        request = make_request([1.0, 1.0], links=[(0, 1, 1.0)])
        program = monolithic_embedder.build_embedding_program(with_paths(two_node_net), [request])
        for family, indices in (("nP", (0, 1)), ("p", (0, 1)), ("nV", (0, 1, 0)), ("l", (0, 0, 1)),
                                ("c", (0, 0, 1)), ("y", (0,)), ("w", (0, 0, 0)), ("u", (0, 0, 0))):
            assert program.column(family, *indices) is not None
        labels = program.problem.row_labels
        for prefix in ("disc_nodes[0]", "map_vnode[0,0]", "map_vlink[0,0]", "use_node[0,0,0]",
                       "accept_vnode[0,0]", "ep[0,0,0]s", "co[0,0,0]s", "node_cap[0]", "link_cap[0-1]"):
            assert prefix in labels
        assert program.problem.integer.all()

    def test_relaxed_program_is_continuous(self, two_node_net):
        program = monolithic_embedder.build_embedding_program(two_node_net, [make_request([1.0])], relax=True)
        assert not program.problem.integer.any()

    def test_distinct_hosts_drops_colocation(self, two_node_net):
        request = make_request([1.0, 1.0], links=[(0, 1, 1.0)])
        program = monolithic_embedder.build_embedding_program(two_node_net, [request], distinct_hosts=True)
        assert program.column("c", 0, 0, 0) is None
        assert "dh[0,0]" in program.problem.row_labels

    def test_strict_paths(self, two_node_net):
        request = make_request([1.0, 1.0], links=[(0, 1, 1.0)])
        program = monolithic_embedder.build_embedding_program(two_node_net, [request], strict_paths=True)
        assert "path_cap[0]" in program.problem.row_labels
        assert not any(label.startswith("link_cap") for label in program.problem.row_labels)

    def test_mask_shape_mismatch(self, two_node_net):
        mask = DiscoveryMask(node_available=np.ones((3, 1)), path_available=np.ones((2, 1)))
        with pytest.raises(DimensionMismatchError):
            monolithic_embedder.build_embedding_program(two_node_net, [make_request([1.0])], mask)

    def test_index_map_json(self, two_node_net):
        program = monolithic_embedder.build_embedding_program(two_node_net, [make_request([1.0])])
        index = json.loads(monolithic_embedder.index_map_json(program))
        assert index["y[0]"] == program.column("y", 0)
        assert sorted(index.values()) == list(range(program.problem.n_vars))


class TestEmbedMonolithic:
    def test_single_vnode_accepted(self, two_node_net):
        embeddings, objective = monolithic_embedder.embed_monolithic(two_node_net, [make_request([3.0])])
        assert embeddings[0].accepted
        assert objective == 3.0

    def test_no_requests(self, two_node_net):
        assert monolithic_embedder.embed_monolithic(two_node_net, []) == ([], 0.0)

    def test_empty_mask_is_infeasible(self, two_node_net):
        net = with_paths(two_node_net)
        mask = DiscoveryMask(node_available=np.zeros((2, 1)), path_available=np.zeros((2, 1)))
        embeddings, objective = monolithic_embedder.embed_monolithic(net, [make_request([1.0])], mask=mask)
        assert not embeddings[0].accepted
        assert embeddings[0].reason == "embedding program infeasible"
        assert objective == 0.0

    def test_oversized_demand_is_rejected(self, two_node_net):
        embeddings, objective = monolithic_embedder.embed_monolithic(two_node_net, [make_request([20.0])])
        assert not embeddings[0].accepted
        assert embeddings[0].reason == "not selected"
        assert objective == 0.0

    def test_weighted_utility_prefers_the_heavier_node(self, two_node_net, weighted_util):
        embeddings, objective = monolithic_embedder.embed_monolithic(
            two_node_net, [make_request([3.0])], weighted_util([1.0, 2.0])
        )
        assert embeddings[0].node_map == (1,)
        assert objective == 6.0

    def test_vlink_gets_a_consistent_path(self, triangle):
        net = with_paths(triangle, k_max=1)
        request = make_request([6.0, 6.0], links=[(0, 1, 2.0)])
        embeddings, objective = monolithic_embedder.embed_monolithic(net, [request])
        embedding = embeddings[0]
        assert embedding.accepted and objective == 12.0
        assert embedding.node_map[0] != embedding.node_map[1]
        assert topology_service.check_embedding(net, request, embedding) == []

    def test_colocation_skips_the_path(self, two_node_net):
        # The vlink exceeds the only physical link, so both vnodes share a host
        request = make_request([4.0, 4.0], links=[(0, 1, 20.0)])
        embeddings, _ = monolithic_embedder.embed_monolithic(with_paths(two_node_net), [request])
        assert embeddings[0].accepted
        assert embeddings[0].node_map[0] == embeddings[0].node_map[1]
        assert embeddings[0].link_map == (None,)

    def test_distinct_hosts_rejects_what_colocation_accepts(self, two_node_net):
        request = make_request([4.0, 4.0], links=[(0, 1, 20.0)])
        embeddings, objective = monolithic_embedder.embed_monolithic(
            with_paths(two_node_net), [request], distinct_hosts=True
        )
        assert not embeddings[0].accepted
        assert objective == 0.0

    def test_capacity_picks_the_more_valuable_request(self, two_node_net):
        requests = [make_request([8.0], request_id=0, value=1.0), make_request([8.0], request_id=1, value=5.0),
                    make_request([8.0], request_id=2, value=3.0)]
        embeddings, objective = monolithic_embedder.embed_monolithic(two_node_net, requests)
        assert [e.accepted for e in embeddings] == [False, True, True]
        assert objective == 8.0

    def test_competing_requests_on_one_node(self):
        net = PhysicalNetwork(nodes=(PhysicalNode(id=0, cpu_capacity=5.0),))
        requests = [make_request([3.0], request_id=0), make_request([4.0], request_id=1)]
        embeddings, objective = monolithic_embedder.embed_monolithic(net, requests)
        assert [e.accepted for e in embeddings] == [False, True]
        assert objective == 4.0

    def test_relaxation_bounds_the_integral_optimum(self, triangle):
        net = with_paths(triangle, k_max=2)
        requests = [make_request([7.0, 6.0], links=[(0, 1, 3.0)], request_id=0),
                    make_request([5.0, 8.0], request_id=1)]
        _, integral = monolithic_embedder.embed_monolithic(net, requests)
        program = monolithic_embedder.build_embedding_program(net, requests, relax=True)
        relaxed = lp_engine.solve_lp(program.problem)
        assert relaxed.status == LpStatus.OPTIMAL
        assert relaxed.objective >= integral - 1e-6

    @settings(max_examples=30, deadline=None)
    @given(
        demand=st.integers(1, 15),
        caps=st.tuples(st.integers(1, 12), st.integers(1, 12)),
        weights=st.tuples(st.integers(0, 5), st.integers(0, 5)),
    )
    def test_matches_brute_force_on_toy_instances(self, demand, caps, weights):
        net = PhysicalNetwork(
            nodes=(PhysicalNode(id=0, cpu_capacity=caps[0]), PhysicalNode(id=1, cpu_capacity=caps[1])),
        )
        util = UtilitySpec(mode=UtilityMode.WEIGHTED_NODE, node_weights=tuple(float(w) for w in weights))
        program = monolithic_embedder.build_embedding_program(net, [make_request([float(demand)])], util=util)
        assert program.problem.n_vars <= 12
        exact = lp_engine.brute_force_binary(program.problem)
        _, objective = monolithic_embedder.embed_monolithic(net, [make_request([float(demand)])], util)
        assert objective == pytest.approx(exact.objective)


class TestRepairToInteger:
    def test_drops_the_lowest_value_until_feasible(self):
        net = PhysicalNetwork(nodes=(PhysicalNode(id=0, cpu_capacity=10.0),))
        requests = [make_request([6.0], request_id=0, value=6.0), make_request([6.0], request_id=1, value=7.0),
                    make_request([6.0], request_id=2, value=5.0)]
        program = monolithic_embedder.build_embedding_program(net, requests, relax=True)
        relaxed = lp_engine.solve_lp(program.problem)
        embeddings = monolithic_embedder.repair_to_integer(relaxed, program)
        assert [e.accepted for e in embeddings] == [False, True, False]
        assert embeddings[0].reason == "dropped by rounding"
        topology_service.residual_capacity(net, embeddings, requests)

    def test_integral_solution_survives(self, two_node_net):
        program = monolithic_embedder.build_embedding_program(two_node_net, [make_request([3.0])], relax=True)
        relaxed = lp_engine.solve_lp(program.problem)
        embeddings = monolithic_embedder.repair_to_integer(relaxed, program)
        assert embeddings[0].accepted

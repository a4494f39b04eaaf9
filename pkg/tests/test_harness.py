import numpy as np
import pytest

from app.core.exceptions import ConfigurationError
from app.models.embedding import ResidualCapacity
from app.models.experiment import ExperimentConfig
from app.models.network import PhysicalLink, PhysicalNetwork, PhysicalNode
from app.services.harness import derive_seed, experiment_harness
from app.services.instance_io import instance_io
from app.services.lp_engine import lp_engine
from app.services.partitioner import partitioner
from app.services.report_writer import report_writer
from app.services.topology import topology_service
from tests.helpers import make_request


def config(base, **updates):
    data = dict(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return ExperimentConfig.model_validate(data)


def two_node_network(node_cap):
    return PhysicalNetwork(
        nodes=(PhysicalNode(id=0, cpu_capacity=node_cap), PhysicalNode(id=1, cpu_capacity=node_cap)),
        links=(PhysicalLink(source=0, target=1, bandwidth=10.0),),
    )


class TestSeeds:
    def test_derive_seed_is_stable(self):
        assert derive_seed(7, 0) == derive_seed(7, 0)
        assert derive_seed(7, 0) != derive_seed(7, 1)
        assert derive_seed(7, 0) != derive_seed(8, 0)

    def test_seed_override(self, experiment_dict):
        cfg = config(experiment_dict, seed=99)
        assert cfg.stream_seed == 99
        assert config(experiment_dict).stream_seed == 7


class TestPrepare:
    def test_generated_instance(self, experiment_dict):
        net, requests = experiment_harness.prepare(config(experiment_dict))
        assert net.node_count == 4
        assert len(net.paths) == 4 * 3 * 2
        assert [r.id for r in requests] == [0, 1, 2]
        assert all(r.gamma == 3 for r in requests)

    def test_requests_are_reproducible(self, experiment_dict):
        first = experiment_harness.generate_requests(config(experiment_dict))
        second = experiment_harness.generate_requests(config(experiment_dict))
        assert first == second

    def test_capacity_ratio(self, experiment_dict):
        cfg = config(experiment_dict, network={"node_cap_ratio": 2.0})
        net, requests = experiment_harness.prepare(cfg)
        mean = np.mean([r.total_node_demand for r in requests])
        assert net.nodes[0].cpu_capacity == pytest.approx(2.0 * mean / 4)

    def test_instance_file(self, experiment_dict, tmp_path, triangle):
        path = instance_io.save_instance(tmp_path / "inst.json", triangle, [make_request([1.0, 2.0], links=[(0, 1, 1.0)])])
        cfg = config(experiment_dict, network={"kind": "file", "instance_file": str(path)})
        net, requests = experiment_harness.prepare(cfg)
        assert net.node_count == 3
        assert len(requests) == 1 and requests[0].psi == 1


class TestUtility:
    def test_weighted_node_needs_one_weight_per_node(self, experiment_dict):
        cfg = config(experiment_dict, utility={"mode": "weighted_node", "node_weights": [1.0, 2.0]})
        with pytest.raises(ConfigurationError):
            experiment_harness.run_experiment(cfg)

    def test_affinity_is_seeded(self, experiment_dict):
        cfg = config(experiment_dict, utility={"mode": "affinity"})
        net, requests = experiment_harness.prepare(cfg)
        first = experiment_harness.utility_for(cfg, net, requests)
        second = experiment_harness.utility_for(cfg, net, requests)
        assert first == second
        assert all(0.5 <= a <= 1.5 for row in first.affinity[0] for a in row)


class TestRunExperiment:
    def test_no_requests(self, experiment_dict):
        report = experiment_harness.run_experiment(config(experiment_dict, vn_stream={"count": 0}))
        assert report.error is not None
        assert report.allocation_ratio is None
        assert report.revenue == 0.0
        assert report.outcomes == ()

    @pytest.mark.parametrize("algorithm", ["primal", "dual"])
    def test_abundant_capacity_accepts_everything(self, experiment_dict, algorithm):
        report = experiment_harness.run_experiment(config(experiment_dict, algorithm=algorithm))
        assert report.allocation_ratio == 1.0
        assert report.accepted == report.requested == 3
        assert report.revenue == pytest.approx(sum(o.value for o in report.outcomes))
        assert report.overhead.messages == sum(o.messages for o in report.outcomes)
        assert report.overhead.messages >= 3 * 4
        assert set(report.traces) == {0, 1, 2}

    def test_monolithic(self, experiment_dict):
        cfg = config(
            experiment_dict,
            algorithm="monolithic",
            network={"nodes": 3, "k_max": 1},
            vn_stream={"count": 2, "n_vnodes": 2, "link_prob": 1.0},
        )
        report = experiment_harness.run_experiment(cfg)
        assert report.allocation_ratio == 1.0
        assert report.overhead.messages == 0
        assert all(o.iterations == 0 for o in report.outcomes)

    def test_oversized_requests_are_retried_then_rejected(self, experiment_dict):
        cfg = config(
            experiment_dict,
            network={"nodes": 2, "node_cap": 3.0},
            vn_stream={"count": 2, "n_vnodes": 2, "demand_range": [4.0, 5.0]},
        )
        report = experiment_harness.run_experiment(cfg)
        assert report.allocation_ratio == 0.0
        assert all(o.attempts == 2 for o in report.outcomes)
        assert all("not placed" in o.reason for o in report.outcomes)

    @pytest.mark.parametrize("algorithm", ["primal", "dual", "monolithic"])
    def test_accepted_hosts_respect_capacity(self, experiment_dict, algorithm):
        cfg = config(
            experiment_dict,
            algorithm=algorithm,
            network={"nodes": 3, "node_cap": 8.0, "k_max": 1},
            vn_stream={"count": 5, "n_vnodes": 2, "demand_range": [2.0, 6.0], "link_prob": 0.0},
            stop={"max_iterations": 30},
        )
        report = experiment_harness.run_experiment(cfg)
        _, requests = experiment_harness.prepare(cfg)
        load = np.zeros(3)
        for outcome in report.outcomes:
            if outcome.accepted:
                for v, host in enumerate(outcome.hosts):
                    load[host] += requests[outcome.request_id].vnodes[v].demand
        assert (load <= 8.0 + 1e-9).all()
        assert 0.0 <= report.allocation_ratio <= 1.0

    def test_reports_are_deterministic(self, experiment_dict, tmp_path):
        digests = []
        for run in range(2):
            report = experiment_harness.run_experiment(config(experiment_dict))
            written = report_writer.emit_report(report, tmp_path / f"run{run}")
            digests.append(report_writer.report_digest(written[0]))
        assert digests[0] == digests[1]

    def test_partitioning_adds_signaling(self, experiment_dict):
        whole = experiment_harness.run_experiment(config(experiment_dict, partition_policy={"kind": "none"}))
        halves = experiment_harness.run_experiment(config(experiment_dict))
        assert whole.overhead.messages == 2 * whole.requested
        assert halves.overhead.messages > whole.overhead.messages


class TestCapacityMonotonicity:
    @pytest.mark.parametrize("algorithm", ["monolithic", "primal", "dual"])
    def test_abundant_capacity_accepts_a_superset(self, experiment_dict, algorithm):
        accepted = []
        for node_cap in (4.0, 100.0):
            cfg = config(
                experiment_dict,
                algorithm=algorithm,
                network={"nodes": 3, "node_cap": node_cap, "k_max": 1},
                vn_stream={"count": 4, "n_vnodes": 2, "link_prob": 0.0, "demand_range": [2.0, 6.0]},
            )
            report = experiment_harness.run_experiment(cfg)
            accepted.append({o.request_id for o in report.outcomes if o.accepted})
        assert accepted[0] <= accepted[1]
        assert accepted[1] == {0, 1, 2, 3}

    def test_single_request_acceptance_grows_with_capacity(self, experiment_dict, tmp_path):
        accepted = []
        for node_cap in (5.0, 10.0, 20.0):
            path = instance_io.save_instance(
                tmp_path / f"cap{node_cap:g}.json", two_node_network(node_cap), [make_request([7.0, 6.0])]
            )
            cfg = config(
                experiment_dict, algorithm="monolithic", network={"kind": "file", "instance_file": str(path)}
            )
            accepted.append(experiment_harness.run_experiment(cfg).accepted)
        assert accepted == [0, 1, 1]

    def test_online_admission_can_trade_requests_when_capacity_doubles(self, experiment_dict, tmp_path):
        # Two 11-unit requests only fit once capacity doubles, and then crowd out the two 10-unit ones
        requests = [make_request([d], request_id=i) for i, d in enumerate((11.0, 11.0, 10.0, 10.0))]
        accepted = []
        for node_cap in (10.0, 20.0):
            path = instance_io.save_instance(tmp_path / f"cap{node_cap:g}.json", two_node_network(node_cap), requests)
            cfg = config(
                experiment_dict, algorithm="monolithic", network={"kind": "file", "instance_file": str(path)}
            )
            report = experiment_harness.run_experiment(cfg)
            accepted.append({o.request_id for o in report.outcomes if o.accepted})
        assert accepted == [{2, 3}, {0, 1}]


class TestHelpers:
    def test_route_vlinks_skips_a_saturated_path(self, triangle):
        net = triangle.with_paths(topology_service.enumerate_loopfree_paths(triangle, k_max=2))
        request = make_request([1.0, 1.0], links=[(0, 1, 2.0)])
        residual = ResidualCapacity(nodes=(10.0, 10.0, 10.0), links={(0, 1): 1.0, (0, 2): 5.0, (1, 2): 5.0})
        routes, failed = experiment_harness.route_vlinks(net, request, [0, 1], residual)
        assert failed is None
        assert routes == [(0, 2, 1)]

    def test_route_vlinks_reports_the_failing_vlink(self, triangle):
        net = triangle.with_paths(topology_service.enumerate_loopfree_paths(triangle, k_max=2))
        request = make_request([1.0, 1.0, 1.0], links=[(0, 1, 1.0), (1, 2, 9.0)])
        residual = ResidualCapacity(nodes=(10.0, 10.0, 10.0), links={(0, 1): 5.0, (0, 2): 5.0, (1, 2): 5.0})
        routes, failed = experiment_harness.route_vlinks(net, request, [0, 1, 2], residual)
        assert failed == 1
        assert routes == [(0, 1)]

    def test_colocated_vlink_needs_no_path(self, triangle):
        net = triangle.with_paths(topology_service.enumerate_loopfree_paths(triangle, k_max=2))
        request = make_request([1.0, 1.0], links=[(0, 1, 50.0)])
        residual = topology_service.residual_capacity(net, [], [request])
        assert experiment_harness.route_vlinks(net, request, [2, 2], residual) == ([None], None)

    def test_refresh_mask(self, triangle):
        request = make_request([1.0, 3.0], links=[(0, 1, 2.0)])
        residual = ResidualCapacity(nodes=(0.5, 10.0, 10.0), links={(0, 1): 1.0, (0, 2): 1.0, (1, 2): 4.0})
        assert experiment_harness.refresh_mask(triangle, request, residual).tolist() == [0, 1, 1]
        starved = ResidualCapacity(nodes=(10.0, 10.0, 10.0), links={(0, 1): 1.0, (0, 2): 1.0, (1, 2): 1.0})
        assert experiment_harness.refresh_mask(triangle, request, starved).tolist() == [0, 0, 0]


class TestConvergenceStudy:
    def test_needs_both_algorithms(self, experiment_dict):
        with pytest.raises(ConfigurationError):
            experiment_harness.run_convergence_study(config(experiment_dict, study_algorithms=["primal"]))

    def test_needs_a_request(self, experiment_dict):
        with pytest.raises(ConfigurationError):
            experiment_harness.run_convergence_study(config(experiment_dict, vn_stream={"count": 0}))

    def test_single_partition_matches_the_coupled_program(self, experiment_dict):
        cfg = config(experiment_dict, partition_policy={"kind": "none"})
        study = experiment_harness.run_convergence_study(cfg)
        net, requests = experiment_harness.prepare(cfg)
        plp = partitioner.build_partitioned_lp(
            net, requests[0], partitioner.split(requests[0], cfg.partition_policy)
        )
        optimum = lp_engine.solve_lp(plp.coupled_problem()).objective
        assert study.reference == pytest.approx(optimum)
        assert study.primal.best_primal == pytest.approx(optimum)
        assert study.dual.best_bound == pytest.approx(optimum)
        assert study.messages == {"primal": 2, "dual": 2}
        assert len(study.rows) == 1

    def test_rows_align_both_traces(self, experiment_dict):
        study = experiment_harness.run_convergence_study(config(experiment_dict))
        assert len(study.rows) == max(study.primal.iterations, study.dual.iterations)
        assert [row.t for row in study.rows] == list(range(1, len(study.rows) + 1))

    def test_blind_mode_measures_against_the_other_algorithm(self, experiment_dict):
        study = experiment_harness.run_convergence_study(config(experiment_dict, blind=True))
        assert study.reference is None
        assert study.blind
        assert study.primal.reference == pytest.approx(study.dual.best_bound)
        assert study.dual.reference == pytest.approx(study.primal.best_primal)
        assert all(r.gap >= -1e-6 for r in study.primal.records)

    def test_identical_configs_give_identical_traces(self, experiment_dict):
        first = experiment_harness.run_convergence_study(config(experiment_dict))
        second = experiment_harness.run_convergence_study(config(experiment_dict))
        assert [r.objective for r in first.primal.records] == [r.objective for r in second.primal.records]
        assert [r.objective for r in first.dual.records] == [r.objective for r in second.dual.records]


@pytest.mark.slow
class TestLargeScenarios:
    def test_hundred_iterations_on_a_large_request(self):
        cfg = ExperimentConfig.model_validate(
            {
                "network": {"kind": "mesh", "nodes": 10, "node_cap": 30.0, "link_cap": 100.0, "k_max": 1},
                "vn_stream": {"count": 1, "n_vnodes": 50, "link_prob": 0.0, "demand_range": [1.0, 10.0], "seed": 3},
                "partition_policy": {"kind": "halves"},
                "stop": {"max_iterations": 100, "gap_tolerance": 0.0},
            }
        )
        study = experiment_harness.run_convergence_study(cfg)
        assert study.primal.iterations <= 100 and study.dual.iterations <= 100
        best = [r.best_primal for r in study.primal.records]
        assert best == sorted(best)
        bounds = [r.best_bound for r in study.dual.records]
        assert bounds == sorted(bounds, reverse=True)
        assert bounds[-1] >= study.reference - 1e-6 >= best[-1] - 2e-6

    def test_prototype_stream_signaling(self):
        base = {
            "network": {"kind": "mesh", "nodes": 5, "node_cap": 40.0, "link_cap": 100.0, "k_max": 2},
            "vn_stream": {"count": 100, "n_vnodes": 4, "link_prob": 0.5, "demand_range": [1.0, 5.0], "seed": 1},
            "stop": {"max_iterations": 30},
        }
        whole = experiment_harness.run_experiment(
            ExperimentConfig.model_validate({**base, "partition_policy": {"kind": "none"}})
        )
        halves = experiment_harness.run_experiment(
            ExperimentConfig.model_validate({**base, "partition_policy": {"kind": "halves"}})
        )
        assert 200 <= whole.overhead.messages <= 400
        assert halves.overhead.messages > whole.overhead.messages
        assert len(whole.outcomes) == len(halves.outcomes) == 100

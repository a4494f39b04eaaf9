import pytest

from app.models.embedding import UtilityMode, UtilitySpec
from app.models.network import PhysicalLink, PhysicalNetwork, PhysicalNode
from app.services.topology import topology_service


@pytest.fixture
def two_node_net():
    return PhysicalNetwork(
        nodes=(PhysicalNode(id=0, cpu_capacity=10.0), PhysicalNode(id=1, cpu_capacity=10.0)),
        links=(PhysicalLink(source=0, target=1, bandwidth=10.0),),
    )


@pytest.fixture
def triangle():
    net = PhysicalNetwork(
        nodes=tuple(PhysicalNode(id=i, cpu_capacity=10.0) for i in range(3)),
        links=(
            PhysicalLink(source=0, target=1, bandwidth=10.0),
            PhysicalLink(source=0, target=2, bandwidth=10.0),
            PhysicalLink(source=1, target=2, bandwidth=10.0),
        ),
    )
    return net


@pytest.fixture
def mesh5():
    net = topology_service.generate_full_mesh(5, 100.0, 100.0)
    return net.with_paths(topology_service.enumerate_loopfree_paths(net, k_max=2))


@pytest.fixture
def weighted_util():
    def build(weights):
        return UtilitySpec(mode=UtilityMode.WEIGHTED_NODE, node_weights=tuple(weights))

    return build


@pytest.fixture
def experiment_dict(tmp_path):
    """Small experiment configuration as it would appear in a JSON file"""
    return {
        "network": {"kind": "mesh", "nodes": 4, "node_cap": 100.0, "link_cap": 100.0, "k_max": 2},
        "vn_stream": {"count": 3, "n_vnodes": 3, "link_prob": 0.5, "demand_range": [1.0, 5.0], "seed": 7},
        "algorithm": "primal",
        "partition_policy": {"kind": "halves"},
        "stop": {"max_iterations": 20},
        "output": {"out_dir": str(tmp_path / "out"), "name": "small"},
    }

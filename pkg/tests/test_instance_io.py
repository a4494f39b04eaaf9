import json

import pytest

from app.core.exceptions import ConfigurationError, InstanceFormatError
from app.services.instance_io import instance_io
from app.services.topology import topology_service
from tests.helpers import make_request


def write(path, data):
    path.write_text(json.dumps(data))
    return path


@pytest.fixture
def instance_dict():
    return {
        "physical_network": {
            "nodes": [{"id": 0, "cpu_capacity": 10.0}, {"id": 1, "cpu_capacity": 5.0}],
            "links": [{"source": 0, "target": 1, "bandwidth": 4.0}],
        },
        "vn_requests": [
            {"id": 0, "vnodes": [{"demand": 2.0}, {"demand": 1.0}], "vlinks": [{"source": 0, "target": 1, "demand": 1.0}], "value": 3.0},
        ],
    }


class TestLoadInstance:
    def test_loads_network_and_requests(self, tmp_path, instance_dict):
        net, requests = instance_io.load_instance(write(tmp_path / "inst.json", instance_dict))
        assert net.node_capacities == [10.0, 5.0]
        assert requests[0].psi == 1
        assert requests[0].value == 3.0

    def test_requests_are_optional(self, tmp_path, instance_dict):
        del instance_dict["vn_requests"]
        _, requests = instance_io.load_instance(write(tmp_path / "inst.json", instance_dict))
        assert requests == []

    def test_saved_instance_loads_back(self, tmp_path, triangle):
        net = triangle.with_paths(topology_service.enumerate_loopfree_paths(triangle, k_max=2))
        requests = [make_request([1.0, 2.0], links=[(0, 1, 1.0)]), make_request([3.0], request_id=1)]
        path = instance_io.save_instance(tmp_path / "nested" / "inst.json", net, requests)
        assert "paths" not in json.loads(path.read_text())["physical_network"]
        loaded, loaded_requests = instance_io.load_instance(path)
        assert loaded == triangle
        assert loaded_requests == requests

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.pop("physical_network"),
            lambda d: d.update(extra=1),
            lambda d: d["vn_requests"].append(dict(d["vn_requests"][0])),
            lambda d: d["physical_network"]["links"].append({"source": 0, "target": 5, "bandwidth": 1.0}),
            lambda d: d["vn_requests"][0]["vnodes"].clear(),
        ],
        ids=["missing_network", "unknown_key", "duplicate_ids", "unknown_node", "empty_request"],
    )
    def test_rejects_malformed_instances(self, tmp_path, instance_dict, mutate):
        mutate(instance_dict)
        with pytest.raises(InstanceFormatError):
            instance_io.load_instance(write(tmp_path / "inst.json", instance_dict))

    def test_bad_json(self, tmp_path):
        path = tmp_path / "inst.json"
        path.write_text("{not json")
        with pytest.raises(InstanceFormatError):
            instance_io.load_instance(path)

    def test_missing_file_is_a_configuration_error(self, tmp_path):
        with pytest.raises(ConfigurationError) as excinfo:
            instance_io.load_instance(tmp_path / "absent.json")
        assert excinfo.value.exit_code == 2

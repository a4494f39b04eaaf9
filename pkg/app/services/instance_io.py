import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from pydantic import ValidationError

from app.core.exceptions import InstanceFormatError, ReportWriteError
from app.models.network import PhysicalNetwork
from app.models.request import VnRequest
from app.utils.file_utils import read_json, write_json

logger = logging.getLogger("app.services.instance_io")


class InstanceIO:
    """JSON instance files with top-level keys physical_network and vn_requests"""

    def __init__(self):
        self.logger = logger

    def load_instance(self, path: Path) -> Tuple[PhysicalNetwork, List[VnRequest]]:
        """
        Read a network and its requests

        Raises:
            InstanceFormatError: unreadable file, bad JSON or schema violations
        """
        path = Path(path)
        try:
            data = read_json(path)
        except (OSError, ValueError) as e:
            self.logger.error(f"Cannot read instance {path}: {e}")
            raise InstanceFormatError(f"Cannot read instance file {path}", details={"error": str(e)})

        if not isinstance(data, dict) or "physical_network" not in data:
            raise InstanceFormatError(
                "Instance file needs a physical_network object", details={"path": str(path)}
            )
        unknown = set(data) - {"physical_network", "vn_requests"}
        if unknown:
            raise InstanceFormatError(
                "Unknown top-level keys in instance file", details={"keys": sorted(unknown)}
            )

        try:
            net = PhysicalNetwork.model_validate(data["physical_network"])
            requests = [VnRequest.model_validate(item) for item in data.get("vn_requests", [])]
        except ValidationError as e:
            raise InstanceFormatError(
                f"Invalid instance {path}",
                details={"errors": _error_entries(e)},
            )

        ids = [request.id for request in requests]
        if len(set(ids)) != len(ids):
            raise InstanceFormatError("Request ids must be unique", details={"ids": ids})

        self.logger.info(f"Loaded instance {path}: {net.node_count} nodes, {len(requests)} requests")
        return net, requests

    def save_instance(
        self, path: Path, net: PhysicalNetwork, requests: Optional[Sequence[VnRequest]] = None
    ) -> Path:
        """Write the instance without the derived path set"""
        data = {
            "physical_network": net.model_dump(mode="json", exclude={"paths"}),
            "vn_requests": [request.model_dump(mode="json") for request in requests or ()],
        }
        try:
            return write_json(Path(path), data)
        except OSError as e:
            self.logger.error(f"Cannot write instance {path}: {e}")
            raise ReportWriteError(f"Cannot write instance file {path}", details={"error": str(e)})


def _error_entries(exc: ValidationError) -> list:
    return [{key: value for key, value in err.items() if key in ("loc", "msg", "type")} for err in exc.errors()]


# Global instance
instance_io = InstanceIO()

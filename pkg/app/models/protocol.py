from enum import Enum
from typing import List

from pydantic import BaseModel, Field

from app.models.base import DomainModel


class MessageKind(str, Enum):
    """Payload types exchanged between master and agents"""
    SHARE = "share"
    PRICE = "price"
    VALUE = "value"
    DUALS = "duals"
    OPTIMUM = "optimum"


class MessageRecord(DomainModel):
    iteration: int = Field(ge=0)
    # Request the exchange belongs to, when a log spans several runs
    run: int = 0
    sender: str
    receiver: str
    kind: MessageKind
    payload_size: int = Field(gt=0, description="bytes")


class MessageLog(BaseModel):
    """Append-only record of master/agent traffic"""

    records: List[MessageRecord] = Field(default_factory=list)

    def append(self, record: MessageRecord) -> None:
        self.records.append(record)

    def extend(self, other: "MessageLog") -> None:
        self.records.extend(other.records)

    @property
    def messages(self) -> int:
        return len(self.records)

    @property
    def bytes(self) -> int:
        return sum(record.payload_size for record in self.records)

    @property
    def iterations(self) -> int:
        return len({(record.run, record.iteration) for record in self.records})


class OverheadStats(DomainModel):
    messages: int = 0
    bytes: int = 0
    iterations: int = 0
    messages_per_iteration: float = 0.0
    bytes_per_iteration: float = 0.0

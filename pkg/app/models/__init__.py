from .network import (
    PhysicalNode,
    PhysicalLink,
    Path,
    PathSet,
    PhysicalNetwork,
)
from .request import ValueRule, VirtualNode, VirtualLink, VnRequest
from .embedding import DiscoveryMask, UtilityMode, UtilitySpec, Embedding, ResidualCapacity
from .lp import LpStatus, LpProblem, LpSolution, LpBuilder
from .program import EmbeddingProgram
from .decomposition import (
    PolicyKind,
    PartitionPolicy,
    VnPartition,
    SubproblemBlock,
    PartitionedLp,
    StepKind,
    StepRule,
    StopRule,
    IterateRecord,
    IterateTrace,
    PrimalState,
    DualState,
    SubproblemAnswer,
)
from .protocol import MessageKind, MessageRecord, MessageLog, OverheadStats
from .experiment import (
    Algorithm,
    NetworkKind,
    NetworkSpec,
    VnStreamSpec,
    UtilityConfig,
    OutputSpec,
    ExperimentConfig,
    VnOutcome,
    ExperimentReport,
    StudyRow,
    ConvergenceStudy,
)

__all__ = [
    "PhysicalNode",
    "PhysicalLink",
    "Path",
    "PathSet",
    "PhysicalNetwork",
    "ValueRule",
    "VirtualNode",
    "VirtualLink",
    "VnRequest",
    "DiscoveryMask",
    "UtilityMode",
    "UtilitySpec",
    "Embedding",
    "ResidualCapacity",
    "LpStatus",
    "LpProblem",
    "LpSolution",
    "LpBuilder",
    "EmbeddingProgram",
    "PolicyKind",
    "PartitionPolicy",
    "VnPartition",
    "SubproblemBlock",
    "PartitionedLp",
    "StepKind",
    "StepRule",
    "StopRule",
    "IterateRecord",
    "IterateTrace",
    "PrimalState",
    "DualState",
    "SubproblemAnswer",
    "MessageKind",
    "MessageRecord",
    "MessageLog",
    "OverheadStats",
    "Algorithm",
    "NetworkKind",
    "NetworkSpec",
    "VnStreamSpec",
    "UtilityConfig",
    "OutputSpec",
    "ExperimentConfig",
    "VnOutcome",
    "ExperimentReport",
    "StudyRow",
    "ConvergenceStudy",
]

import logging
import time
from typing import Optional, Tuple

from app.config import settings
from app.core.exceptions import VneError
from app.models.decomposition import IterateTrace, PartitionedLp, StepRule, StopRule
from app.models.experiment import Algorithm
from app.models.protocol import MessageKind, MessageLog, MessageRecord, OverheadStats
from app.services.dual_decomposition import DualDecomposition, dual_decomposition
from app.services.primal_decomposition import PrimalDecomposition, primal_decomposition

logger = logging.getLogger("app.services.protocol_sim")


class ProtocolSimulator:
    """Master/agent message accounting around the decomposition runs"""

    def __init__(
        self,
        primal: Optional[PrimalDecomposition] = None,
        dual: Optional[DualDecomposition] = None,
        header_bytes: Optional[int] = None,
        scalar_bytes: Optional[int] = None,
        latency_seconds: Optional[float] = None,
    ):
        config = settings.protocol_config
        self.primal = primal or primal_decomposition
        self.dual = dual or dual_decomposition
        self.header_bytes = config["header_bytes"] if header_bytes is None else header_bytes
        self.scalar_bytes = config["scalar_bytes"] if scalar_bytes is None else scalar_bytes
        self.latency_seconds = config["latency_seconds"] if latency_seconds is None else latency_seconds
        self.logger = logger

    def payload_size(self, scalars: int) -> int:
        return self.header_bytes + self.scalar_bytes * scalars

    def run_distributed(
        self,
        algo: Algorithm,
        plp: PartitionedLp,
        step_rule: Optional[StepRule] = None,
        stop: Optional[StopRule] = None,
        reference: Optional[float] = None,
        run: int = 0,
    ) -> Tuple[IterateTrace, MessageLog]:
        """
        Run a decomposition as a master with one agent per partition

        Every exchange is logged in (iteration, agent) order; the trace is
        the one the in-process run produces.

        Raises:
            VneError: re-raised from the run after logging the partial traffic
        """
        log = MessageLog()

        def record(iteration: int, sender: str, receiver: str, kind: MessageKind, scalars: int) -> None:
            if self.latency_seconds > 0:
                time.sleep(self.latency_seconds)
            log.append(
                MessageRecord(
                    iteration=iteration,
                    run=run,
                    sender=sender,
                    receiver=receiver,
                    kind=kind,
                    payload_size=self.payload_size(scalars),
                )
            )

        algo = Algorithm(algo)
        try:
            if algo == Algorithm.PRIMAL:
                trace = self.primal.run_primal(plp, step_rule, stop, reference, on_message=record)
            elif algo == Algorithm.DUAL:
                trace = self.dual.run_dual(plp, step_rule, stop, reference, on_message=record)
            else:
                raise ValueError("The monolithic embedder exchanges no messages")
        except VneError:
            self.logger.error(
                f"{algo.value} run on request {plp.request.id} failed after {log.messages} messages"
            )
            raise

        self.logger.debug(
            f"{algo.value} run on request {plp.request.id}: {log.messages} messages, {log.bytes} bytes"
        )
        return trace, log

    def overhead_stats(self, log: MessageLog) -> OverheadStats:
        iterations = log.iterations
        if not iterations:
            return OverheadStats()
        return OverheadStats(
            messages=log.messages,
            bytes=log.bytes,
            iterations=iterations,
            messages_per_iteration=log.messages / iterations,
            bytes_per_iteration=log.bytes / iterations,
        )


# Global instance
protocol_simulator = ProtocolSimulator()

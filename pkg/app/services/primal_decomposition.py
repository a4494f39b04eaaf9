import logging
import time
from typing import List, Optional

import numpy as np

from app.config import settings
from app.core.exceptions import SolverError
from app.models.decomposition import (
    IterateRecord,
    IterateTrace,
    PartitionedLp,
    PrimalState,
    StepRule,
    StopRule,
    SubproblemAnswer,
)
from app.models.lp import LpStatus
from app.models.protocol import MessageKind
from app.services.lp_engine import lp_engine
from app.services.subgradient import (
    MASTER,
    MessageHook,
    SubproblemRunner,
    agent_name,
    project_shares,
    relative_gap_reached,
)

logger = logging.getLogger("app.services.primal_decomposition")


def default_step_rule() -> StepRule:
    return StepRule(kind=settings.step_rule, scale=settings.step_scale)


def default_stop_rule() -> StopRule:
    return StopRule(max_iterations=settings.max_iterations, gap_tolerance=settings.gap_tolerance)


class PrimalDecomposition:
    """Resource-share decomposition: the master splits capacity, agents solve under their share"""

    def __init__(self, engine=None, runner: Optional[SubproblemRunner] = None):
        self.engine = engine or lp_engine
        self.runner = runner or SubproblemRunner()
        self.logger = logger

    def solve_subproblem_primal(self, plp: PartitionedLp, s: int, z_s: np.ndarray) -> SubproblemAnswer:
        """
        Solve partition s with its coupling rows capped at the share z_s

        Returns:
            Value, point and the multipliers of the share rows. An
            infeasible subproblem reports value -inf with the multipliers of
            its packing relaxation.

        Raises:
            SolverError: on any status other than optimal or infeasible
        """
        block = plp.blocks[s]
        problem = plp.subproblem(s, share=z_s)
        solution = self.engine.solve_lp(problem)

        if solution.status == LpStatus.OPTIMAL:
            return SubproblemAnswer(
                status=solution.status,
                value=solution.objective,
                x=solution.x,
                duals=solution.duals[block.n_local :],
            )

        if solution.status == LpStatus.INFEASIBLE:
            packing = [r for r, label in enumerate(problem.row_labels) if not label.endswith("-")]
            relaxed = problem.model_copy(
                update={
                    "A": problem.A[packing],
                    "b": problem.b[packing],
                    "row_labels": tuple(problem.row_labels[r] for r in packing),
                }
            )
            recovery = self.engine.solve_lp(relaxed)
            n_local = len(packing) - plp.n_nodes
            self.logger.debug(f"Partition {s} infeasible under its share, using packing duals")
            return SubproblemAnswer(
                status=LpStatus.INFEASIBLE,
                value=float("-inf"),
                x=recovery.x if recovery.x.size else np.zeros(block.n_cols),
                duals=recovery.duals[n_local:] if recovery.duals.size else np.zeros(plp.n_nodes),
            )

        raise SolverError(
            f"Primal subproblem {s} ended with status {solution.status.value}",
            details={"partition": s, "status": solution.status.value},
        )

    def initial_state(
        self,
        plp: PartitionedLp,
        step_rule: Optional[StepRule] = None,
        reference: Optional[float] = None,
    ) -> PrimalState:
        shares = np.tile(plp.h / plp.k, (plp.k, 1))
        return PrimalState(
            h=plp.h,
            shares=shares,
            step_rule=step_rule or default_step_rule(),
            reference=reference,
        )

    def primal_master_step(self, state: PrimalState) -> PrimalState:
        """
        Move capacity toward the partitions with the higher marginal value

        g_s = mean of the other partitions' multipliers - lambda_s, then
        z_s <- z_s - alpha g_s with every node's shares projected back onto
        {z >= 0, sum_s z_s = h_i}. With two partitions this is
        g = lambda_2 - lambda_1 for the first share.
        """
        k = state.k
        duals = np.asarray(state.duals, dtype=float)
        if k > 1:
            others = (duals.sum(axis=0) - duals) / (k - 1)
        else:
            others = duals
        g = others - duals
        g_norm = float(np.linalg.norm(g))

        phi = state.phi_sum
        best_value, best_solutions = state.best_value, state.best_solutions
        if phi > best_value:
            best_value, best_solutions = phi, state.solutions

        distance = None
        if state.reference is not None and np.isfinite(phi):
            distance = state.reference - phi
        alpha = state.step_rule.alpha(state.t, distance, g_norm)

        gap = state.reference - best_value if state.reference is not None else float("nan")
        record = IterateRecord(
            t=state.t,
            alpha=alpha,
            objective=phi,
            best_primal=best_value,
            best_bound=float("inf"),
            gap=gap,
            g_norm=g_norm,
            msgs_cum=2 * k * state.t,
            elapsed=state.elapsed,
        )
        shares = project_shares(state.shares - alpha * g, state.h)

        self.logger.debug(
            f"Primal t={state.t}: phi={phi:.6g} best={best_value:.6g} |g|={g_norm:.3g} alpha={alpha:.3g}"
        )
        return state.model_copy(
            update={
                "t": state.t + 1,
                "g": g,
                "alpha": alpha,
                "shares": shares,
                "best_value": best_value,
                "best_solutions": best_solutions,
                "records": state.records + (record,),
            }
        )

    def run_primal(
        self,
        plp: PartitionedLp,
        step_rule: Optional[StepRule] = None,
        stop: Optional[StopRule] = None,
        reference: Optional[float] = None,
        on_message: Optional[MessageHook] = None,
    ) -> IterateTrace:
        """
        Iterate the share master until the stop rule fires

        Args:
            plp: Partitioned node-embedding program
            step_rule: Step sizes (settings default: 0.5 / t)
            stop: Iteration cap and gap tolerance
            reference: Coupled optimum for gap reporting, None when unknown
            on_message: Called for every master/agent exchange

        Returns:
            IterateTrace with the subproblem points of the best iterate as allocation
        """
        step_rule = step_rule or default_step_rule()
        stop = stop or default_stop_rule()
        notify = on_message or (lambda *args: None)

        if plp.k == 1:
            return self._single_partition(plp, reference, notify)

        state = self.initial_state(plp, step_rule, reference)
        stop_reason = "iteration_limit"
        for t in range(1, stop.max_iterations + 1):
            started = time.perf_counter()
            answers: List[SubproblemAnswer] = self.runner.map(
                lambda s: self.solve_subproblem_primal(plp, s, state.shares[s]), plp.k
            )
            elapsed = state.elapsed + time.perf_counter() - started
            for s in range(plp.k):
                notify(t, MASTER, agent_name(s), MessageKind.SHARE, plp.n_nodes)
                notify(t, agent_name(s), MASTER, MessageKind.DUALS, plp.n_nodes + 1)

            state = state.model_copy(
                update={
                    "values": tuple(a.value for a in answers),
                    "duals": np.vstack([a.duals for a in answers]),
                    "solutions": tuple(a.x for a in answers),
                    "elapsed": elapsed,
                }
            )
            state = self.primal_master_step(state)
            record = state.records[-1]
            if record.g_norm <= stop.g_tolerance and np.isfinite(record.objective):
                stop_reason = "zero_subgradient"
                break
            if relative_gap_reached(record.gap, reference, stop.gap_tolerance):
                stop_reason = "gap"
                break

        best = state.best_solutions or state.solutions
        self.logger.info(
            f"Primal run on request {plp.request.id}: {len(state.records)} iterations, "
            f"best={state.best_value:.6g}, stop={stop_reason}"
        )
        return IterateTrace(
            algorithm="primal",
            partitions=plp.k,
            records=state.records,
            reference=reference,
            stop_reason=stop_reason,
            allocation=plp.node_fractions(list(best)),
            final_shares=state.shares,
        )

    def _single_partition(self, plp: PartitionedLp, reference: Optional[float], notify) -> IterateTrace:
        started = time.perf_counter()
        answer = self.solve_subproblem_primal(plp, 0, plp.h)
        elapsed = time.perf_counter() - started
        notify(1, MASTER, agent_name(0), MessageKind.SHARE, plp.n_nodes)
        notify(1, agent_name(0), MASTER, MessageKind.VALUE, plp.blocks[0].n_cols + 1)
        gap = reference - answer.value if reference is not None else 0.0
        record = IterateRecord(
            t=1,
            alpha=0.0,
            objective=answer.value,
            best_primal=answer.value,
            best_bound=answer.value,
            gap=gap,
            g_norm=0.0,
            msgs_cum=2,
            elapsed=elapsed,
        )
        return IterateTrace(
            algorithm="primal",
            partitions=1,
            records=(record,),
            reference=reference,
            stop_reason="single_partition",
            allocation=plp.node_fractions([answer.x]),
            final_shares=np.asarray(plp.h).reshape(1, -1),
        )


# Global instance
primal_decomposition = PrimalDecomposition()

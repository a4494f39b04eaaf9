import logging
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import SolverError
from app.models.decomposition import DualState, IterateRecord, IterateTrace, PartitionedLp, StepRule, StopRule
from app.models.lp import LpStatus
from app.models.protocol import MessageKind
from app.services.lp_engine import lp_engine
from app.services.partitioner import partitioner
from app.services.primal_decomposition import default_step_rule, default_stop_rule
from app.services.subgradient import (
    MASTER,
    MessageHook,
    SubproblemRunner,
    agent_name,
    relative_gap_reached,
)

logger = logging.getLogger("app.services.dual_decomposition")

_SLACKNESS_TOL = 1e-9


class DualDecomposition:
    """
    Pricing decomposition of the partitioned node-embedding program

    Sign convention: the program maximizes c.x subject to sum_s F_s x_s <= h,
    so its Lagrangian is c.x + lambda.(h - sum_s F_s x_s) and the dual
    function q(lambda) = lambda.h + sum_s max (c_s - F_s^T lambda).x_s is
    minimized over lambda >= 0. The projected subgradient step is
    lambda <- (lambda + alpha g)_+ with g = sum_s F_s x_s - h, which raises
    the price of every overused node. The minus-sign update lambda - alpha g
    belongs to the minimization form and would lower those prices instead.
    """

    def __init__(self, engine=None, runner: Optional[SubproblemRunner] = None):
        self.engine = engine or lp_engine
        self.runner = runner or SubproblemRunner()
        self.logger = logger

    def solve_subproblem_dual(
        self, plp: PartitionedLp, s: int, prices: np.ndarray
    ) -> Tuple[np.ndarray, float]:
        """
        max (c_s - F_s^T lambda).x_s over the local system of partition s

        Returns:
            (optimizer, price-adjusted value)
        """
        block = plp.blocks[s]
        adjusted = block.c - block.F.T @ np.asarray(prices, dtype=float)
        problem = plp.subproblem(s).with_cost(adjusted)
        solution = self.engine.solve_lp(problem)
        if solution.status != LpStatus.OPTIMAL:
            raise SolverError(
                f"Dual subproblem {s} ended with status {solution.status.value}",
                details={"partition": s, "status": solution.status.value},
            )
        return solution.x, float(solution.objective)

    def dual_value(self, plp: PartitionedLp, prices: np.ndarray, xs: Sequence[np.ndarray]) -> float:
        """q(lambda) = lambda.h + sum_s (c_s - F_s^T lambda).x_s"""
        prices = np.asarray(prices, dtype=float)
        total = float(prices @ plp.h)
        for block, x in zip(plp.blocks, xs):
            total += float((block.c - block.F.T @ prices) @ x)
        return total

    def initial_state(
        self,
        plp: PartitionedLp,
        step_rule: Optional[StepRule] = None,
        reference: Optional[float] = None,
    ) -> DualState:
        return DualState(
            h=plp.h,
            prices=np.zeros(plp.n_nodes),
            step_rule=step_rule or default_step_rule(),
            reference=reference,
        )

    def dual_master_step(self, state: DualState, usages: Sequence[np.ndarray]) -> DualState:
        """
        Record q(lambda_t) and move prices along the usage excess

        ``state.q`` must already hold q(lambda_t) and ``state.best_primal``
        the best recovered primal value.
        """
        g = np.sum(np.vstack(usages), axis=0) - state.h
        g_norm = float(np.linalg.norm(g))
        best_bound = min(state.best_bound, state.q)

        target = state.reference if state.reference is not None else state.best_primal
        distance = state.q - target if np.isfinite(target) else None
        alpha = state.step_rule.alpha(state.t, distance, g_norm)

        record = IterateRecord(
            t=state.t,
            alpha=alpha,
            objective=state.q,
            best_primal=state.best_primal,
            best_bound=best_bound,
            gap=best_bound - target,
            g_norm=g_norm,
            msgs_cum=2 * len(usages) * state.t,
            elapsed=state.elapsed,
        )
        prices = np.maximum(state.prices + alpha * g, 0.0)

        self.logger.debug(
            f"Dual t={state.t}: q={state.q:.6g} bound={best_bound:.6g} |g|={g_norm:.3g} alpha={alpha:.3g}"
        )
        return state.model_copy(
            update={
                "t": state.t + 1,
                "g": g,
                "alpha": alpha,
                "prices": prices,
                "best_bound": best_bound,
                "records": state.records + (record,),
            }
        )

    def recover_primal(self, plp: PartitionedLp, average: Sequence[np.ndarray]) -> float:
        """Value of the repaired running average, a feasible point of the program"""
        hosts, value = partitioner.repair_node_embedding(plp, plp.node_fractions(list(average)))
        if plp.exact_assignment and any(host is None for host in hosts):
            return float("-inf")
        return value

    def run_dual(
        self,
        plp: PartitionedLp,
        step_rule: Optional[StepRule] = None,
        stop: Optional[StopRule] = None,
        reference: Optional[float] = None,
        on_message: Optional[MessageHook] = None,
    ) -> IterateTrace:
        """
        Projected subgradient descent on the prices, starting from zero

        Stops on the iteration cap, on a relative gap below the tolerance,
        or when the subproblem optima fit the capacities with complementary
        prices (then they are optimal for the coupled program).
        """
        step_rule = step_rule or default_step_rule()
        stop = stop or default_stop_rule()
        notify = on_message or (lambda *args: None)

        if plp.k == 1:
            return self._single_partition(plp, reference, notify)

        state = self.initial_state(plp, step_rule, reference)
        stop_reason = "iteration_limit"
        average: List[np.ndarray] = [np.zeros(block.n_cols) for block in plp.blocks]
        for t in range(1, stop.max_iterations + 1):
            started = time.perf_counter()
            prices = state.prices
            answers = self.runner.map(lambda s: self.solve_subproblem_dual(plp, s, prices), plp.k)
            xs = [x for x, _ in answers]
            q = self.dual_value(plp, prices, xs)
            average = [((t - 1) * avg + x) / t for avg, x in zip(average, xs)]
            best_primal = max(state.best_primal, self.recover_primal(plp, average))
            elapsed = state.elapsed + time.perf_counter() - started
            for s, block in enumerate(plp.blocks):
                notify(t, MASTER, agent_name(s), MessageKind.PRICE, plp.n_nodes)
                notify(t, agent_name(s), MASTER, MessageKind.OPTIMUM, block.n_cols + 1)

            state = state.model_copy(
                update={
                    "solutions": tuple(xs),
                    "q": q,
                    "average": tuple(average),
                    "best_primal": best_primal,
                    "elapsed": elapsed,
                }
            )
            usages = [block.usage(x) for block, x in zip(plp.blocks, xs)]
            state = self.dual_master_step(state, usages)
            record = state.records[-1]

            gap_reference = reference if reference is not None else best_primal
            if relative_gap_reached(record.gap, gap_reference, stop.gap_tolerance):
                stop_reason = "gap"
                break
            if np.all(state.g <= _SLACKNESS_TOL) and abs(float(prices @ state.g)) <= _SLACKNESS_TOL:
                stop_reason = "complementary"
                break

        self.logger.info(
            f"Dual run on request {plp.request.id}: {len(state.records)} iterations, "
            f"bound={state.best_bound:.6g}, primal={state.best_primal:.6g}, stop={stop_reason}"
        )
        return IterateTrace(
            algorithm="dual",
            partitions=plp.k,
            records=state.records,
            reference=reference,
            stop_reason=stop_reason,
            allocation=plp.node_fractions(average),
            final_prices=state.prices,
        )

    def _single_partition(self, plp: PartitionedLp, reference: Optional[float], notify) -> IterateTrace:
        # One agent holds every vnode: solve it under the full capacity
        started = time.perf_counter()
        solution = self.engine.solve_lp(plp.coupled_problem())
        elapsed = time.perf_counter() - started
        if solution.status != LpStatus.OPTIMAL:
            raise SolverError(
                f"Single-partition solve ended with status {solution.status.value}",
                details={"status": solution.status.value},
            )
        notify(1, MASTER, agent_name(0), MessageKind.PRICE, plp.n_nodes)
        notify(1, agent_name(0), MASTER, MessageKind.OPTIMUM, plp.blocks[0].n_cols + 1)
        value = float(solution.objective)
        record = IterateRecord(
            t=1,
            alpha=0.0,
            objective=value,
            best_primal=value,
            best_bound=value,
            gap=value - reference if reference is not None else 0.0,
            g_norm=0.0,
            msgs_cum=2,
            elapsed=elapsed,
        )
        return IterateTrace(
            algorithm="dual",
            partitions=1,
            records=(record,),
            reference=reference,
            stop_reason="single_partition",
            allocation=plp.node_fractions([solution.x]),
            final_prices=solution.duals[-plp.n_nodes :],
        )


# Global instance
dual_decomposition = DualDecomposition()

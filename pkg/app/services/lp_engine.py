import heapq
import itertools
import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.config import settings
from app.core.exceptions import BruteForceLimitError, SolverError
from app.models.lp import LpProblem, LpSolution, LpStatus

logger = logging.getLogger("app.services.lp_engine")

_PIVOT_TOL = 1e-9
_REDUCED_COST_TOL = 1e-9
_INTEGRALITY_TOL = 1e-6
# Primal residual verify_optimality accepts, in multiples of tol_feas
FEASIBILITY_FACTOR = 10
_AT_LOWER, _AT_UPPER, _BASIC = 0, 1, 2


class _SimplexResult:
    __slots__ = ("status", "x", "duals", "iterations")

    def __init__(self, status: LpStatus, x: np.ndarray, duals: np.ndarray, iterations: int):
        self.status = status
        self.x = x
        self.duals = duals
        self.iterations = iterations


class LpEngine:
    """Bounded-variable revised simplex with branch-and-bound on top"""

    def __init__(self, **overrides):
        config = {**settings.engine_config, **overrides}
        self.tol_feas = config["tol_feas"]
        self.tol_cs = config["tol_cs"]
        self.tol_gap = config["tol_gap"]
        self.max_iterations = config["max_iterations"]
        self.degenerate_pivot_limit = config["degenerate_pivot_limit"]
        self.refactor_every = config["refactor_every"]
        self.scaling = config["scaling"]
        self.node_limit = overrides.get("node_limit", settings.ilp_node_limit)
        self.brute_force_max_vars = overrides.get(
            "brute_force_max_vars", settings.brute_force_max_vars
        )
        self.logger = logger

    # ------------------------------------------------------------------
    # Linear programs
    # ------------------------------------------------------------------

    def solve_lp(self, problem: LpProblem, structured: bool = True) -> LpSolution:
        """
        Solve the continuous relaxation of a problem

        Integrality flags are ignored. Disjoint packing systems are solved
        by an exact greedy when ``structured`` is set; everything else goes
        through the revised simplex.

        Returns:
            LpSolution with row duals and reduced costs when optimal
        """
        if problem.n_vars == 0:
            return self._solve_empty(problem)

        if structured and self._is_disjoint_packing(problem):
            return self._solve_disjoint_packing(problem)

        return self._solve_simplex(problem)

    def _solve_empty(self, problem: LpProblem) -> LpSolution:
        if np.any(problem.b < -self.tol_feas):
            return LpSolution(status=LpStatus.INFEASIBLE)
        return LpSolution(
            status=LpStatus.OPTIMAL,
            x=np.zeros(0),
            objective=0.0,
            duals=np.zeros(problem.n_rows),
            reduced_costs=np.zeros(0),
        )

    def _is_disjoint_packing(self, problem: LpProblem) -> bool:
        """Every column sits in at most one row, all data nonnegative, x in [0, u]"""
        if np.any(problem.lower != 0) or not np.all(np.isfinite(problem.upper)):
            return False
        if problem.n_rows == 0:
            return True
        A = problem.A
        if np.any(A < 0):
            return False
        return bool(np.all(np.count_nonzero(A, axis=0) <= 1))

    def _solve_disjoint_packing(self, problem: LpProblem) -> LpSolution:
        A, b, c, upper = problem.A, problem.b, problem.c, problem.upper
        if np.any(b < -self.tol_feas):
            return LpSolution(status=LpStatus.INFEASIBLE)

        x = np.zeros(problem.n_vars)
        duals = np.zeros(problem.n_rows)
        rows_of = np.full(problem.n_vars, -1)
        if problem.n_rows:
            nonzero = np.count_nonzero(A, axis=0) > 0
            rows_of[nonzero] = np.argmax(A[:, nonzero] != 0, axis=0)

        free = rows_of < 0
        x[free & (c > 0)] = upper[free & (c > 0)]

        for row in range(problem.n_rows):
            members = np.flatnonzero(rows_of == row)
            if members.size == 0:
                continue
            weights = A[row, members]
            ratios = c[members] / weights
            # Highest ratio first, lowest column index on ties
            order = sorted(range(members.size), key=lambda k: (-ratios[k], members[k]))
            room = max(b[row], 0.0)
            for k in order:
                if ratios[k] <= 0 or upper[members[k]] == 0:
                    continue
                take = min(upper[members[k]], room / weights[k])
                x[members[k]] = take
                room -= take * weights[k]
                if room <= self.tol_feas * max(1.0, abs(b[row])):
                    break
            tight = room <= self.tol_feas * max(1.0, abs(b[row]))
            if tight:
                unfilled = [
                    ratios[k]
                    for k in range(members.size)
                    if ratios[k] > 0 and x[members[k]] < upper[members[k]] - self.tol_feas
                ]
                duals[row] = max(unfilled) if unfilled else 0.0

        reduced = c - A.T @ duals if problem.n_rows else np.array(c, copy=True)
        return LpSolution(
            status=LpStatus.OPTIMAL,
            x=x,
            objective=float(c @ x),
            duals=duals,
            reduced_costs=reduced,
        )

    def _solve_simplex(self, problem: LpProblem) -> LpSolution:
        c = np.asarray(problem.c, dtype=float)
        A = np.asarray(problem.A, dtype=float)
        b = np.asarray(problem.b, dtype=float)
        lower = np.asarray(problem.lower, dtype=float)
        upper = np.asarray(problem.upper, dtype=float)

        row_scale = np.ones(problem.n_rows)
        col_scale = np.ones(problem.n_vars)
        if self.scaling and problem.n_rows:
            row_max = np.abs(A).max(axis=1)
            row_scale = np.where(row_max > 0, 1.0 / np.where(row_max > 0, row_max, 1.0), 1.0)
            scaled = A * row_scale[:, None]
            col_max = np.abs(scaled).max(axis=0)
            col_scale = np.where(col_max > 0, 1.0 / np.where(col_max > 0, col_max, 1.0), 1.0)

        As = A * row_scale[:, None] * col_scale[None, :]
        result = self._revised_simplex(
            c * col_scale,
            As,
            b * row_scale,
            lower / col_scale,
            upper / col_scale,
        )

        if result.status != LpStatus.OPTIMAL:
            self.logger.debug(f"Simplex ended with status {result.status.value}")
            return LpSolution(status=result.status, iterations=result.iterations)

        x = result.x * col_scale
        # Snap to bounds removed by rounding in the unscaling
        x = np.minimum(np.maximum(x, lower), upper)
        duals = result.duals * row_scale
        duals[(duals < 0) & (duals > -self.tol_cs)] = 0.0
        reduced = c - A.T @ duals if problem.n_rows else np.array(c, copy=True)

        return LpSolution(
            status=LpStatus.OPTIMAL,
            x=x,
            objective=float(c @ x),
            duals=duals,
            reduced_costs=reduced,
            iterations=result.iterations,
        )

    def _revised_simplex(
        self,
        c: np.ndarray,
        A: np.ndarray,
        b: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
    ) -> _SimplexResult:
        m, n = A.shape

        # Start with every structural at its lower bound
        residual = b - A @ lower
        artificial_rows = np.flatnonzero(residual < -self.tol_feas)
        n_art = artificial_rows.size

        # Columns: structurals, slacks, artificials (coefficient -1)
        M = np.zeros((m, n + m + n_art))
        M[:, :n] = A
        M[:, n : n + m] = np.eye(m)
        for k, row in enumerate(artificial_rows):
            M[row, n + m + k] = -1.0

        lo = np.concatenate([lower, np.zeros(m), np.zeros(n_art)])
        hi = np.concatenate([upper, np.full(m, np.inf), np.full(n_art, np.inf)])

        x = lo.copy()
        status = np.full(n + m + n_art, _AT_LOWER, dtype=np.int8)
        basis = np.arange(n, n + m)
        for k, row in enumerate(artificial_rows):
            basis[row] = n + m + k
        status[basis] = _BASIC
        B_inv = state_inverse(M, basis)
        if m:
            nonbasic = status != _BASIC
            x[basis] = B_inv @ (b - M[:, nonbasic] @ x[nonbasic])

        iterations = 0
        if n_art:
            phase_cost = np.zeros(n + m + n_art)
            phase_cost[n + m :] = -1.0
            state, iterations = self._iterate(
                phase_cost, M, b, lo, hi, x, status, basis, B_inv, iterations
            )
            if state != LpStatus.OPTIMAL:
                return _SimplexResult(state, x[:n], np.zeros(m), iterations)
            B_inv = state_inverse(M, basis)
            infeasibility = x[n + m :].sum()
            if infeasibility > self.tol_feas * max(1.0, np.abs(b).max(initial=0.0)):
                self.logger.debug(f"Phase 1 infeasibility {infeasibility:.3e}")
                return _SimplexResult(LpStatus.INFEASIBLE, x[:n], np.zeros(m), iterations)
            # Artificials are pinned to zero from here on
            hi[n + m :] = 0.0
            nonbasic_art = [j for j in range(n + m, n + m + n_art) if status[j] != _BASIC]
            x[nonbasic_art] = 0.0
            nonbasic = status != _BASIC
            x[basis] = B_inv @ (b - M[:, nonbasic] @ x[nonbasic])

        cost = np.concatenate([c, np.zeros(m + n_art)])
        state, iterations = self._iterate(
            cost, M, b, lo, hi, x, status, basis, B_inv, iterations
        )
        if state != LpStatus.OPTIMAL:
            return _SimplexResult(state, x[:n], np.zeros(m), iterations)

        B_inv = state_inverse(M, basis)
        duals = cost[basis] @ B_inv if m else np.zeros(0)
        return _SimplexResult(LpStatus.OPTIMAL, x[:n].copy(), duals, iterations)

    def _iterate(
        self,
        cost: np.ndarray,
        M: np.ndarray,
        b: np.ndarray,
        lo: np.ndarray,
        hi: np.ndarray,
        x: np.ndarray,
        status: np.ndarray,
        basis: np.ndarray,
        B_inv: np.ndarray,
        iterations: int,
    ) -> Tuple[LpStatus, int]:
        """Primal simplex pivots in place until optimal, unbounded or capped"""
        m = M.shape[0]
        movable = hi > lo
        degenerate_run = 0
        bland = False
        since_refactor = 0

        while True:
            if iterations >= self.max_iterations:
                self.logger.warning(f"Simplex iteration limit {self.max_iterations} reached")
                return LpStatus.ITERATION_LIMIT, iterations

            y = cost[basis] @ B_inv if m else np.zeros(0)
            d = cost - y @ M if m else cost.copy()
            d[basis] = 0.0

            can_rise = (status == _AT_LOWER) & movable & (d > _REDUCED_COST_TOL)
            can_fall = (status == _AT_UPPER) & movable & (d < -_REDUCED_COST_TOL)
            eligible = can_rise | can_fall
            if not eligible.any():
                return LpStatus.OPTIMAL, iterations

            if bland:
                q = int(np.flatnonzero(eligible)[0])
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                q = int(np.argmax(score))
            sigma = 1.0 if can_rise[q] else -1.0

            w = B_inv @ M[:, q] if m else np.zeros(0)
            delta = -sigma * w

            theta_rows = np.full(m, np.inf)
            falling = delta < -_PIVOT_TOL
            rising = (delta > _PIVOT_TOL) & np.isfinite(hi[basis])
            xb = x[basis]
            theta_rows[falling] = (xb[falling] - lo[basis][falling]) / -delta[falling]
            theta_rows[rising] = (hi[basis][rising] - xb[rising]) / delta[rising]
            theta_rows = np.maximum(theta_rows, 0.0)

            theta_flip = hi[q] - lo[q]
            theta_row = theta_rows.min() if m else np.inf
            theta = min(theta_row, theta_flip)
            if not math.isfinite(theta):
                return LpStatus.UNBOUNDED, iterations

            iterations += 1
            if theta <= self.tol_feas:
                degenerate_run += 1
                if degenerate_run > self.degenerate_pivot_limit and not bland:
                    self.logger.debug("Degenerate cycle suspected, switching to Bland's rule")
                    bland = True
            else:
                degenerate_run = 0
                bland = False

            x[basis] += theta * delta
            x[q] += sigma * theta

            if theta_flip <= theta_row:
                status[q] = _AT_UPPER if sigma > 0 else _AT_LOWER
                x[q] = hi[q] if sigma > 0 else lo[q]
                continue

            ties = np.flatnonzero(theta_rows <= theta_row + 1e-12)
            if bland:
                r = int(ties[np.argmin(basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(w[ties]))])

            leaving = basis[r]
            if delta[r] < 0:
                status[leaving] = _AT_LOWER
                x[leaving] = lo[leaving]
            else:
                status[leaving] = _AT_UPPER
                x[leaving] = hi[leaving]

            basis[r] = q
            status[q] = _BASIC
            pivot = w[r]
            pivot_row = B_inv[r, :] / pivot
            B_inv -= np.outer(w, pivot_row)
            B_inv[r, :] = pivot_row

            since_refactor += 1
            if since_refactor >= self.refactor_every:
                since_refactor = 0
                B_inv[:, :] = state_inverse(M, basis)
                nonbasic = status != _BASIC
                x[basis] = B_inv @ (b - M[:, nonbasic] @ x[nonbasic])

    # ------------------------------------------------------------------
    # Binary programs
    # ------------------------------------------------------------------

    def solve_ilp(self, problem: LpProblem) -> LpSolution:
        """
        Branch-and-bound over LP relaxations

        Best-bound node selection; branch on the most fractional integer
        variable (lowest index on ties); the child fixing the variable to
        its upper value is explored first.
        """
        integer = np.asarray(problem.integer, dtype=bool)
        if np.any(problem.lower[integer] < 0) or np.any(problem.upper[integer] > 1):
            raise SolverError(
                "Integral variables must have bounds within [0, 1]",
                details={"columns": np.flatnonzero(integer).tolist()},
            )

        root = self.solve_lp(problem)
        if root.status != LpStatus.OPTIMAL:
            return root.model_copy(update={"nodes": 1})

        counter = itertools.count()
        heap: List[Tuple[float, int, np.ndarray, np.ndarray, LpSolution]] = []
        heapq.heappush(heap, (-root.objective, next(counter), problem.lower, problem.upper, root))

        incumbent: Optional[LpSolution] = None
        incumbent_value = -math.inf
        nodes = 0
        iterations = root.iterations

        while heap:
            neg_bound, _, lower, upper, relaxation = heap[0]
            if -neg_bound <= incumbent_value + self.tol_gap:
                break
            if nodes >= self.node_limit:
                self.logger.warning(f"Branch-and-bound node limit {self.node_limit} reached")
                return self._ilp_result(
                    LpStatus.NODE_LIMIT, incumbent, nodes, iterations, -neg_bound
                )
            heapq.heappop(heap)
            nodes += 1

            values = relaxation.x[integer]
            fractionality = np.minimum(values - np.floor(values), np.ceil(values) - values)
            if fractionality.size == 0 or fractionality.max() <= _INTEGRALITY_TOL:
                candidate = self._round_candidate(problem, relaxation, integer)
                if candidate is not None and candidate.objective > incumbent_value:
                    incumbent, incumbent_value = candidate, candidate.objective
                    self.logger.debug(f"New incumbent {incumbent_value:.6g} at node {nodes}")
                continue

            column = int(np.flatnonzero(integer)[int(np.argmax(fractionality))])
            for branch_value in (1.0, 0.0):
                child_lower = np.array(lower, copy=True)
                child_upper = np.array(upper, copy=True)
                child_lower[column] = branch_value
                child_upper[column] = branch_value
                child = self.solve_lp(problem.with_bounds(child_lower, child_upper))
                iterations += child.iterations
                if child.status != LpStatus.OPTIMAL:
                    continue
                if child.objective <= incumbent_value + self.tol_gap:
                    continue
                heapq.heappush(
                    heap, (-child.objective, next(counter), child_lower, child_upper, child)
                )

        if incumbent is None:
            return LpSolution(status=LpStatus.INFEASIBLE, nodes=nodes, iterations=iterations)
        return self._ilp_result(LpStatus.OPTIMAL, incumbent, nodes, iterations, incumbent_value)

    def _round_candidate(
        self, problem: LpProblem, relaxation: LpSolution, integer: np.ndarray
    ) -> Optional[LpSolution]:
        x = np.array(relaxation.x, copy=True)
        x[integer] = np.round(x[integer])
        if problem.n_rows and np.any(problem.A @ x > problem.b + self.tol_feas):
            return None
        return relaxation.model_copy(update={"x": x, "objective": float(problem.c @ x)})

    def _ilp_result(
        self,
        status: LpStatus,
        incumbent: Optional[LpSolution],
        nodes: int,
        iterations: int,
        bound: float,
    ) -> LpSolution:
        if incumbent is None:
            return LpSolution(status=status, nodes=nodes, iterations=iterations, bound=bound)
        return incumbent.model_copy(
            update={"status": status, "nodes": nodes, "iterations": iterations, "bound": bound}
        )

    def brute_force_binary(self, problem: LpProblem) -> LpSolution:
        """
        Exhaustive enumeration of all binary points

        Ties go to the lexicographically smallest vector, with column 0 as
        the most significant position.
        """
        n = problem.n_vars
        if n > self.brute_force_max_vars:
            raise BruteForceLimitError(
                f"Brute force limited to {self.brute_force_max_vars} variables, got {n}",
                details={"n_vars": n},
            )
        if n and not np.all(problem.integer):
            raise BruteForceLimitError(
                "Brute force enumerates binary programs only",
                details={"continuous": np.flatnonzero(~problem.integer).tolist()},
            )
        if n == 0:
            return self._solve_empty(problem)

        best_value = -math.inf
        best_point: Optional[np.ndarray] = None
        shifts = np.arange(n - 1, -1, -1)
        chunk = 1 << 16
        total = 1 << n
        for start in range(0, total, chunk):
            codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
            points = ((codes[:, None] >> shifts[None, :]) & 1).astype(float)
            ok = np.all(points >= problem.lower - 1e-12, axis=1)
            ok &= np.all(points <= problem.upper + 1e-12, axis=1)
            if problem.n_rows:
                ok &= np.all(points @ problem.A.T <= problem.b + self.tol_feas, axis=1)
            if not ok.any():
                continue
            values = np.where(ok, points @ problem.c, -np.inf)
            k = int(np.argmax(values))
            if values[k] > best_value:
                best_value = float(values[k])
                best_point = points[k]

        if best_point is None:
            return LpSolution(status=LpStatus.INFEASIBLE)
        return LpSolution(
            status=LpStatus.OPTIMAL,
            x=best_point,
            objective=float(problem.c @ best_point),
        )

    # ------------------------------------------------------------------
    # Diagnostics
    # ------------------------------------------------------------------

    def verify_optimality(self, problem: LpProblem, solution: LpSolution) -> Dict[str, Any]:
        """Primal feasibility, complementary slackness and duality gap residuals"""
        x, duals = solution.x, solution.duals
        slack = problem.b - problem.A @ x if problem.n_rows else np.zeros(0)
        d = solution.reduced_costs

        primal = max(
            float(np.max(-slack, initial=0.0)),
            float(np.max(problem.lower - x, initial=0.0)),
            float(np.max(x - problem.upper, initial=0.0)),
        )
        row_cs = float(np.max(np.abs(duals * slack), initial=0.0))
        interior = (x > problem.lower + self.tol_feas) & (x < problem.upper - self.tol_feas)
        at_lower = x <= problem.lower + self.tol_feas
        at_upper = x >= problem.upper - self.tol_feas
        bound_cs = max(
            float(np.max(np.abs(d[interior]), initial=0.0)),
            float(np.max(d[at_lower & ~at_upper], initial=0.0)),
            float(np.max(-d[at_upper & ~at_lower], initial=0.0)),
        )
        gap = abs(solution.objective - solution.dual_objective(problem))
        scale = max(1.0, abs(solution.objective))
        return {
            "primal_infeasibility": primal,
            "complementary_slackness": max(row_cs, bound_cs),
            "duality_gap": gap,
            "min_dual": float(np.min(duals, initial=0.0)),
            "ok": (
                primal <= self.tol_feas * FEASIBILITY_FACTOR
                and max(row_cs, bound_cs) <= self.tol_cs * scale
                and gap <= self.tol_gap * scale
                and float(np.min(duals, initial=0.0)) >= -self.tol_cs
            ),
        }

    def to_lp_text(self, problem: LpProblem) -> str:
        """Human-readable CPLEX LP format dump for cross-checking"""

        def term_list(columns: np.ndarray, values: np.ndarray) -> str:
            terms = []
            for column, value in zip(columns, values):
                sign = "-" if value < 0 else "+"
                terms.append(f"{sign} {abs(value):.12g} {_lp_name(problem.name(column))}")
            text = " ".join(terms) if terms else "0 " + _lp_name(problem.name(0))
            return text[2:] if text.startswith("+ ") else text

        objective = np.flatnonzero(problem.c)
        lines = ["\\ generated by app.services.lp_engine", "Maximize", f" obj: {term_list(objective, problem.c[objective])}"]
        lines.append("Subject To")
        for row in range(problem.n_rows):
            lines.append(
                f" {_lp_name(problem.label(row))}_{row}: {term_list(*problem.sparse_row(row))} <= {problem.b[row]:.12g}"
            )
        lines.append("Bounds")
        for column in range(problem.n_vars):
            upper = problem.upper[column]
            upper_text = "+inf" if not math.isfinite(upper) else f"{upper:.12g}"
            lines.append(f" {problem.lower[column]:.12g} <= {_lp_name(problem.name(column))} <= {upper_text}")
        binaries = [_lp_name(problem.name(j)) for j in np.flatnonzero(problem.integer)]
        if binaries:
            lines.append("Binaries")
            lines.append(" " + " ".join(binaries))
        lines.append("End")
        return "\n".join(lines) + "\n"


def state_inverse(M: np.ndarray, basis: np.ndarray) -> np.ndarray:
    if M.shape[0] == 0:
        return np.zeros((0, 0))
    return np.linalg.inv(M[:, basis])


def _lp_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in name)


# Global instance
lp_engine = LpEngine()

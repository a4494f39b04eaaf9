import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.core.exceptions import BruteForceLimitError, SolverError
from app.models.lp import LpBuilder, LpSolution, LpStatus
from app.services.lp_engine import FEASIBILITY_FACTOR, LpEngine, lp_engine
from tests.helpers import make_problem, random_lp


class TestSolveLp:
    def test_bounds_only(self):
        solution = lp_engine.solve_lp(make_problem([3.0]))
        assert solution.status == LpStatus.OPTIMAL
        assert solution.x.tolist() == [1.0]
        assert solution.objective == 3.0
        assert solution.duals.size == 0

    def test_shared_row_dual(self):
        problem = make_problem([1.0, 1.0], A=[[1.0, 1.0]], b=[1.0])
        solution = lp_engine.solve_lp(problem)
        assert solution.objective == pytest.approx(1.0)
        assert solution.duals.tolist() == pytest.approx([1.0])

    def test_shared_row_through_simplex(self):
        problem = make_problem([1.0, 1.0], A=[[1.0, 1.0]], b=[1.0])
        solution = lp_engine.solve_lp(problem, structured=False)
        assert solution.objective == pytest.approx(1.0)
        assert lp_engine.verify_optimality(problem, solution)["ok"]

    def test_infeasible(self):
        solution = lp_engine.solve_lp(make_problem([1.0], A=[[1.0]], b=[-1.0]))
        assert solution.status == LpStatus.INFEASIBLE

    def test_infeasible_through_simplex(self):
        problem = make_problem([1.0, 1.0], A=[[1.0, 1.0], [-1.0, -1.0]], b=[1.0, -3.0])
        assert lp_engine.solve_lp(problem).status == LpStatus.INFEASIBLE

    def test_unbounded(self):
        problem = make_problem([1.0], upper=np.array([np.inf]))
        assert lp_engine.solve_lp(problem).status == LpStatus.UNBOUNDED

    def test_iteration_limit(self):
        engine = LpEngine(max_iterations=1)
        problem = make_problem(
            [1.0, 1.0], A=[[1.0, 2.0], [2.0, 1.0]], b=[2.0, 2.0], upper=np.array([np.inf, np.inf])
        )
        assert engine.solve_lp(problem).status == LpStatus.ITERATION_LIMIT

    def test_greater_equal_rows_need_phase_one(self):
        # x + y >= 1 written as -x - y <= -1, minimize x + 2y
        problem = make_problem([-1.0, -2.0], A=[[-1.0, -1.0]], b=[-1.0])
        solution = lp_engine.solve_lp(problem)
        assert solution.status == LpStatus.OPTIMAL
        assert solution.x.tolist() == pytest.approx([1.0, 0.0])
        assert solution.objective == pytest.approx(-1.0)
        assert lp_engine.verify_optimality(problem, solution)["ok"]

    def test_disjoint_packing_matches_simplex(self):
        rng = np.random.default_rng(4)
        A = np.zeros((3, 9))
        for col in range(9):
            A[col % 3, col] = rng.uniform(0.5, 2.0)
        problem = make_problem(rng.uniform(-1, 4, size=9), A=A, b=[1.0, 2.0, 0.5])
        fast = lp_engine.solve_lp(problem)
        slow = lp_engine.solve_lp(problem, structured=False)
        assert fast.objective == pytest.approx(slow.objective)
        assert lp_engine.verify_optimality(problem, fast)["ok"]

    def test_cost_scaling_keeps_the_optimizer(self):
        problem = random_lp(np.random.default_rng(9), 8, 6)
        base = lp_engine.solve_lp(problem)
        scaled = lp_engine.solve_lp(problem.with_cost(problem.c * 3.0))
        assert scaled.objective == pytest.approx(3.0 * base.objective)
        assert np.allclose(scaled.x, base.x)

    @settings(max_examples=500, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n_vars=st.integers(1, 30), n_rows=st.integers(0, 30))
    def test_kkt_on_random_programs(self, seed, n_vars, n_rows):
        problem = random_lp(np.random.default_rng(seed), n_vars, n_rows)
        solution = lp_engine.solve_lp(problem)
        assert solution.status == LpStatus.OPTIMAL
        report = lp_engine.verify_optimality(problem, solution)
        assert report["ok"], report
        # Weak duality in the max sense
        assert solution.dual_objective(problem) >= solution.objective - lp_engine.tol_gap * max(1.0, abs(solution.objective))

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_matches_scipy(self, seed):
        optimize = pytest.importorskip("scipy.optimize")
        problem = random_lp(np.random.default_rng(seed), 10, 8)
        solution = lp_engine.solve_lp(problem)
        reference = optimize.linprog(
            -problem.c,
            A_ub=problem.A,
            b_ub=problem.b,
            bounds=list(zip(problem.lower, problem.upper)),
            method="highs",
        )
        assert reference.status == 0
        assert solution.objective == pytest.approx(-reference.fun, abs=1e-6)


class TestSolveIlp:
    def test_knapsack(self):
        problem = make_problem([3.0, 2.0], A=[[2.0, 2.0]], b=[3.0], integer=True)
        solution = lp_engine.solve_ilp(problem)
        assert solution.status == LpStatus.OPTIMAL
        assert solution.x.tolist() == [1.0, 0.0]
        assert solution.objective == 3.0

    def test_integral_relaxation_is_returned_as_is(self):
        problem = make_problem([2.0, -1.0, 1.0], A=[[1.0, 0.0, 1.0]], b=[2.0], integer=True)
        relaxed = lp_engine.solve_lp(problem)
        integral = lp_engine.solve_ilp(problem)
        assert integral.objective == relaxed.objective
        assert integral.x.tolist() == relaxed.x.tolist()

    def test_infeasible(self):
        problem = make_problem([1.0, 1.0], A=[[-2.0, -2.0], [2.0, 2.0]], b=[-1.0, 1.5], integer=True)
        assert lp_engine.solve_ilp(problem).status == LpStatus.INFEASIBLE

    def test_rejects_non_binary_bounds(self):
        problem = make_problem([1.0], upper=np.array([2.0]), integer=True)
        with pytest.raises(SolverError):
            lp_engine.solve_ilp(problem)

    def test_node_limit(self):
        engine = LpEngine(node_limit=1)
        problem = make_problem([3.0, 2.0], A=[[2.0, 2.0]], b=[3.0], integer=True)
        assert engine.solve_ilp(problem).status == LpStatus.NODE_LIMIT

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n_vars=st.integers(1, 12), n_rows=st.integers(0, 8))
    def test_matches_brute_force(self, seed, n_vars, n_rows):
        problem = random_lp(np.random.default_rng(seed), n_vars, n_rows, integer=True)
        assert lp_engine.solve_ilp(problem).objective == lp_engine.brute_force_binary(problem).objective

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(200))
    def test_oracle_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        problem = random_lp(rng, int(rng.integers(4, 13)), int(rng.integers(1, 9)), integer=True)
        assert lp_engine.solve_ilp(problem).objective == lp_engine.brute_force_binary(problem).objective


class TestBruteForce:
    def test_no_variables(self):
        solution = lp_engine.brute_force_binary(make_problem([], integer=True))
        assert solution.status == LpStatus.OPTIMAL
        assert solution.objective == 0.0

    def test_knapsack(self):
        problem = make_problem([3.0, 2.0], A=[[2.0, 2.0]], b=[3.0], integer=True)
        assert lp_engine.brute_force_binary(problem).x.tolist() == [1.0, 0.0]

    def test_ties_go_to_the_smallest_vector(self):
        problem = make_problem([1.0, 1.0], A=[[1.0, 1.0]], b=[1.0], integer=True)
        assert lp_engine.brute_force_binary(problem).x.tolist() == [0.0, 1.0]

    def test_infeasible(self):
        problem = make_problem([1.0], A=[[1.0]], b=[-1.0], integer=True)
        assert lp_engine.brute_force_binary(problem).status == LpStatus.INFEASIBLE

    def test_variable_cap(self):
        with pytest.raises(BruteForceLimitError):
            lp_engine.brute_force_binary(make_problem(np.ones(21), integer=True))

    def test_continuous_variables_rejected(self):
        with pytest.raises(BruteForceLimitError):
            lp_engine.brute_force_binary(make_problem([1.0, 1.0]))


class TestDiagnostics:
    @pytest.mark.parametrize("excess, ok", [(0.0, True), (5.0, True), (FEASIBILITY_FACTOR * 2.0, False)])
    def test_primal_residual_allowance(self, excess, ok):
        problem = make_problem([0.0])
        solution = LpSolution(
            status=LpStatus.OPTIMAL,
            x=[1.0 + excess * lp_engine.tol_feas],
            objective=0.0,
            duals=[],
            reduced_costs=[0.0],
        )
        report = lp_engine.verify_optimality(problem, solution)
        assert report["primal_infeasibility"] == pytest.approx(excess * lp_engine.tol_feas)
        assert report["ok"] is ok

    def test_sparse_row_view(self):
        builder = LpBuilder()
        columns = [builder.add_variable(f"x[{j}]") for j in range(5)]
        builder.add_row({columns[1]: 2.0, columns[4]: -1.0, columns[2]: 0.0}, 3.0, "cap")
        builder.add_row({}, 1.0, "empty")
        problem = builder.build()
        assert problem.nnz == 2
        cols, values = problem.sparse_row(0)
        assert cols.tolist() == [1, 4]
        assert values.tolist() == [2.0, -1.0]
        assert problem.sparse_row(1)[0].size == 0

    def test_lp_text_dump(self):
        builder = LpBuilder()
        x = builder.add_variable("x[0]", cost=2.0, integer=True)
        y = builder.add_variable("y", cost=-1.0)
        builder.add_row({x: 1.0, y: 1.0}, 1.0, "cap")
        text = lp_engine.to_lp_text(builder.build())
        assert "Maximize" in text
        assert " obj: 2 x_0_ - 1 y" in text
        assert " cap_0: 1 x_0_ + 1 y <= 1" in text
        assert "Binaries\n x_0_" in text
        assert text.endswith("End\n")

    def test_builder_rejects_duplicate_names(self):
        builder = LpBuilder()
        builder.add_variable("x")
        with pytest.raises(ValueError):
            builder.add_variable("x")

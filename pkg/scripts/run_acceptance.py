#!/usr/bin/env python3
"""
Seeded acceptance runs for the embedding framework

Each check runs over a batch of seeds and prints its pass rate. The timing
comparison is reported but never fails the run.

    python scripts/run_acceptance.py [--quick] [--only lp,ilp,gap,study,scenario]
"""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from app.core.exceptions import VneError  # noqa: E402
from app.core.logging import setup_logging  # noqa: E402
from app.models.decomposition import StepRule, StopRule  # noqa: E402
from app.models.experiment import ExperimentConfig  # noqa: E402
from app.models.lp import LpProblem, LpStatus  # noqa: E402
from app.services.dual_decomposition import dual_decomposition  # noqa: E402
from app.services.harness import experiment_harness  # noqa: E402
from app.services.lp_engine import lp_engine  # noqa: E402
from app.services.partitioner import partitioner  # noqa: E402

logger = logging.getLogger("app.scripts.acceptance")


class Tally:
    def __init__(self, name: str, required_rate: float, blocking: bool = True):
        self.name = name
        self.required_rate = required_rate
        self.blocking = blocking
        self.passed = 0
        self.total = 0
        self.started = time.perf_counter()

    def record(self, ok: bool, detail: str = "") -> None:
        self.total += 1
        self.passed += int(ok)
        if not ok and detail:
            logger.info(f"{self.name}: {detail}")

    @property
    def rate(self) -> float:
        return self.passed / self.total if self.total else 0.0

    @property
    def ok(self) -> bool:
        return not self.blocking or (self.total > 0 and self.rate >= self.required_rate)

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        if not self.blocking:
            status = "INFO"
        seconds = time.perf_counter() - self.started
        return f"[{status}] {self.name}: {self.passed}/{self.total} ({self.rate:.0%}, need {self.required_rate:.0%}) in {seconds:.1f}s"


def random_problem(rng: np.random.Generator, n_vars: int, n_rows: int, integer: bool) -> LpProblem:
    """Bounded variables and b >= 0, so the origin is feasible"""
    return LpProblem(
        c=rng.integers(-4, 10, size=n_vars).astype(float),
        A=rng.integers(-3, 6, size=(n_rows, n_vars)).astype(float),
        b=rng.integers(0, 10, size=n_rows).astype(float),
        lower=np.zeros(n_vars),
        upper=np.ones(n_vars) if integer else rng.uniform(1.0, 5.0, size=n_vars),
        integer=np.full(n_vars, integer),
    )


def check_ilp_oracle(seeds: int) -> Tally:
    tally = Tally("ILP equals brute force", 1.0)
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        problem = random_problem(rng, int(rng.integers(2, 13)), int(rng.integers(1, 8)), integer=True)
        exact = lp_engine.brute_force_binary(problem)
        found = lp_engine.solve_ilp(problem)
        tally.record(found.objective == exact.objective, f"seed {seed}: {found.objective} vs {exact.objective}")
    return tally


def check_lp_kkt(seeds: int) -> Tally:
    tally = Tally("LP optimality certificates", 1.0)
    for seed in range(seeds):
        rng = np.random.default_rng(10_000 + seed)
        problem = random_problem(rng, int(rng.integers(1, 31)), int(rng.integers(1, 31)), integer=False)
        solution = lp_engine.solve_lp(problem)
        if solution.status != LpStatus.OPTIMAL:
            tally.record(False, f"seed {seed}: {solution.status}")
            continue
        residuals = lp_engine.verify_optimality(problem, solution)
        tally.record(residuals["ok"], f"seed {seed}: {residuals}")
    return tally


def convergence_config(seed: int, **updates) -> ExperimentConfig:
    data = {
        "network": {"kind": "mesh", "nodes": 10, "node_cap_ratio": 1.0, "k_max": 1},
        "vn_stream": {"count": 1, "n_vnodes": 50, "link_prob": 0.0, "seed": seed},
        "partition_policy": {"kind": "halves"},
        "utility": {"mode": "affinity"},
        "step_rule": {"kind": "diminishing", "scale": 0.5},
        "stop": {"max_iterations": 100, "gap_tolerance": 0.0, "g_tolerance": 0.0},
    }
    data.update(updates)
    return ExperimentConfig.model_validate(data)


def check_no_duality_gap(seeds: int, iterations: int) -> Tally:
    tally = Tally("Dual bound reaches the coupled optimum", 1.0)
    for seed in range(seeds):
        cfg = convergence_config(seed)
        net, requests = experiment_harness.prepare(cfg)
        request = requests[0]
        util = experiment_harness.utility_for(cfg, net, [request])
        parts = partitioner.split(request, cfg.partition_policy.for_request(request.gamma))
        plp = partitioner.build_partitioned_lp(net, request, parts, util)
        optimum = experiment_harness.coupled_optimum(plp)
        trace = dual_decomposition.run_dual(
            plp, StepRule(), StopRule(max_iterations=iterations, gap_tolerance=1e-3), optimum
        )
        excess = trace.best_bound - optimum
        tally.record(excess <= 1e-3 * abs(optimum), f"seed {seed}: bound exceeds optimum by {excess:.3g}")
    return tally


def check_study(seeds: int, formula: Tally) -> Tuple[Tally, Tally]:
    gaps = Tally("Dual gap at t=100 <= primal gap", 0.7)
    timing = Tally("Dual solver time >= primal solver time", 0.5, blocking=False)
    for seed in range(seeds):
        study = experiment_harness.run_convergence_study(convergence_config(seed))
        gaps.record(
            study.dual.final_gap <= study.primal.final_gap,
            f"seed {seed}: dual {study.dual.final_gap:.4g} primal {study.primal.final_gap:.4g}",
        )
        timing.record(study.dual.solver_seconds >= study.primal.solver_seconds)
        for trace in (study.primal, study.dual):
            formula.record(study.messages[trace.algorithm] == 2 * trace.partitions * trace.iterations)
    return gaps, timing


def check_scenario(seeds: int, formula: Tally) -> Tally:
    tally = Tally("Splitting lowers allocation and raises signaling", 0.8)
    for seed in range(seeds):
        reports = {}
        for policy in ("none", "halves"):
            cfg = ExperimentConfig.model_validate(
                {
                    "network": {"kind": "mesh", "nodes": 5, "node_cap": 40.0, "link_cap": 40.0},
                    "vn_stream": {"count": 100, "n_vnodes": 4, "link_prob": 0.5, "seed": seed},
                    "partition_policy": {"kind": policy},
                    "stop": {"max_iterations": 100},
                }
            )
            reports[policy] = experiment_harness.run_experiment(cfg)
            for trace in reports[policy].traces.values():
                formula.record(trace.records[-1].msgs_cum == 2 * trace.partitions * trace.iterations)
        whole, halves = reports["none"], reports["halves"]
        tally.record(
            whole.allocation_ratio >= halves.allocation_ratio
            and whole.revenue >= halves.revenue
            and halves.overhead.messages > whole.overhead.messages,
            f"seed {seed}: ratio {whole.allocation_ratio:.2f}/{halves.allocation_ratio:.2f}, "
            f"messages {whole.overhead.messages}/{halves.overhead.messages}",
        )
    return tally


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--quick", action="store_true", help="Fewer seeds")
    parser.add_argument("--only", default="lp,ilp,gap,study,scenario", help="Comma separated checks")
    parser.add_argument("--log-level", default="WARNING")
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    only = set(args.only.split(","))
    scale = 4 if args.quick else 1
    tallies: List[Tally] = []
    formula = Tally("Messages = 2 * partitions * iterations", 1.0)
    runs: Dict[str, Callable[[], None]] = {
        "ilp": lambda: tallies.append(check_ilp_oracle(200 // scale)),
        "lp": lambda: tallies.append(check_lp_kkt(500 // scale)),
        "gap": lambda: tallies.append(check_no_duality_gap(20 // scale, 2000)),
        "study": lambda: tallies.extend(check_study(20 // scale, formula)),
        "scenario": lambda: tallies.append(check_scenario(10 // scale or 1, formula)),
    }
    try:
        for name, run in runs.items():
            if name in only:
                before = len(tallies)
                run()
                for tally in tallies[before:]:
                    print(tally.line())
    except VneError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code

    if formula.total:
        tallies.append(formula)
        print(formula.line())
    failed = [t.name for t in tallies if not t.ok]
    print(f"{len(tallies) - len(failed)}/{len(tallies)} checks passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

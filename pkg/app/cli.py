"""
Command line entry point

    vne embed --config experiment.json     online experiment, report files
    vne study --config experiment.json     primal vs dual convergence study
    vne gen --kind mesh|linear|vn ...      random instance file

Exit codes: 0 success, 2 configuration error, 3 solver failure, 1 other
errors (IO, report writing).
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app.config import settings
from app.core.exceptions import ConfigurationError, VneError
from app.core.logging import setup_logging
from app.models.experiment import ExperimentConfig
from app.models.request import ValueRule
from app.services.harness import derive_seed, experiment_harness
from app.services.instance_io import instance_io
from app.services.report_writer import report_writer
from app.services.topology import topology_service
from app.utils.file_utils import read_json

logger = logging.getLogger("app.cli")


def load_experiment_config(path: Path) -> ExperimentConfig:
    """
    Read and validate an experiment file

    Raises:
        ConfigurationError: unreadable file, bad JSON or schema violations
    """
    path = Path(path)
    try:
        data = read_json(path)
    except (OSError, ValueError) as e:
        logger.error(f"Cannot read config {path}: {e}")
        raise ConfigurationError(f"Cannot read config file {path}", details={"error": str(e)})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        logger.error(f"Invalid config {path}: {e.error_count()} errors")
        raise ConfigurationError(
            f"Invalid config file {path}",
            details={"errors": [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]},
        )


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Command line flags win over the config file"""
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir is not None:
        cfg.output.out_dir = args.out_dir
    if args.format is not None:
        cfg.output.format = args.format
    if getattr(args, "algorithm", None) is not None:
        cfg.algorithm = args.algorithm
    return cfg


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="vne", description="VN embedding with monolithic, primal and dual decomposition"
    )
    parser.add_argument("--log-level", default=None, help=f"Logging level (default {settings.log_level})")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_run_options(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", required=True, type=Path, help="Experiment JSON file")
        sub.add_argument("--seed", type=int, default=None, help="Override the experiment seed")
        sub.add_argument("--out-dir", default=None, help="Directory for report files")
        sub.add_argument("--format", choices=("csv", "jsonl"), default=None, help="Report format")

    embed = commands.add_parser("embed", help="Run one online experiment")
    add_run_options(embed)
    embed.add_argument(
        "--algorithm", choices=("monolithic", "primal", "dual"), default=None, help="Override the algorithm"
    )
    embed.add_argument("--no-traces", action="store_true", help="Skip per-request trace files")

    study = commands.add_parser("study", help="Primal and dual convergence on one instance")
    add_run_options(study)

    gen = commands.add_parser("gen", help="Write a random instance file")
    gen.add_argument("--kind", choices=("mesh", "linear", "vn"), default="mesh")
    gen.add_argument("--out", required=True, type=Path, help="Instance file to write")
    gen.add_argument("--nodes", type=int, default=5)
    gen.add_argument("--node-cap", type=float, default=100.0)
    gen.add_argument("--link-cap", type=float, default=100.0)
    gen.add_argument("--count", type=int, default=None, help="VN requests (default 10 for vn, else 0)")
    gen.add_argument("--n-vnodes", type=int, default=4)
    gen.add_argument("--link-prob", type=float, default=0.5)
    gen.add_argument("--demand-min", type=float, default=1.0)
    gen.add_argument("--demand-max", type=float, default=10.0)
    gen.add_argument("--value-rule", choices=[rule.value for rule in ValueRule], default=ValueRule.SUM_NODE_DEMAND.value)
    gen.add_argument("--integral", action="store_true", help="Integer demands")
    gen.add_argument("--seed", type=int, default=0)

    return parser.parse_args(argv)


def run_embed(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_experiment_config(args.config), args)
    report = experiment_harness.run_experiment(cfg)
    written = report_writer.emit_report(
        report, cfg.output.out_dir, cfg.output.format, traces=cfg.output.traces and not args.no_traces
    )
    ratio = "n/a" if report.allocation_ratio is None else f"{report.allocation_ratio:.3f}"
    print(
        f"{report.accepted}/{report.requested} accepted, allocation ratio {ratio}, "
        f"revenue {report.revenue:.6g}, {report.overhead.messages} messages -> {written[0]}"
    )
    return 0


def run_study(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_experiment_config(args.config), args)
    study = experiment_harness.run_convergence_study(cfg)
    written = report_writer.emit_study(study, cfg.output.out_dir, cfg.output.name)
    print(
        f"primal: {study.primal.iterations} iterations, gap {study.primal.final_gap:.4g}; "
        f"dual: {study.dual.iterations} iterations, gap {study.dual.final_gap:.4g} -> {written[0]}"
    )
    return 0


def run_gen(args: argparse.Namespace) -> int:
    if args.kind == "linear":
        net = topology_service.generate_linear(args.nodes, args.node_cap, args.link_cap)
    else:
        net = topology_service.generate_full_mesh(args.nodes, args.node_cap, args.link_cap)
    count = args.count if args.count is not None else (10 if args.kind == "vn" else 0)
    requests = [
        topology_service.generate_random_vn(
            n_vnodes=args.n_vnodes,
            link_prob=args.link_prob,
            demand_range=(args.demand_min, args.demand_max),
            value_rule=ValueRule(args.value_rule),
            seed=derive_seed(args.seed, j),
            request_id=j,
            integral=args.integral,
        )
        for j in range(count)
    ]
    path = instance_io.save_instance(args.out, net, requests)
    print(f"{net.node_count} nodes, {len(requests)} requests -> {path}")
    return 0


COMMANDS = {"embed": run_embed, "study": run_study, "gen": run_gen}


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    try:
        setup_logging(args.log_level)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return ConfigurationError.exit_code

    try:
        return COMMANDS[args.command](args)
    except VneError as e:
        logger.error(f"{type(e).__name__}: {e.message}", extra={"details": e.details})
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        # Overrides are validated on assignment
        print(f"error: invalid option: {e.errors()[0]['msg']}", file=sys.stderr)
        return ConfigurationError.exit_code
    except OSError as e:
        logger.error(f"IO failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

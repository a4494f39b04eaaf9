# app/api/experiments.py
import logging
from datetime import datetime, timezone

from fastapi import APIRouter, HTTPException

from app.config import settings
from app.core.exceptions import VneError
from app.models.experiment import ExperimentConfig
from app.models.responses import (
    ExperimentSummaryResponse,
    GenerateInstanceRequest,
    HealthCheckResponse,
    InstanceResponse,
    StudySummaryResponse,
)
from app.services.harness import derive_seed, experiment_harness
from app.services.report_writer import report_writer
from app.services.topology import topology_service

router = APIRouter()
logger = logging.getLogger("app.api.experiments")


@router.post("/experiments", response_model=ExperimentSummaryResponse)
def run_experiment(cfg: ExperimentConfig, emit: bool = False):
    """
    Run one online experiment and return its summary

    With emit=true the report, traces and message log are also written to
    the configured output directory.
    """
    try:
        logger.info(f"Experiment {cfg.output.name} requested ({cfg.algorithm})")
        report = experiment_harness.run_experiment(cfg)
        written = []
        if emit:
            paths = report_writer.emit_report(
                report, cfg.output.out_dir, cfg.output.format, traces=cfg.output.traces
            )
            written = [str(path) for path in paths]
        return ExperimentSummaryResponse.from_report(report, written)
    except VneError:
        raise
    except Exception as e:
        logger.error(f"Experiment {cfg.output.name} failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"Experiment failed: {str(e)}")


@router.post("/studies", response_model=StudySummaryResponse)
def run_study(cfg: ExperimentConfig, emit: bool = False):
    """Primal and dual convergence on the first request of the stream"""
    try:
        study = experiment_harness.run_convergence_study(cfg)
        if emit:
            report_writer.emit_study(study, cfg.output.out_dir, cfg.output.name)
        return StudySummaryResponse.from_study(study)
    except VneError:
        raise
    except Exception as e:
        logger.error(f"Convergence study failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"Study failed: {str(e)}")


@router.post("/instances/generate", response_model=InstanceResponse)
def generate_instance(body: GenerateInstanceRequest):
    """Random network and VN stream in the instance file layout"""
    if body.linear:
        net = topology_service.generate_linear(body.nodes, body.node_cap, body.link_cap)
    else:
        net = topology_service.generate_full_mesh(body.nodes, body.node_cap, body.link_cap)
    requests = [
        topology_service.generate_random_vn(
            n_vnodes=body.n_vnodes,
            link_prob=body.link_prob,
            demand_range=body.demand_range,
            value_rule=body.value_rule,
            seed=derive_seed(body.seed, j),
            request_id=j,
            integral=body.integral,
        )
        for j in range(body.count)
    ]
    logger.info(f"Generated instance: {net.node_count} nodes, {len(requests)} requests")
    return InstanceResponse(
        physical_network=net.model_dump(mode="json", exclude={"paths"}),
        vn_requests=[request.model_dump(mode="json") for request in requests],
    )


@router.get("/health", response_model=HealthCheckResponse)
def health_check():
    return HealthCheckResponse(
        status="healthy",
        timestamp=datetime.now(timezone.utc).isoformat(),
        service=settings.app_name,
        version="1.0.0",
        dependencies={"lp_engine": "builtin", "report_format": settings.report_format},
    )

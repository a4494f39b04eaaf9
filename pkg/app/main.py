import logging
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import PlainTextResponse
from fastapi.routing import APIRoute

from app.api.experiments import router as experiments_router
from app.api.middleware import setup_middleware
from app.config import settings
from app.core.exceptions import setup_exception_handlers
from app.core.logging import setup_logging
from app.models.responses import APIInfoResponse
from app.utils.file_utils import ensure_directory_exists

logger = logging.getLogger("app.main")

VERSION = "1.0.0"


@asynccontextmanager
async def lifespan(app: FastAPI):
    setup_logging()
    if not ensure_directory_exists(Path(settings.output_dir)):
        logger.warning(f"Output directory {settings.output_dir} is not writable; emit=true will fail")
    logger.info(
        f"Solver settings: {settings.engine_config}, signaling: {settings.protocol_config}, "
        f"parallel subproblems: {settings.parallel_subproblems}"
    )
    yield


def create_application() -> FastAPI:
    """FastAPI application with the experiment routes and error handlers"""
    app = FastAPI(
        title=settings.app_name,
        description="Run VN embedding experiments with monolithic, primal and dual decomposition",
        version=VERSION,
        debug=settings.debug,
        lifespan=lifespan,
    )
    setup_middleware(app)
    setup_exception_handlers(app)
    app.include_router(experiments_router, tags=["experiments"])

    @app.get("/", response_model=APIInfoResponse)
    async def root():
        return APIInfoResponse(
            message=f"{settings.app_name} API",
            version=VERSION,
            status="running",
            endpoints={
                "health": "/health",
                "experiments": "/experiments",
                "studies": "/studies",
                "instances": "/instances/generate",
                "docs": "/docs",
            },
        )

    @app.get("/routes-simple", response_class=PlainTextResponse)
    async def routes_simple():
        """One 'METHODS: path' line per API route"""
        return "\n".join(
            f"{', '.join(sorted(route.methods))}: {route.path}"
            for route in app.routes
            if isinstance(route, APIRoute)
        )

    return app


app = create_application()


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("app.main:app", host=settings.host, port=settings.port, reload=settings.debug)

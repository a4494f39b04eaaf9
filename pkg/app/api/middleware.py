import logging
import time
from typing import Callable

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.middleware.trustedhost import TrustedHostMiddleware

from app.config import settings

logger = logging.getLogger("app.api.middleware")


async def timing_middleware(request: Request, call_next: Callable) -> Response:
   """Log each call with its wall-clock time; experiments block until solved"""

   started = time.perf_counter()
   response = await call_next(request)
   elapsed = time.perf_counter() - started

   message = f"{request.method} {request.url.path} -> {response.status_code} in {elapsed:.3f}s"
   extra = {"path": request.url.path, "status_code": response.status_code, "elapsed": elapsed}
   if response.status_code >= 500:
       logger.error(message, extra=extra)
   else:
       logger.info(message, extra=extra)

   response.headers["X-Process-Time"] = f"{elapsed:.6f}"
   return response


def setup_middleware(app: FastAPI) -> None:
   app.add_middleware(
       CORSMiddleware,
       allow_origins=settings.cors_origins,
       allow_methods=["GET", "POST"],
       allow_headers=["*"],
   )

   if not settings.debug:
       app.add_middleware(
           TrustedHostMiddleware,
           allowed_hosts=["localhost", "127.0.0.1", "testserver", settings.host],
       )

   app.middleware("http")(timing_middleware)

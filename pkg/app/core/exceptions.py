from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.exceptions import RequestValidationError
import logging
from typing import Any, Dict, Optional

logger = logging.getLogger("app.exceptions")


class VneError(Exception):
   """Base exception for the VN embedding framework"""

   exit_code = 1

   def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
       self.message = message
       self.details = details or {}
       super().__init__(self.message)


class ConfigurationError(VneError):
   """Raised when an experiment configuration or setting is invalid"""

   exit_code = 2


class InstanceFormatError(ConfigurationError):
   """Raised when an instance file cannot be parsed"""
   pass


class InvalidNetworkError(VneError):
   """Raised when a physical network violates its invariants"""
   pass


class InvalidRequestError(VneError):
   """Raised when a VN request violates its invariants"""
   pass


class DimensionMismatchError(VneError):
   """Raised when matrices, masks or vectors have inconsistent shapes"""
   pass


class PartitionPolicyError(VneError):
   """Raised when a partition policy cannot be applied to a request"""
   pass


class CapacityViolationError(VneError):
   """Raised when a residual capacity becomes negative"""

   def __init__(self, resource: str, amount: float, message: Optional[str] = None):
       super().__init__(
           message or f"Capacity violated on {resource} by {-amount:.6g}",
           details={"resource": resource, "amount": amount},
       )
       self.resource = resource
       self.amount = amount


class SolverError(VneError):
   """Raised when an optimal solve was required and not obtained"""

   exit_code = 3


class BruteForceLimitError(VneError):
   """Raised when exhaustive enumeration is asked for too many variables"""
   pass


class ReportWriteError(VneError):
   """Raised when a report or trace cannot be written"""
   pass


def _error_body(exc: VneError) -> Dict[str, Any]:
   return {
       "error": type(exc).__name__,
       "message": exc.message,
       "details": exc.details,
   }


async def vne_exception_handler(request: Request, exc: VneError) -> JSONResponse:
   """Handle custom framework exceptions"""

   logger.error(f"Application error: {exc.message}", extra={"details": exc.details})

   status_code = 400
   if isinstance(exc, ConfigurationError):
       status_code = 422
   elif isinstance(exc, SolverError):
       status_code = 500

   return JSONResponse(status_code=status_code, content=_error_body(exc))


async def validation_exception_handler(
   request: Request, exc: RequestValidationError
) -> JSONResponse:
   """Handle request validation errors"""

   logger.warning(f"Validation error: {exc.errors()}")

   return JSONResponse(
       status_code=422,
       content={
           "error": "ValidationError",
           "message": "Request validation failed",
           "details": jsonable_errors(exc),
       },
   )


def jsonable_errors(exc: RequestValidationError) -> list:
   """Strip non-serializable context from pydantic error entries"""
   return [
       {key: value for key, value in err.items() if key in ("loc", "msg", "type")}
       for err in exc.errors()
   ]


async def general_exception_handler(request: Request, exc: Exception) -> JSONResponse:
   """Handle unexpected exceptions"""

   logger.error(f"Unexpected error: {str(exc)}", exc_info=True)

   return JSONResponse(
       status_code=500,
       content={
           "error": "InternalServerError",
           "message": "An unexpected error occurred",
           "details": str(exc) if logger.isEnabledFor(logging.DEBUG) else None,
       },
   )


def setup_exception_handlers(app: FastAPI) -> None:
   """Setup exception handlers for the FastAPI application"""

   app.add_exception_handler(VneError, vne_exception_handler)
   app.add_exception_handler(RequestValidationError, validation_exception_handler)
   app.add_exception_handler(Exception, general_exception_handler)

   logger.info("Exception handlers configured")

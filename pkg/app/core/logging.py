import logging
import sys
from typing import Optional

from app.config import settings

# Chatty third-party loggers, capped at WARNING
QUIET_LOGGERS = ("uvicorn.access", "httpx", "hypothesis")


def setup_logging(log_level: Optional[str] = None, log_format: Optional[str] = None) -> None:
   """
   Configure the root logger for the CLI, the API and the scripts

   Raises:
       ValueError: for a level name logging does not know
   """
   level_name = (log_level or settings.log_level).upper()
   level = getattr(logging, level_name, None)
   if not isinstance(level, int):
       raise ValueError(f"Unknown log level: {level_name}")

   logging.basicConfig(
       level=level,
       format=log_format or settings.log_format,
       handlers=[logging.StreamHandler(sys.stdout)],
       force=True,
   )
   for name in QUIET_LOGGERS:
       logging.getLogger(name).setLevel(max(level, logging.WARNING))

   logging.getLogger("app").setLevel(level)
   logging.getLogger("app.core.logging").debug(f"Logging configured at {level_name}")

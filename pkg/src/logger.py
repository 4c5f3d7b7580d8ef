"""Logging for edge-scaler: silent by default, stderr or a rotating file on request."""

from __future__ import annotations

import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any

ROOT_LOGGER = "edge-scaler"
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
STDERR_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


def default_log_path() -> Path:
    """Per-user state directory for the run log."""
    if sys.platform == "win32":
        base = Path(os.getenv("LOCALAPPDATA", Path.home() / "AppData" / "Local"))
        return base / "edge-scaler" / "logs" / "edge-scaler.log"
    state = os.getenv("XDG_STATE_HOME")
    base = Path(state) if state else Path.home() / ".local" / "state"
    return base / "edge-scaler" / "edge-scaler.log"


class SimulationLogger:
    """Named logger configured from environment variables and the ``logging`` config section.

    Output only ever goes to stderr or a log file; stdout is reserved for results. The
    environment wins over the config: ``EDGE_SCALER_LOG_LEVEL``, ``EDGE_SCALER_LOG_FILE``
    and ``EDGE_SCALER_DEBUG=1`` (stderr).
    """

    def __init__(self, name: str = ROOT_LOGGER, config: dict[str, Any] | None = None):
        self.name = name if name.startswith(ROOT_LOGGER) else f"{ROOT_LOGGER}.{name}"
        self.section: dict[str, Any] = (config or {}).get("logging") or {}
        self.logger = logging.getLogger(self.name)
        self.logger.setLevel(self._level())
        self.logger.propagate = False
        self.logger.handlers.clear()
        for handler in self._handlers():
            self.logger.addHandler(handler)

    def _level(self) -> int:
        for candidate in (os.getenv("EDGE_SCALER_LOG_LEVEL", ""), self.section.get("level", "")):
            if str(candidate).upper() in LEVELS:
                return getattr(logging, str(candidate).upper())
        return logging.WARNING

    def _handlers(self) -> list[logging.Handler]:
        handlers: list[logging.Handler] = []
        log_file = os.getenv("EDGE_SCALER_LOG_FILE")
        if log_file or self.section.get("file_enabled"):
            path = Path(log_file or self.section.get("file_path") or default_log_path()).expanduser()
            path.parent.mkdir(parents=True, exist_ok=True)
            handler = RotatingFileHandler(path, maxBytes=1024 * 1024, backupCount=3, encoding="utf-8")
            handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
            handlers.append(handler)
        if os.getenv("EDGE_SCALER_DEBUG") == "1" or self.section.get("stderr_enabled"):
            handler = logging.StreamHandler(sys.stderr)
            handler.setFormatter(logging.Formatter(STDERR_FORMAT))
            handlers.append(handler)
        return handlers or [logging.NullHandler()]

    def debug(self, message: str, **kwargs: Any) -> None:
        self.logger.debug(message, **kwargs)

    def info(self, message: str, **kwargs: Any) -> None:
        self.logger.info(message, **kwargs)

    def warning(self, message: str, **kwargs: Any) -> None:
        self.logger.warning(message, **kwargs)

    def exception(self, message: str, **kwargs: Any) -> None:
        """Log at ERROR with the active traceback."""
        self.logger.exception(message, **kwargs)


def get_logger(name: str = ROOT_LOGGER, config: dict[str, Any] | None = None) -> SimulationLogger:
    return SimulationLogger(name, config)

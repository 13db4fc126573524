#!/usr/bin/env python3
"""
SwiptMDP Debug System
Category-tagged logging for the SwiptMDP toolkit.
"""

import sys
import os
import logging
import traceback
import json
import platform
from collections import deque
from datetime import datetime
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional


LOGGER_NAME = "SwiptMDP"
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class DebugLogger:
    """Process-wide logger with category tags and a recent-entries buffer."""

    def __init__(self, max_buffer_size: int = 1000):
        self.log_buffer: Deque[str] = deque(maxlen=max_buffer_size)
        self.log_file: Optional[Path] = None
        self._file_handler: Optional[logging.FileHandler] = None
        self.setup_logging()

    def setup_logging(self) -> None:
        """Configure the console handler. Console output goes to stderr."""
        self.logger = logging.getLogger(LOGGER_NAME)
        level_name = os.environ.get("SWIPTMDP_LOG_LEVEL", "INFO").upper()
        self.logger.setLevel(getattr(logging, level_name, logging.INFO))
        self.logger.propagate = False

        if not any(getattr(h, "_swiptmdp_console", False) for h in self.logger.handlers):
            handler = logging.StreamHandler(sys.stderr)
            handler.setFormatter(logging.Formatter(LOG_FORMAT))
            handler._swiptmdp_console = True  # type: ignore[attr-defined]
            self.logger.addHandler(handler)

    def enable_file_logging(self, logs_dir: Path) -> Path:
        """Attach a file handler writing under logs_dir; returns the log path."""
        logs_dir.mkdir(parents=True, exist_ok=True)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.log_file = logs_dir / f"swiptmdp_{timestamp}.log"

        if self._file_handler is not None:
            self.logger.removeHandler(self._file_handler)
            self._file_handler.close()

        self._file_handler = logging.FileHandler(self.log_file, encoding='utf-8')
        self._file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        self.logger.addHandler(self._file_handler)
        self.logger.info(f"[GENERAL] Log file: {self.log_file}")
        return self.log_file

    def disable_file_logging(self) -> None:
        if self._file_handler is not None:
            self.logger.removeHandler(self._file_handler)
            self._file_handler.close()
            self._file_handler = None

    def log_info(self, message: str, category: str = "GENERAL") -> None:
        formatted_msg = f"[{category}] {message}"
        self.logger.info(formatted_msg)
        self.add_to_buffer("INFO", formatted_msg)

    def log_warning(self, message: str, category: str = "GENERAL") -> None:
        formatted_msg = f"[{category}] {message}"
        self.logger.warning(formatted_msg)
        self.add_to_buffer("WARNING", formatted_msg)

    def log_error(self, message: str, category: str = "GENERAL",
                  exception: Optional[BaseException] = None) -> None:
        """Log error message with optional exception."""
        formatted_msg = f"[{category}] {message}"
        self.logger.error(formatted_msg)

        if exception is not None:
            self.logger.error(f"Exception: {exception}")
            tb = "".join(traceback.format_exception(
                type(exception), exception, exception.__traceback__))
            self.logger.debug(f"Traceback: {tb}")

        self.add_to_buffer("ERROR", formatted_msg)

    def log_debug(self, message: str, category: str = "GENERAL") -> None:
        formatted_msg = f"[{category}] {message}"
        self.logger.debug(formatted_msg)
        self.add_to_buffer("DEBUG", formatted_msg)

    def add_to_buffer(self, level: str, message: str) -> None:
        timestamp = datetime.now().strftime("%H:%M:%S")
        self.log_buffer.append(f"[{timestamp}] {level}: {message}")

    def get_recent_logs(self, count: int = 50) -> List[str]:
        """Get recent log entries."""
        entries = list(self.log_buffer)
        return entries[-count:] if entries else []

    def export_logs(self, file_path: Path) -> Path:
        """Export buffered entries and system info as JSON."""
        log_data = {
            "timestamp": datetime.now().isoformat(),
            "log_file": str(self.log_file) if self.log_file else None,
            "entries": list(self.log_buffer),
            "system_info": self.get_system_info(),
        }
        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(log_data, f, indent=2, ensure_ascii=False)
        return file_path

    def get_system_info(self) -> Dict[str, Any]:
        return {
            "python_version": sys.version,
            "platform": platform.platform(),
            "processor": platform.processor(),
            "working_directory": str(Path.cwd()),
        }


# Global debug logger instance
debug_logger = DebugLogger()


def log_info(message: str, category: str = "GENERAL") -> None:
    debug_logger.log_info(message, category)


def log_warning(message: str, category: str = "GENERAL") -> None:
    debug_logger.log_warning(message, category)


def log_error(message: str, category: str = "GENERAL",
              exception: Optional[BaseException] = None) -> None:
    debug_logger.log_error(message, category, exception)


def log_debug(message: str, category: str = "GENERAL") -> None:
    debug_logger.log_debug(message, category)


def get_debug_logger() -> DebugLogger:
    """Get debug logger instance."""
    return debug_logger

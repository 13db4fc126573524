"""
SwiptMDP - File Utilities
Atomic artifact writes and deterministic CSV/JSON formatting.
"""

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

from debug import log_info, log_error


class FileUtils:
    """Utility class for file operations."""

    @staticmethod
    def atomic_write(file_path: Path, content: str) -> bool:
        """Atomically write content to a file (temp file in the same directory, then rename)."""
        temp_name = None
        try:
            file_path.parent.mkdir(parents=True, exist_ok=True)
            fd, temp_name = tempfile.mkstemp(
                prefix=f".{file_path.name}.", suffix=".tmp", dir=file_path.parent)
            with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
                f.write(content)

            os.replace(temp_name, file_path)
            log_info(f"Content written atomically to: {file_path}", "FILE_UTILS")
            return True

        except Exception as e:
            log_error(f"Failed to write content to {file_path}: {str(e)}", "FILE_UTILS", e)
            if temp_name and os.path.exists(temp_name):
                os.unlink(temp_name)
            return False

    @staticmethod
    def format_float(value: float, digits: int = 9) -> str:
        """Format with a fixed number of significant digits."""
        return f"{float(value):.{digits}g}"

    @staticmethod
    def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                FileUtils.format_float(v) if isinstance(v, float) else v for v in row
            ])
        return buffer.getvalue()

    @staticmethod
    def render_json(payload: Any) -> str:
        """Canonical JSON text; identical payloads give identical bytes."""
        return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @staticmethod
    def write_csv(file_path: Path, header: Sequence[str],
                  rows: Iterable[Sequence[Any]]) -> bool:
        return FileUtils.atomic_write(file_path, FileUtils.render_csv(header, rows))

    @staticmethod
    def write_json(file_path: Path, payload: Any) -> bool:
        return FileUtils.atomic_write(file_path, FileUtils.render_json(payload))

"""
Centralized path configuration for SwiptMDP.

All directories the toolkit reads from or writes to, plus the environment
variables that override them.
"""

import os
from pathlib import Path


class PathConfig:
    """Centralized path configuration for SwiptMDP."""

    OUTPUT_ENV = "SWIPTMDP_OUTPUT_DIR"
    WORKERS_ENV = "SWIPTMDP_WORKERS"

    def get_project_root(self) -> Path:
        """Get the project root directory."""
        return Path(__file__).parent.parent.parent

    @property
    def scenarios_dir(self) -> Path:
        """Bundled scenario JSON files."""
        return self.get_project_root() / "scenarios"

    @property
    def output_root(self) -> Path:
        env_dir = os.environ.get(self.OUTPUT_ENV)
        if env_dir:
            return Path(env_dir)
        return Path.cwd() / "runs"

    def logs_dir(self, run_dir: Path) -> Path:
        return run_dir / "logs"

    @property
    def worker_count(self) -> int:
        """Worker count for parallel sweeps and dataset generation."""
        raw = os.environ.get(self.WORKERS_ENV, "1")
        try:
            return max(1, int(raw))
        except ValueError:
            return 1

    def ensure_directories(self, run_dir: Path) -> None:
        for directory in (run_dir, self.logs_dir(run_dir)):
            directory.mkdir(parents=True, exist_ok=True)


# Global instance for easy access
path_config = PathConfig()

"""
Tests for artifact writing, performance monitoring, logging and the error hierarchy
"""

import json
import os
import shutil
import sys
import tempfile
from pathlib import Path
from unittest.mock import patch

import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.error_handler import (
    ConfigValidationError,
    CoverageError,
    DomainError,
    ErgodicityError,
    InfeasibleError,
    NumericalError,
    SwiptError,
    TrainingError,
    exit_code_for,
)
from core.path_config import path_config
from debug import get_debug_logger, log_info
from utils.file_utils import FileUtils
from utils.performance import PerformanceMonitor


class TestFileUtils:
    """Test cases for FileUtils"""

    def setup_method(self):
        """Setup for each test method"""
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        """Cleanup after each test method"""
        if hasattr(self, 'temp_dir') and Path(self.temp_dir).exists():
            shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_atomic_write_creates_parents(self):
        """Test writing into a directory that does not exist yet"""
        path = Path(self.temp_dir) / "nested" / "out.txt"
        assert FileUtils.atomic_write(path, "hello")
        assert path.read_text(encoding="utf-8") == "hello"
        assert not list(path.parent.glob(".out.txt.*.tmp"))

    def test_json_is_canonical(self):
        """Test that key order does not change the bytes and floats round-trip"""
        a = FileUtils.render_json({"b": 0.1 + 0.2, "a": [1, 2]})
        b = FileUtils.render_json({"a": [1, 2], "b": 0.1 + 0.2})
        assert a == b
        assert json.loads(a)["b"] == 0.1 + 0.2

    def test_csv_formatting(self):
        """Test the header row and float formatting"""
        text = FileUtils.render_csv(("x", "name"), [(1.0 / 3.0, "iii"), (2, "i")])
        assert text.splitlines() == ["x,name", "0.333333333,iii", "2,i"]

    def test_write_failure_returns_false(self):
        """Test that an unwritable target reports failure"""
        blocker = Path(self.temp_dir) / "file"
        blocker.write_text("x", encoding="utf-8")
        assert not FileUtils.write_json(blocker / "child.json", {"a": 1})


class TestPerformanceMonitor:
    """Test cases for PerformanceMonitor"""

    def test_time_operation(self):
        """Test that timed operations are summarized by name"""
        monitor = PerformanceMonitor()
        for _ in range(2):
            with monitor.time_operation("solve", {"scheme": "i"}):
                pass
        summary = monitor.get_performance_summary()
        assert summary["total_operations"] == 2
        assert summary["by_operation"]["solve"]["count"] == 2
        monitor.clear_metrics()
        assert monitor.get_performance_summary()["total_operations"] == 0

    def test_records_on_exception(self):
        """Test that a failing operation is still recorded"""
        monitor = PerformanceMonitor()
        with pytest.raises(ValueError):
            with monitor.time_operation("fails"):
                raise ValueError("boom")
        assert monitor.metrics[0].duration is not None

    def test_metric_cap(self):
        """Test that old metrics are dropped beyond the cap"""
        monitor = PerformanceMonitor(max_metrics=3)
        for i in range(5):
            with monitor.time_operation(f"op{i}"):
                pass
        assert [m.name for m in monitor.metrics] == ["op2", "op3", "op4"]


class TestDebugLogger:
    """Test cases for the debug logger"""

    def setup_method(self):
        """Setup for each test method"""
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        """Cleanup after each test method"""
        get_debug_logger().disable_file_logging()
        if hasattr(self, 'temp_dir') and Path(self.temp_dir).exists():
            shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_file_logging(self):
        """Test that messages reach the run log file"""
        logger = get_debug_logger()
        log_path = logger.enable_file_logging(Path(self.temp_dir) / "logs")
        log_info("quantizer ready", "MDP")
        logger.disable_file_logging()
        assert "[MDP] quantizer ready" in log_path.read_text(encoding="utf-8")

    def test_buffer_and_export(self):
        """Test the recent-entries buffer and the crash report export"""
        logger = get_debug_logger()
        log_info("sweep point omitted", "OPTIMIZER")
        assert logger.get_recent_logs(1)[0].endswith("[OPTIMIZER] sweep point omitted")
        report = logger.export_logs(Path(self.temp_dir) / "crash_report.json")
        data = json.loads(report.read_text(encoding="utf-8"))
        assert data["entries"]
        assert "python_version" in data["system_info"]


class TestErrors:
    """Test the error hierarchy and the exit-code mapping"""

    def test_exit_codes(self):
        """Test the exit status of each failure family"""
        assert exit_code_for(ConfigValidationError("bad", "seed")) == 2
        assert exit_code_for(DomainError("bad")) == 2
        assert exit_code_for(SwiptError("io", "file_operation")) == 2
        assert exit_code_for(InfeasibleError("too much")) == 3
        assert exit_code_for(NumericalError("nan")) == 4
        assert exit_code_for(CoverageError("short grid")) == 4
        assert exit_code_for(TrainingError("diverged", 3)) == 4
        assert exit_code_for(ErgodicityError("two classes")) == 4
        assert exit_code_for(RuntimeError("other")) == 1

    def test_field_path_in_message(self):
        """Test that validation errors name the field"""
        error = ConfigValidationError("must be > 0", "circuit.load_resistance_ohm")
        assert error.message.startswith("circuit.load_resistance_ohm:")
        assert error.to_dict()["category"] == "validation"

    def test_training_error_epoch(self):
        """Test that training errors carry the epoch"""
        error = TrainingError("loss is NaN", 7)
        assert error.epoch == 7
        assert "epoch 7" in error.message


class TestPathConfig:
    """Test environment overrides of the path configuration"""

    def test_worker_count(self):
        """Test the worker count override and its fallback"""
        with patch.dict(os.environ, {"SWIPTMDP_WORKERS": "4"}):
            assert path_config.worker_count == 4
        with patch.dict(os.environ, {"SWIPTMDP_WORKERS": "many"}):
            assert path_config.worker_count == 1

    def test_bundled_scenarios(self):
        """Test that the bundled scenarios ship with the project"""
        names = sorted(p.stem for p in path_config.scenarios_dir.glob("*.json"))
        assert names == ["hp", "lp", "mp"]

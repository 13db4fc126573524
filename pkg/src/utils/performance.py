"""
SwiptMDP - Performance Monitoring
Timing and memory sampling for the expensive numerical stages.
"""

import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional

import psutil

from debug import log_debug, log_warning


@dataclass
class PerformanceMetric:
    """Performance metric data structure."""
    name: str
    start_time: float
    end_time: Optional[float] = None
    duration: Optional[float] = None
    memory_usage: Optional[float] = None
    context: Dict[str, Any] = field(default_factory=dict)

    def finish(self) -> None:
        """Finish timing and record resident memory (MB)."""
        self.end_time = time.perf_counter()
        self.duration = self.end_time - self.start_time
        try:
            self.memory_usage = psutil.Process().memory_info().rss / 1024 / 1024
        except psutil.Error:
            self.memory_usage = 0.0


class PerformanceMonitor:
    """Collects timings of named operations; safe to use from worker threads."""

    def __init__(self, slow_threshold: float = 30.0, memory_threshold: float = 2048.0,
                 max_metrics: int = 1000):
        self.metrics: List[PerformanceMetric] = []
        self.max_metrics = max_metrics
        self.slow_threshold = slow_threshold  # seconds
        self.memory_threshold = memory_threshold  # MB
        self._lock = threading.Lock()

    @contextmanager
    def time_operation(self, name: str,
                       context: Optional[Dict[str, Any]] = None) -> Iterator[PerformanceMetric]:
        """Context manager for timing operations."""
        metric = PerformanceMetric(name=name, start_time=time.perf_counter(),
                                   context=context or {})
        try:
            yield metric
        finally:
            metric.finish()
            self._record(metric)

    def _record(self, metric: PerformanceMetric) -> None:
        with self._lock:
            self.metrics.append(metric)
            if len(self.metrics) > self.max_metrics:
                self.metrics.pop(0)

        log_debug(f"{metric.name} took {metric.duration:.3f}s", "PERF")
        if metric.duration is not None and metric.duration > self.slow_threshold:
            log_warning(f"Slow operation detected: {metric.name} took {metric.duration:.2f}s", "PERF")
        if metric.memory_usage is not None and metric.memory_usage > self.memory_threshold:
            log_warning(f"High memory usage: {metric.name} at {metric.memory_usage:.1f}MB", "PERF")

    def get_performance_summary(self) -> Dict[str, Any]:
        """Get a summary of performance metrics."""
        with self._lock:
            metrics = list(self.metrics)
        if not metrics:
            return {"total_operations": 0, "by_operation": {}}

        by_operation: Dict[str, List[float]] = {}
        for metric in metrics:
            by_operation.setdefault(metric.name, []).append(metric.duration or 0.0)

        return {
            "total_operations": len(metrics),
            "by_operation": {
                name: {
                    "count": len(durations),
                    "total_duration": sum(durations),
                    "max_duration": max(durations),
                }
                for name, durations in sorted(by_operation.items())
            },
        }

    def clear_metrics(self) -> None:
        with self._lock:
            self.metrics.clear()


# Global performance monitor
performance_monitor = PerformanceMonitor()


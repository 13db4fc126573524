"""
SwiptMDP - Utilities Module
Artifact writing and performance monitoring.
"""

from .file_utils import FileUtils
from .performance import performance_monitor

__all__ = ['FileUtils', 'performance_monitor']

"""
SwiptMDP - Error Handling
Exception hierarchy shared by the numerical modules and the CLI exit-code mapping.
"""

import traceback
from datetime import datetime
from typing import Any, Dict, Optional


class ErrorSeverity:
    """Error severity levels."""
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"


class ErrorCategory:
    """Error categories, one per failure family."""
    CONFIG = "configuration"
    VALIDATION = "validation"
    DOMAIN = "domain"
    NUMERICAL = "numerical"
    INFEASIBLE = "infeasible"
    ERGODICITY = "ergodicity"
    COVERAGE = "coverage"
    TRAINING = "training"
    FILE = "file_operation"
    CONTRACT = "contract"


class SwiptError(Exception):
    """Base exception carrying category, severity and structured details."""

    def __init__(self, message: str, category: str = ErrorCategory.NUMERICAL,
                 severity: str = ErrorSeverity.ERROR,
                 details: Optional[Dict[str, Any]] = None,
                 recovery_action: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.category = category
        self.severity = severity
        self.details = details or {}
        self.recovery_action = recovery_action
        self.timestamp = datetime.now()
        self.traceback = traceback.format_exc()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "message": self.message,
            "category": self.category,
            "severity": self.severity,
            "details": self.details,
        }


class ConfigValidationError(SwiptError):
    """Scenario parse or validation failure at a dotted field path."""

    def __init__(self, message: str, field_path: str = "",
                 details: Optional[Dict[str, Any]] = None):
        full = f"{field_path}: {message}" if field_path else message
        super().__init__(full, ErrorCategory.VALIDATION, details=details,
                         recovery_action="Fix the scenario field and rerun")
        self.field_path = field_path


class DomainError(SwiptError):
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, ErrorCategory.DOMAIN, details=details)


class NumericalError(SwiptError):
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None,
                 category: str = ErrorCategory.NUMERICAL):
        super().__init__(message, category, details=details)


class CoverageError(NumericalError):
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details, ErrorCategory.COVERAGE)


class TrainingError(NumericalError):
    def __init__(self, message: str, epoch: int,
                 details: Optional[Dict[str, Any]] = None):
        super().__init__(f"{message} (epoch {epoch})", details, ErrorCategory.TRAINING)
        self.epoch = epoch


class InfeasibleError(SwiptError):
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, ErrorCategory.INFEASIBLE, ErrorSeverity.WARNING,
                         details, recovery_action="Lower the MI requirement")


class ErgodicityError(SwiptError):
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, ErrorCategory.ERGODICITY, details=details)


class ContractViolation(SwiptError):
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, ErrorCategory.CONTRACT, ErrorSeverity.CRITICAL, details)


EXIT_CODES = {
    ErrorCategory.CONFIG: 2,
    ErrorCategory.VALIDATION: 2,
    ErrorCategory.DOMAIN: 2,
    ErrorCategory.FILE: 2,
    ErrorCategory.INFEASIBLE: 3,
    ErrorCategory.NUMERICAL: 4,
    ErrorCategory.COVERAGE: 4,
    ErrorCategory.TRAINING: 4,
    ErrorCategory.ERGODICITY: 4,
}


def exit_code_for(error: BaseException) -> int:
    """CLI exit status for an exception."""
    if isinstance(error, SwiptError):
        return EXIT_CODES.get(error.category, 1)
    return 1

"""
Exception hierarchy for the lamination engine.

Every error carries a short message and an optional context dict (node,
code, parameter value) that the CLI embeds in report.json.
"""

from typing import Any, Dict, Optional


class LaminationError(Exception):
    """Base class for all engine errors."""

    kind: str = "lamination"

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context or {})

    def to_dict(self) -> Dict[str, Any]:
        """Serializable form for reports."""
        return {
            "kind": self.kind,
            "type": type(self).__name__,
            "message": self.message,
            "context": {k: _plain(v) for k, v in self.context.items()},
        }

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={_plain(v)}" for k, v in self.context.items())
        return f"{self.message} ({details})"


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays to JSON friendly values."""
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


# ===========================================
# INPUT / SCHEMA
# ===========================================

class InputError(LaminationError):
    kind = "input"


class SchemaError(InputError):
    kind = "schema"


class DomainError(LaminationError):
    kind = "domain"


# ===========================================
# NUMERIC / GEOMETRIC FAILURES
# ===========================================

class NumericError(LaminationError):
    kind = "numeric"


class GeometryError(LaminationError):
    kind = "geometry"


class TransversalityError(LaminationError):
    kind = "transversality"


class LocalityError(LaminationError):
    kind = "locality"


class NonContractionError(LaminationError):
    kind = "non_contraction"


class HyperbolicityViolation(LaminationError):
    kind = "hyperbolicity"


class ImmersionViolation(LaminationError):
    kind = "immersion"


# ===========================================
# CODES / CONTINUATION / CHECKS
# ===========================================

class TruncationError(LaminationError):
    kind = "truncation"


class SchemeError(LaminationError):
    kind = "scheme"


class ContinuationError(LaminationError):
    kind = "continuation"


class HypothesisError(LaminationError):
    kind = "hypothesis"


class ContainmentError(LaminationError):
    kind = "containment"

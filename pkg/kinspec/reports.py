"""
Plain certification records shared by every numeric module.

A Certificate is one measured inequality: the tag names the property it
certifies (see kinspec.summary.TAGS), `measured` is the observed constant or
defect and `bound` the threshold it was compared against.
"""

import math

from pydantic import BaseModel, field_validator


class Certificate(BaseModel):
    """Outcome of a single numerical certification."""

    tag: str
    measured: float | None = None
    bound: float | None = None
    passed: bool
    detail: str = ""

    @field_validator("measured", "bound", mode="before")
    @classmethod
    def _plain_float(cls, value):
        if value is None:
            return None
        value = float(value)
        # JSON has no inf/nan
        return value if math.isfinite(value) else None


def certify_at_most(tag: str, measured: float, bound: float, detail: str = "") -> Certificate:
    """Certificate for `measured <= bound` (non-finite values fail)."""
    ok = bool(math.isfinite(measured) and measured <= bound)
    return Certificate(tag=tag, measured=measured, bound=bound, passed=ok, detail=detail)


def certify_finite(tag: str, measured: float, detail: str = "") -> Certificate:
    """Certificate for a constant that only has to exist (finite, non-negative)."""
    ok = bool(math.isfinite(measured) and measured >= 0.0)
    return Certificate(tag=tag, measured=measured, passed=ok, detail=detail)

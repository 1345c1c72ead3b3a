from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

__all__ = ["CheckOutcome", "Verdict"]


class Verdict(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"
    MANUAL_PENDING = "ManualPending"
    ERROR = "Error"

    @property
    def tag(self) -> str:
        return {"Pass": "PASS", "Fail": "FAIL", "ManualPending": "PENDING", "Error": "ERROR"}[self.value]


@dataclass(frozen=True)
class CheckOutcome:
    """Verdict of one requirement.

    ``Error`` means the check could not be evaluated at all; a violated
    criterion is always ``Fail``. ``excluded`` maps exclusion reasons to record
    counts.
    """

    requirement_id: str
    verdict: Verdict
    metrics: dict[str, float] = field(default_factory=dict)
    diagnostics: tuple[str, ...] = ()
    records_considered: int = 0
    excluded: dict[str, int] = field(default_factory=dict)

    @property
    def records_excluded(self) -> int:
        return sum(self.excluded.values())

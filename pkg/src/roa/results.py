"""Outcome record shared by the verification stages."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

from .prover import Verdict


@dataclass
class StageResult:
    stage: str
    level: Optional[float]
    certificate: str = "quadratic"
    globally_stable: bool = False
    boxes_processed: int = 0
    wall_time: float = 0.0
    trace: List[tuple] = field(default_factory=list)
    counterexample: Optional[dict] = None
    details: dict = field(default_factory=dict)

    def record(self, level: float, outcome) -> None:
        """Log one candidate level and the verdict it received."""
        if isinstance(outcome, Verdict):
            self.boxes_processed += outcome.boxes_processed
            status = outcome.status
            if outcome.witness is not None:
                self.counterexample = {"level": level, **outcome.to_dict()}
        else:
            status = "verified" if outcome else "failed"
        self.trace.append((float(level), status))

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "level": self.level,
            "certificate": self.certificate,
            "globally_stable": self.globally_stable,
            "boxes_processed": self.boxes_processed,
            "wall_time": self.wall_time,
            "bisection": [{"level": c, "status": s} for c, s in self.trace],
            "counterexample": self.counterexample,
            **({"details": self.details} if self.details else {}),
        }

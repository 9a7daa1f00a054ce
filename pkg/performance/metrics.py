"""Timing and run metadata for verification runs.

Suites time each check through ``MetricsCollector``; the CLI prints
``RunMetadata`` when a seed is given so runs can be reproduced.
"""

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional


@dataclass
class CheckMetrics:
    """Timing of one named verification check."""

    name: str
    elapsed_ms: float = 0.0
    evaluations: int = 0

    @property
    def evaluations_per_second(self) -> float:
        return self.evaluations / self.elapsed_ms * 1000 if self.elapsed_ms > 0 else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "elapsed_ms": self.elapsed_ms,
            "evaluations": self.evaluations,
            "evaluations_per_second": self.evaluations_per_second,
        }


class MetricsCollector:
    """Collects per-check timings."""

    def __init__(self) -> None:
        self.metrics: List[CheckMetrics] = []
        self._start_times: Dict[str, float] = {}

    def start_timer(self, operation: str) -> None:
        self._start_times[operation] = time.perf_counter()

    def end_timer(self, operation: str) -> float:
        """End timing an operation and return duration in milliseconds."""
        if operation not in self._start_times:
            return 0.0
        duration_ms = (time.perf_counter() - self._start_times[operation]) * 1000
        del self._start_times[operation]
        return duration_ms

    def record(self, name: str, elapsed_ms: float, evaluations: int = 0) -> CheckMetrics:
        entry = CheckMetrics(name, elapsed_ms, evaluations)
        self.metrics.append(entry)
        return entry

    def get(self, name: str) -> Optional[CheckMetrics]:
        for entry in reversed(self.metrics):
            if entry.name == name:
                return entry
        return None

    def total_ms(self) -> float:
        return sum(m.elapsed_ms for m in self.metrics)

    def slowest(self) -> Optional[CheckMetrics]:
        if not self.metrics:
            return None
        return max(self.metrics, key=lambda m: m.elapsed_ms)

    def to_dict(self) -> Dict[str, Any]:
        return {"checks": [m.to_dict() for m in self.metrics], "total_ms": self.total_ms()}


@contextmanager
def time_operation(collector: MetricsCollector, operation: str) -> Iterator[None]:
    """Time the body and record it under ``operation``."""
    collector.start_timer(operation)
    try:
        yield
    finally:
        collector.record(operation, collector.end_timer(operation))


@dataclass
class RunMetadata:
    """Reproducibility metadata for a run."""

    seed: Optional[int] = None
    config_snapshot: Dict[str, Any] = field(default_factory=dict)
    timestamp: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "config_snapshot": self.config_snapshot,
            "timestamp": self.timestamp,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def create_run_metadata(
    seed: Optional[int] = None,
    config: Optional[Dict[str, Any]] = None,
) -> RunMetadata:
    """Create run metadata with timestamp."""
    from datetime import datetime, timezone

    return RunMetadata(
        seed=seed,
        config_snapshot=config or {},
        timestamp=datetime.now(timezone.utc).isoformat(),
    )

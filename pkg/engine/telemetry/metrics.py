import threading
from enum import Enum
from typing import Dict

import structlog

logger = structlog.get_logger()


class MetricKey(str, Enum):
    RUNS_TOTAL = "metrics:runs:total"
    RUNS_FAILED = "metrics:runs:failed"
    STEPS_TAKEN = "metrics:steps:taken"
    STEPS_REJECTED = "metrics:steps:rejected"
    DT_HALVINGS = "metrics:steps:dt_halvings"
    SAMPLES = "metrics:diagnostics:samples"
    SOLVER_ITERATIONS = "metrics:ground:iterations"
    SOLVER_RESTARTS = "metrics:ground:restarts"


class MetricsService:
    """
    Process-local counters.
    Sweep workers each keep their own; nothing here reaches result files.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counters: Dict[MetricKey, int] = {k: 0 for k in MetricKey}

    def increment(self, key: MetricKey, amount: int = 1) -> None:
        """Increment a specific metric counter."""
        with self._lock:
            self._counters[key] += amount

    def reset(self) -> None:
        with self._lock:
            for k in self._counters:
                self._counters[k] = 0

    def get_snapshot(self) -> Dict[str, int]:
        """Counter values keyed by their short names."""
        with self._lock:
            return {k.value.replace("metrics:", ""): v for k, v in self._counters.items()}

    def log_snapshot(self) -> None:
        logger.info("metrics.snapshot", **self.get_snapshot())


metrics = MetricsService()

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from utils.logger import log


@dataclass
class SolveReport:
    """
    Per-solve bookkeeping shared by every method: status, iteration counters,
    per-iteration history, add/drop style events and timing.
    """
    method: str
    status: str = 'running'
    iterations: int = 0
    counters: Dict[str, int] = field(default_factory=dict)
    history: List[dict] = field(default_factory=list)
    events: List[str] = field(default_factory=list)
    objective: Optional[float] = None
    kkt_residual: Optional[float] = None
    wall_seconds: float = 0.0
    _started: float = field(default_factory=time.perf_counter, repr=False)

    def record(self, **values):
        """Appends one iteration's values and logs them at trace level."""
        self.history.append(values)
        shown = ", ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}" for k, v in values.items())
        log.debug(f"[{self.method}] {shown}")

    def event(self, message: str):
        self.events.append(message)
        log.debug(f"[{self.method}] {message}")

    def bump(self, counter: str, amount: int = 1):
        self.counters[counter] = self.counters.get(counter, 0) + amount

    def count(self, counter: str) -> int:
        return self.counters.get(counter, 0)

    def finish(self, status: str, objective: float = None, kkt_residual: float = None) -> 'SolveReport':
        self.status = status
        self.objective = objective
        self.kkt_residual = kkt_residual
        self.wall_seconds = time.perf_counter() - self._started
        level = log.info if status == 'converged' else log.warning
        residual = 'n/a' if kkt_residual is None else f"{kkt_residual:.3e}"
        level(f"[{self.method}] {status} after {self.iterations} iterations "
              f"({self.wall_seconds:.3f}s, residual={residual})")
        return self

    @property
    def converged(self) -> bool:
        return self.status == 'converged'

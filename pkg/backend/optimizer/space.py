"""Box-bounded search spaces and batch objective evaluation."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]

# narrower boxes are treated as degenerate
MIN_WIDTH = 1e-9


@dataclass(frozen=True)
class SearchSpace:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper bounds differ in length")
        if not self.lower:
            raise ValueError("search space needs at least one dimension")
        for d, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"bounds of dimension {d} must be finite")
            if not hi - lo > MIN_WIDTH * max(1.0, abs(lo), abs(hi)):
                raise ValueError(f"dimension {d} needs lower < upper, got [{lo}, {hi}]")

    @classmethod
    def from_bounds(cls, bounds: Sequence[Tuple[float, float]]) -> "SearchSpace":
        return cls(tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def low(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def high(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.high - self.low

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.low, self.high)

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.low) and np.all(x <= self.high))


def _safe_value(objective: Objective, x: np.ndarray) -> float:
    try:
        value = float(objective(x.copy()))
    except Exception as e:
        logger.warning("Objective failed at %s: %s; scored as worst value", x.tolist(), e)
        return math.inf
    if math.isnan(value):
        logger.warning("Objective returned NaN at %s; scored as worst value", x.tolist())
        return math.inf
    return value


def evaluate_batch(objective: Objective, positions: np.ndarray, workers: int = 1) -> List[float]:
    """Evaluate every row of `positions`, in order.

    Failures and NaN are scored as +inf so a bad point never aborts a step.
    """
    rows = [np.array(row, dtype=float) for row in positions]
    if workers > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda row: _safe_value(objective, row), rows))
    return [_safe_value(objective, row) for row in rows]

"""Extrapolated-baseline reward."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import RejectedInput


@dataclass
class ErrorHistory:
    """Ordering error per validation event (time point), per task.

    Episode t is bracketed by time points 2t (state) and 2t+1 (reward), so
    the baseline for the reward extrapolates from the two validations that
    immediately precede it.
    """

    task: str = "spatial"
    entries: list[tuple[int, float]] = field(default_factory=list)

    def record(self, t: int, error: float):
        if self.entries and t <= self.entries[-1][0]:
            raise RejectedInput(f"time points must increase: {t} after {self.entries[-1][0]}")
        self.entries.append((t, float(error)))

    def get(self, t: int):
        for tt, e in self.entries:
            if tt == t:
                return e
        return None

    def __len__(self):
        return len(self.entries)


def clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def extrapolate(error_prev, error_now: float) -> float:
    """``2 E_t - E_{t-1}`` clamped to [0, 1]; zero-order hold without a previous point."""
    if error_prev is None:
        return clamp01(error_now)
    return clamp01(2.0 * error_now - error_prev)


def baseline_error(history: ErrorHistory, t: int) -> float:
    if not history.entries:
        raise RejectedInput("baseline needs at least one recorded error")
    now = history.get(t)
    if now is None:
        raise RejectedInput(f"no error recorded at time point {t}")
    return extrapolate(history.get(t - 1), now)


def compute_reward(baseline: float, error_next: float) -> float:
    return baseline - error_next

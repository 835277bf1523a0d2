"""Active-set maintenance: stall detection, retirement, and replacement.

An environment is retired when the least-squares slope of its recent
difficulty trajectory is nonpositive, when accuracy has been zero for
``k_zero`` consecutive steps (unlearnable), or when difficulty has sat at the
ladder top for ``k_sat`` consecutive steps (saturated).  Retired environments
return to the pool and a uniformly drawn replacement takes their slot.
"""

from __future__ import annotations

import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DegenerateWindow, EmptyPool

log = logging.getLogger(__name__)

CAUSE_UNLEARNABLE = "unlearnable"
CAUSE_SATURATED = "saturated"
CAUSE_NONPOSITIVE_SLOPE = "nonpositive_slope"
RETIREMENT_CAUSES = (CAUSE_UNLEARNABLE, CAUSE_SATURATED, CAUSE_NONPOSITIVE_SLOPE)


def fit_slope(window: Sequence[tuple[int, float]]) -> float:
    """Ordinary least-squares slope of difficulty against step index."""
    if len(window) < 2:
        raise DegenerateWindow(f"need at least 2 points, got {len(window)}")
    steps = [float(s) for s, _ in window]
    values = [float(v) for _, v in window]
    mean_step = sum(steps) / len(steps)
    mean_value = sum(values) / len(values)
    denom = sum((s - mean_step) ** 2 for s in steps)
    if denom == 0.0:
        raise DegenerateWindow("all step indices are equal")
    numer = sum((s - mean_step) * (v - mean_value) for s, v in zip(steps, values))
    return numer / denom


@dataclass
class EnvTracker:
    """Sliding difficulty window plus consecutive-event counters for one env."""

    d_window: deque[tuple[int, float]]
    zero_acc_run: int = 0
    at_max_run: int = 0

    @classmethod
    def fresh(cls, k_slope: int) -> "EnvTracker":
        return cls(d_window=deque(maxlen=k_slope))

    def observe(self, step: int, d_after: float, acc: float, at_max: bool) -> None:
        self.d_window.append((step, d_after))
        self.zero_acc_run = self.zero_acc_run + 1 if acc == 0.0 else 0
        self.at_max_run = self.at_max_run + 1 if at_max else 0


def check_retirement(
    tracker: EnvTracker,
    *,
    k_slope: int,
    k_zero: int,
    k_sat: int,
) -> str | None:
    """First matching cause in priority order, or None.

    The slope rule only fires once the window holds k_slope points, giving
    fresh (replacement) environments a warm-up grace; the counters fire
    independently of that.
    """
    if tracker.zero_acc_run >= k_zero:
        return CAUSE_UNLEARNABLE
    if tracker.at_max_run >= k_sat:
        return CAUSE_SATURATED
    if len(tracker.d_window) >= k_slope:
        if fit_slope(list(tracker.d_window)) <= 0.0:
            return CAUSE_NONPOSITIVE_SLOPE
    return None


@dataclass(frozen=True)
class RetirementEvent:
    step: int
    env_id: str
    cause: str
    slope: float | None
    replacement_id: str


@dataclass
class ActiveSet:
    """The M environments currently trained, plus pool and retirement history."""

    active: list[str]
    pool: list[str]
    k_slope: int = 10
    k_zero: int = 5
    k_sat: int = 5
    retired_log: list[RetirementEvent] = field(default_factory=list)
    trackers: dict[str, EnvTracker] = field(default_factory=dict)

    def __post_init__(self) -> None:
        overlap = set(self.active) & set(self.pool)
        if overlap:
            raise ValueError(f"environments both active and pooled: {sorted(overlap)}")
        if len(set(self.active)) != len(self.active):
            raise ValueError("duplicate ids in active set")
        for env_id in self.active:
            self.trackers.setdefault(env_id, EnvTracker.fresh(self.k_slope))

    @classmethod
    def draw(
        cls,
        universe: Iterable[str],
        size: int,
        rng: random.Random,
        *,
        k_slope: int = 10,
        k_zero: int = 5,
        k_sat: int = 5,
    ) -> "ActiveSet":
        ids = list(universe)
        if size > len(ids):
            raise ValueError(f"active size {size} exceeds universe of {len(ids)}")
        active = rng.sample(ids, size)
        pool = [e for e in ids if e not in active]
        return cls(active=active, pool=pool, k_slope=k_slope, k_zero=k_zero, k_sat=k_sat)

    @property
    def size(self) -> int:
        return len(self.active)

    def members(self) -> list[str]:
        return list(self.active) + list(self.pool)

    def observe(self, env_id: str, step: int, d_after: float, acc: float, at_max: bool) -> None:
        self.trackers[env_id].observe(step, d_after, acc, at_max)

    def check(self, env_id: str) -> str | None:
        return check_retirement(
            self.trackers[env_id],
            k_slope=self.k_slope,
            k_zero=self.k_zero,
            k_sat=self.k_sat,
        )

    def retire_and_replace(
        self, env_id: str, cause: str, step: int, rng: random.Random
    ) -> RetirementEvent:
        """Move ``env_id`` to the pool and install a uniform replacement.

        The retiree is excluded from its own replacement draw (it may be
        redrawn on later retirements).  Raises EmptyPool, leaving the set
        unchanged, when no other environment is available.
        """
        if env_id not in self.active:
            raise ValueError(f"{env_id!r} is not active")
        if cause not in RETIREMENT_CAUSES:
            raise ValueError(f"unknown retirement cause {cause!r}")
        candidates = [e for e in self.pool if e != env_id]
        if not candidates:
            raise EmptyPool(
                f"no replacement available for {env_id!r}; retirement skipped"
            )
        slope: float | None = None
        if cause == CAUSE_NONPOSITIVE_SLOPE:
            slope = fit_slope(list(self.trackers[env_id].d_window))
        replacement = rng.choice(candidates)
        self.pool.remove(replacement)
        self.pool.append(env_id)
        self.active[self.active.index(env_id)] = replacement
        self.trackers.pop(env_id, None)
        self.trackers[replacement] = EnvTracker.fresh(self.k_slope)
        event = RetirementEvent(
            step=step,
            env_id=env_id,
            cause=cause,
            slope=slope,
            replacement_id=replacement,
        )
        self.retired_log.append(event)
        return event

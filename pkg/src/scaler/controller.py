"""Per-environment difficulty control.

The continuous score ``d`` follows the feedback rule
``d' = clip(d + beta * (acc - tau), 0, D)`` and is converted into an integer
level multiset whose mean tracks ``d`` to within half an instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .envpack import EnvironmentManifest
from .errors import AccuracyOutOfRange, ScoreOutOfRange
from .sandbox import (
    DEFAULT_KILL_GRACE_MS,
    TestInstance,
    map_jobs,
    materialize_instance,
)
from .seeding import derive_seed

HISTORY_WINDOW = 256


@dataclass(frozen=True)
class ControllerState:
    """Difficulty state for one environment.

    ``max_level`` is the top ladder level D; histories hold the most recent
    (step, value) pairs inside a bounded window.
    """

    d: float
    tau: float
    beta: float
    max_level: int
    acc_history: tuple[tuple[int, float], ...] = ()
    d_history: tuple[tuple[int, float], ...] = ()
    history_window: int = field(default=HISTORY_WINDOW, compare=False)

    def __post_init__(self) -> None:
        if self.max_level < 1:
            raise ValueError(f"max_level must be >= 1, got {self.max_level}")
        if not 0.0 <= self.d <= self.max_level:
            raise ScoreOutOfRange(
                f"difficulty {self.d} outside [0, {self.max_level}]"
            )
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.beta <= 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def last_step(self) -> int:
        return self.d_history[-1][0] if self.d_history else 0


def fresh_state(
    tau: float, beta: float, max_level: int, *, d0: float = 0.0
) -> ControllerState:
    return ControllerState(d=d0, tau=tau, beta=beta, max_level=max_level)


def update_difficulty(
    state: ControllerState, acc: float, step: int | None = None
) -> ControllerState:
    """Apply one feedback update and append to both histories."""
    if not 0.0 <= acc <= 1.0:
        raise AccuracyOutOfRange(f"accuracy {acc} outside [0, 1]")
    if step is None:
        step = state.last_step + 1
    new_d = min(max(state.d + state.beta * (acc - state.tau), 0.0), float(state.max_level))
    window = state.history_window
    return replace(
        state,
        d=new_d,
        acc_history=(state.acc_history + ((step, acc),))[-window:],
        d_history=(state.d_history + ((step, new_d),))[-window:],
    )


def level_multiset(d: float, k: int, max_level: int) -> list[int]:
    """Approximate the real score ``d`` by k integer levels.

    With l = floor(d) and h = round(k * (d - l)) (half rounds up), h instances
    land on min(l + 1, max_level) and the rest on l, so the multiset mean is
    within 1/(2k) of d away from the top boundary.
    """
    if k < 1:
        raise ValueError(f"instance count must be >= 1, got {k}")
    if not 0.0 <= d <= max_level:
        raise ScoreOutOfRange(f"difficulty {d} outside [0, {max_level}]")
    low = math.floor(d)
    h = math.floor(k * (d - low) + 0.5)
    high = min(low + 1, max_level)
    return [high] * h + [low] * (k - h)


@dataclass(frozen=True)
class BatchFailure:
    level: int
    seed: int
    error: str


def sample_batch(
    manifest: EnvironmentManifest,
    state: ControllerState,
    k: int,
    base_seed: int,
    *,
    grace_ms: int = DEFAULT_KILL_GRACE_MS,
    workers: int | None = None,
) -> tuple[list[TestInstance], list[BatchFailure]]:
    """Sample k instances at the controller's current level multiset.

    Each instance gets a fresh seed derived from ``base_seed`` and its slot
    index; generation fans out over the sandbox worker pool.  Failures are
    collected per instance rather than aborting the batch, so callers can
    log partial results.
    """
    levels = level_multiset(state.d, k, state.max_level)

    def materialize(level: int, seed: int) -> TestInstance | BatchFailure:
        try:
            return materialize_instance(manifest, level, seed, grace_ms=grace_ms)
        except Exception as exc:  # noqa: BLE001 - verdict-style error capture
            return BatchFailure(level, seed, f"{type(exc).__name__}: {exc}")

    jobs = [(level, derive_seed(base_seed, idx)) for idx, level in enumerate(levels)]
    instances: list[TestInstance] = []
    failures: list[BatchFailure] = []
    for result in map_jobs(materialize, jobs, workers=workers):
        if isinstance(result, BatchFailure):
            failures.append(result)
        else:
            instances.append(result)
    return instances, failures

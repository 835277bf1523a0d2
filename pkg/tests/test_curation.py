from __future__ import annotations

import random

import pytest

from scaler.curation import (
    CAUSE_NONPOSITIVE_SLOPE,
    CAUSE_SATURATED,
    CAUSE_UNLEARNABLE,
    ActiveSet,
    EnvTracker,
    check_retirement,
    fit_slope,
)
from scaler.errors import DegenerateWindow, EmptyPool


def brute_force_slope(window: list[tuple[int, float]]) -> float:
    """Independent least-squares fit via the normal equations."""
    n = len(window)
    sx = sum(s for s, _ in window)
    sy = sum(v for _, v in window)
    sxx = sum(s * s for s, _ in window)
    sxy = sum(s * v for s, v in window)
    return (n * sxy - sx * sy) / (n * sxx - sx * sx)


# -- slope fitting -------------------------------------------------------------


def test_slope_exact_linear_data() -> None:
    window = [(step, float(step - 1)) for step in range(1, 11)]
    assert fit_slope(window) == pytest.approx(1.0, abs=1e-12)


def test_slope_flat_data() -> None:
    window = [(step, 5.0) for step in range(1, 11)]
    assert fit_slope(window) == pytest.approx(0.0, abs=1e-12)


def test_slope_matches_brute_force_on_noisy_window() -> None:
    values = [3.1, 2.9, 3.0, 3.2, 2.8, 3.1, 3.0, 2.9, 3.1, 3.0]
    window = list(enumerate(values, start=1))
    assert fit_slope(window) == pytest.approx(brute_force_slope(window), abs=1e-9)


def test_slope_brute_force_equivalence_randomized() -> None:
    rng = random.Random(7)
    for _ in range(1000):
        start = rng.randint(0, 10_000)
        window = [(start + i, rng.uniform(0, 20)) for i in range(10)]
        assert fit_slope(window) == pytest.approx(brute_force_slope(window), abs=1e-9)


def test_slope_degenerate_window() -> None:
    with pytest.raises(DegenerateWindow):
        fit_slope([(3, 1.0)])
    with pytest.raises(DegenerateWindow):
        fit_slope([(3, 1.0), (3, 2.0)])


# -- retirement rules -------------------------------------------------------------


def _tracker(k_slope: int = 10) -> EnvTracker:
    return EnvTracker.fresh(k_slope)


def test_unlearnable_fires_at_exactly_k_zero() -> None:
    tracker = _tracker()
    for step in range(1, 5):
        tracker.observe(step, 0.0, acc=0.0, at_max=False)
        assert check_retirement(tracker, k_slope=10, k_zero=5, k_sat=5) is None
    tracker.observe(5, 0.0, acc=0.0, at_max=False)
    assert check_retirement(tracker, k_slope=10, k_zero=5, k_sat=5) == CAUSE_UNLEARNABLE


def test_zero_acc_counter_resets_on_signal() -> None:
    tracker = _tracker()
    for step in range(1, 5):
        tracker.observe(step, 0.0, acc=0.0, at_max=False)
    tracker.observe(5, 0.2, acc=0.4, at_max=False)
    for step in range(6, 10):
        tracker.observe(step, 0.0, acc=0.0, at_max=False)
    assert check_retirement(tracker, k_slope=20, k_zero=5, k_sat=5) is None


def test_saturated_fires_at_exactly_k_sat() -> None:
    tracker = _tracker()
    for step in range(1, 5):
        tracker.observe(step, 10.0, acc=0.9, at_max=True)
        assert check_retirement(tracker, k_slope=10, k_zero=5, k_sat=5) is None
    tracker.observe(5, 10.0, acc=0.9, at_max=True)
    assert check_retirement(tracker, k_slope=10, k_zero=5, k_sat=5) == CAUSE_SATURATED


def test_nonpositive_slope_waits_for_full_window() -> None:
    tracker = _tracker(k_slope=10)
    for step in range(1, 10):
        tracker.observe(step, 5.0, acc=0.5, at_max=False)
        assert check_retirement(tracker, k_slope=10, k_zero=99, k_sat=99) is None
    tracker.observe(10, 5.0, acc=0.5, at_max=False)
    assert (
        check_retirement(tracker, k_slope=10, k_zero=99, k_sat=99)
        == CAUSE_NONPOSITIVE_SLOPE
    )


def test_strictly_increasing_difficulty_never_slope_retired() -> None:
    tracker = _tracker(k_slope=10)
    for step in range(1, 40):
        tracker.observe(step, 0.1 * step, acc=0.6, at_max=False)
        assert check_retirement(tracker, k_slope=10, k_zero=5, k_sat=5) is None


def test_rule_priority_unlearnable_then_saturated() -> None:
    tracker = _tracker(k_slope=5)
    for step in range(1, 7):
        tracker.observe(step, 10.0, acc=0.0, at_max=True)
    # all three rules fire; unlearnable wins, then saturated once acc recovers
    assert check_retirement(tracker, k_slope=5, k_zero=5, k_sat=5) == CAUSE_UNLEARNABLE
    tracker.zero_acc_run = 0
    assert check_retirement(tracker, k_slope=5, k_zero=5, k_sat=5) == CAUSE_SATURATED
    tracker.at_max_run = 0
    assert (
        check_retirement(tracker, k_slope=5, k_zero=5, k_sat=5)
        == CAUSE_NONPOSITIVE_SLOPE
    )


# -- active set ----------------------------------------------------------------------


def test_draw_partitions_universe() -> None:
    rng = random.Random(1)
    active_set = ActiveSet.draw([f"e{i}" for i in range(10)], 4, rng)
    assert active_set.size == 4
    assert sorted(active_set.members()) == sorted(f"e{i}" for i in range(10))


def test_retire_and_replace_set_algebra() -> None:
    active_set = ActiveSet(active=["A", "B"], pool=["C"])
    event = active_set.retire_and_replace("A", CAUSE_UNLEARNABLE, step=3, rng=random.Random(0))
    assert sorted(active_set.active) == ["B", "C"]
    assert active_set.pool == ["A"]
    assert event.env_id == "A"
    assert event.replacement_id == "C"
    assert event.cause == CAUSE_UNLEARNABLE
    assert active_set.retired_log == [event]


def test_replacement_never_the_retiree() -> None:
    rng = random.Random(5)
    for _ in range(50):
        active_set = ActiveSet(active=["A", "B"], pool=["C", "D", "E"])
        event = active_set.retire_and_replace("A", CAUSE_SATURATED, step=1, rng=rng)
        assert event.replacement_id != "A"
        assert sorted(active_set.members()) == ["A", "B", "C", "D", "E"]


def test_replacement_gets_fresh_tracker() -> None:
    active_set = ActiveSet(active=["A", "B"], pool=["C"])
    active_set.observe("A", 1, 2.0, 0.5, at_max=False)
    event = active_set.retire_and_replace("A", CAUSE_UNLEARNABLE, step=2, rng=random.Random(0))
    tracker = active_set.trackers[event.replacement_id]
    assert len(tracker.d_window) == 0
    assert tracker.zero_acc_run == 0
    assert tracker.at_max_run == 0
    assert "A" not in active_set.trackers


def test_empty_pool_keeps_environment() -> None:
    active_set = ActiveSet(active=["A"], pool=[])
    with pytest.raises(EmptyPool):
        active_set.retire_and_replace("A", CAUSE_UNLEARNABLE, step=1, rng=random.Random(0))
    assert active_set.active == ["A"]
    assert active_set.pool == []
    assert active_set.retired_log == []


def test_slope_recorded_on_slope_retirements() -> None:
    active_set = ActiveSet(active=["A"], pool=["B"], k_slope=10)
    for step in range(1, 11):
        active_set.observe("A", step, 5.0 - 0.01 * step, acc=0.4, at_max=False)
    cause = active_set.check("A")
    assert cause == CAUSE_NONPOSITIVE_SLOPE
    event = active_set.retire_and_replace("A", cause, step=10, rng=random.Random(0))
    assert event.slope == pytest.approx(-0.01, abs=1e-9)


def test_retired_environment_can_return_later() -> None:
    rng = random.Random(2)
    active_set = ActiveSet(active=["A"], pool=["B"])
    first = active_set.retire_and_replace("A", CAUSE_UNLEARNABLE, step=1, rng=rng)
    assert first.replacement_id == "B"
    second = active_set.retire_and_replace("B", CAUSE_UNLEARNABLE, step=2, rng=rng)
    assert second.replacement_id == "A"

from __future__ import annotations

import random
from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from scaler.controller import (
    ControllerState,
    fresh_state,
    level_multiset,
    sample_batch,
    update_difficulty,
)
from scaler.envpack import load_manifest
from scaler.errors import AccuracyOutOfRange, ScoreOutOfRange


def _state(d: float, *, tau: float = 0.5, beta: float = 1.0, max_level: int = 10) -> ControllerState:
    return ControllerState(d=d, tau=tau, beta=beta, max_level=max_level)


# -- feedback rule -----------------------------------------------------------


def test_update_moves_toward_target() -> None:
    state = update_difficulty(_state(2.0), acc=0.8)
    assert state.d == pytest.approx(2.3)


def test_update_clips_at_zero() -> None:
    state = update_difficulty(_state(0.1), acc=0.0)
    assert state.d == 0.0


def test_update_clips_at_max() -> None:
    state = update_difficulty(_state(9.9), acc=1.0)
    assert state.d == 10.0


def test_update_fixed_point_at_target() -> None:
    state = update_difficulty(_state(4.2), acc=0.5)
    assert state.d == pytest.approx(4.2)


def test_update_rejects_out_of_range_accuracy() -> None:
    with pytest.raises(AccuracyOutOfRange):
        update_difficulty(_state(1.0), acc=1.5)
    with pytest.raises(AccuracyOutOfRange):
        update_difficulty(_state(1.0), acc=-0.1)


def test_update_appends_histories_in_step_order() -> None:
    state = _state(0.0)
    for step, acc in enumerate([0.9, 0.7, 0.2], start=1):
        state = update_difficulty(state, acc, step=step)
    assert [s for s, _ in state.acc_history] == [1, 2, 3]
    assert [s for s, _ in state.d_history] == [1, 2, 3]
    assert state.d_history[-1][1] == state.d


@given(
    st.floats(min_value=0.0, max_value=10.0),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.01, max_value=3.0),
)
def test_update_bounded_step_and_monotone(d: float, acc: float, beta: float) -> None:
    state = ControllerState(d=d, tau=0.5, beta=beta, max_level=10)
    updated = update_difficulty(state, acc)
    assert abs(updated.d - d) <= beta + 1e-12
    lower = update_difficulty(state, max(0.0, acc - 0.25))
    assert updated.d >= lower.d - 1e-12


# -- level multiset -------------------------------------------------------------


def test_multiset_reproduces_worked_example() -> None:
    counts = Counter(level_multiset(2.3, 10, 10))
    assert counts == Counter({3: 3, 2: 7})


def test_multiset_integer_score() -> None:
    assert level_multiset(5.0, 8, 10) == [5] * 8


def test_multiset_top_boundary_clips() -> None:
    assert level_multiset(10.0, 4, 10) == [10] * 4


def test_multiset_rejects_out_of_range() -> None:
    with pytest.raises(ScoreOutOfRange):
        level_multiset(-1.0, 1, 10)
    with pytest.raises(ScoreOutOfRange):
        level_multiset(10.5, 1, 10)
    with pytest.raises(ValueError):
        level_multiset(1.0, 0, 10)


def test_multiset_mean_tracks_score_in_interior() -> None:
    rng = random.Random(42)
    for _ in range(10_000):
        max_level = rng.randint(1, 30)
        d = rng.uniform(0, max(0, max_level - 1))
        k = rng.randint(1, 64)
        levels = level_multiset(d, k, max_level)
        assert len(levels) == k
        assert abs(sum(levels) / k - d) <= 1 / (2 * k) + 1e-9


@given(
    st.floats(min_value=0.0, max_value=29.0),
    st.integers(min_value=1, max_value=64),
)
def test_multiset_levels_adjacent_and_valid(d: float, k: int) -> None:
    max_level = 30
    levels = level_multiset(d, k, max_level)
    assert all(0 <= lv <= max_level for lv in levels)
    assert len(set(levels)) <= 2
    if len(set(levels)) == 2:
        low, high = sorted(set(levels))
        assert high - low == 1


# -- batch sampling ----------------------------------------------------------------


def test_sample_batch_levels_and_ground_truth(sum_package: Path) -> None:
    manifest = load_manifest(sum_package)
    state = fresh_state(0.5, 1.0, manifest.max_level)
    state = ControllerState(d=2.3, tau=0.5, beta=1.0, max_level=manifest.max_level)
    instances, failures = sample_batch(manifest, state, k=10, base_seed=99)
    assert failures == []
    assert Counter(i.level for i in instances) == Counter({3: 3, 2: 7})
    for instance in instances:
        tokens = instance.input_text.decode().split()
        assert instance.ground_truth == str(sum(map(int, tokens[1:])))


def test_sample_batch_distinct_seeds(sum_package: Path) -> None:
    manifest = load_manifest(sum_package)
    state = fresh_state(0.5, 1.0, manifest.max_level)
    instances, _ = sample_batch(manifest, state, k=5, base_seed=1)
    assert len({i.seed for i in instances}) == 5


def test_sample_batch_reports_partial_failures(tmp_path: Path) -> None:
    from conftest import make_sum_package, write_script

    package = make_sum_package(tmp_path / "pkg")
    # crash only on the largest config so some instances survive
    write_script(
        package,
        "generator",
        """\
        import json, random, sys
        obj = json.load(sys.stdin)
        n = int(obj["n"])
        if n >= 2:
            sys.exit(9)
        rng = random.Random(obj.get("seed"))
        print(n)
        print(" ".join(str(rng.randint(1, 9)) for _ in range(n)))
        """,
    )
    manifest = load_manifest(package)
    state = ControllerState(d=0.5, tau=0.5, beta=1.0, max_level=manifest.max_level)
    instances, failures = sample_batch(manifest, state, k=10, base_seed=3)
    assert instances and failures
    assert len(instances) + len(failures) == 10
    assert all("GeneratorCrash" in f.error for f in failures)


def test_sample_batch_rejects_invalid_score(sum_package: Path) -> None:
    manifest = load_manifest(sum_package)
    with pytest.raises(ScoreOutOfRange):
        ControllerState(d=-1.0, tau=0.5, beta=1.0, max_level=manifest.max_level)

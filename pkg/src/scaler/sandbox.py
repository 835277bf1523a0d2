"""Child-process execution under time and size budgets, plus answer judging.

Protocol: a generator receives its scale-parameter configuration (plus the
reserved key ``seed``) as one JSON object on stdin and writes the testcase to
stdout.  An oracle receives a testcase on stdin and writes the answer to
stdout.  Processes are hard-killed at ``time_limit_ms`` and reaped within a
short grace window; partial output from a killed process is discarded.
"""

from __future__ import annotations

import json
import logging
import os
import re
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

_T = TypeVar("_T")

from .envpack import EnvironmentManifest, OutputSpec, config_at_level
from .errors import (
    ConfigOutOfRange,
    EmptyOutput,
    GeneratorCrash,
    GeneratorTimeout,
    InputBudgetExceeded,
    MalformedOutput,
    OracleCrash,
    OracleTimeout,
)

log = logging.getLogger(__name__)

DEFAULT_KILL_GRACE_MS = 100
WORKERS_ENV_VAR = "SCALER_SANDBOX_WORKERS"

OUTCOME_CORRECT = "correct"
OUTCOME_WRONG = "wrong"
OUTCOME_TIMEOUT = "timeout"
OUTCOME_RUNTIME_ERROR = "runtime_error"
OUTCOME_MALFORMED = "malformed_output"

_INT_RE = re.compile(r"^[+-]?[0-9]+$")


def worker_count() -> int:
    """Concurrency for independent sandbox jobs; overridable via env var."""
    override = os.environ.get(WORKERS_ENV_VAR)
    if override:
        try:
            value = int(override)
        except ValueError:
            log.warning("ignoring non-integer %s=%r", WORKERS_ENV_VAR, override)
        else:
            if value >= 1:
                return value
            log.warning("ignoring non-positive %s=%r", WORKERS_ENV_VAR, override)
    return os.cpu_count() or 1


def map_jobs(
    fn: Callable[..., _T], jobs: Iterable[Sequence], workers: int | None = None
) -> list[_T]:
    """Apply ``fn`` to independent argument tuples, preserving input order.

    Jobs here block on child processes, so threads give real overlap;
    results come back in submission order regardless of completion order,
    keeping callers deterministic.
    """
    job_list = list(jobs)
    count = worker_count() if workers is None else max(1, workers)
    if count == 1 or len(job_list) <= 1:
        return [fn(*args) for args in job_list]
    with ThreadPoolExecutor(max_workers=min(count, len(job_list))) as pool:
        return list(pool.map(lambda args: fn(*args), job_list))


@dataclass(frozen=True)
class TestInstance:
    """One concrete sampled problem with its verified ground truth."""

    __test__ = False  # not a pytest case despite the name

    env_id: str
    level: int
    input_text: bytes
    ground_truth: str
    seed: int


@dataclass(frozen=True)
class Verdict:
    outcome: str
    elapsed_ms: int = 0
    detail: str = ""


@dataclass(frozen=True)
class _ChildResult:
    stdout: bytes
    stderr: bytes
    returncode: int
    elapsed_ms: int
    timed_out: bool


def _run_child(
    executable: Path,
    stdin_bytes: bytes,
    time_limit_ms: int,
    grace_ms: int,
) -> _ChildResult:
    executable = Path(executable).absolute()  # survives the cwd switch below
    start = time.perf_counter()
    proc = subprocess.Popen(
        [str(executable)],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        cwd=str(executable.parent),
    )
    try:
        out, err = proc.communicate(stdin_bytes, timeout=time_limit_ms / 1000.0)
        timed_out = False
    except subprocess.TimeoutExpired:
        proc.kill()
        try:
            proc.communicate(timeout=grace_ms / 1000.0)
        except subprocess.TimeoutExpired:  # pragma: no cover - kernel lag
            proc.communicate()
        out, err = b"", b""  # partial output is discarded on timeout
        timed_out = True
    elapsed_ms = int((time.perf_counter() - start) * 1000)
    return _ChildResult(out, err, proc.returncode, elapsed_ms, timed_out)


def _stderr_snippet(result: _ChildResult, limit: int = 400) -> str:
    text = result.stderr.decode("utf-8", errors="replace").strip()
    return text[:limit]


def run_generator(
    manifest: EnvironmentManifest,
    config: dict[str, int],
    seed: int,
    *,
    grace_ms: int = DEFAULT_KILL_GRACE_MS,
) -> bytes:
    """Run the package generator for ``config`` and return its raw stdout."""
    by_name = {p.name: p for p in manifest.scale_params}
    for name, value in config.items():
        param = by_name.get(name)
        if param is None:
            raise ConfigOutOfRange(
                f"{manifest.id}: unknown scale parameter {name!r}"
            )
        if not param.min_value <= value <= param.max_value:
            raise ConfigOutOfRange(
                f"{manifest.id}: {name}={value} outside "
                f"[{param.min_value}, {param.max_value}]"
            )
    payload = json.dumps({**config, "seed": seed}).encode("utf-8")
    result = _run_child(
        manifest.executable(manifest.generator_ref),
        payload,
        manifest.time_limit_ms,
        grace_ms,
    )
    if result.timed_out:
        raise GeneratorTimeout(
            f"{manifest.id}: generator exceeded {manifest.time_limit_ms} ms "
            f"at config {config}"
        )
    if result.returncode != 0:
        raise GeneratorCrash(
            f"{manifest.id}: generator exited {result.returncode} at config "
            f"{config}: {_stderr_snippet(result)}"
        )
    if not result.stdout.strip():
        raise EmptyOutput(f"{manifest.id}: generator produced no output at {config}")
    return result.stdout


def run_oracle(
    oracle: Path,
    input_text: bytes,
    time_limit_ms: int,
    *,
    grace_ms: int = DEFAULT_KILL_GRACE_MS,
) -> tuple[str, int]:
    """Run a reference solution; returns (whitespace-normalized stdout, elapsed ms)."""
    if not input_text:
        raise ValueError("oracle input must be nonempty")
    result = _run_child(Path(oracle), input_text, time_limit_ms, grace_ms)
    if result.timed_out:
        raise OracleTimeout(f"{oracle}: exceeded {time_limit_ms} ms")
    if result.returncode != 0:
        raise OracleCrash(
            f"{oracle}: exited {result.returncode}: {_stderr_snippet(result)}"
        )
    return normalize_whitespace(result.stdout.decode("utf-8", errors="replace")), (
        result.elapsed_ms
    )


def normalize_whitespace(text: str) -> str:
    """Strip ends and collapse internal whitespace runs to single spaces."""
    return " ".join(text.split())


def _canonical_int(token: str) -> str:
    if not _INT_RE.match(token):
        raise MalformedOutput(f"token {token!r} is not an integer")
    return str(int(token))


def normalize(raw: bytes | str, spec: OutputSpec) -> str:
    """Canonicalize raw output under the output spec.

    Numbers must be single integers (reprinted without sign quirks or leading
    zeros); arrays are integer tokens joined by single spaces; strings keep
    their text after whitespace collapse.  Floating point is rejected: all
    accepted environments have exact integer-token answers.
    """
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedOutput(f"output is not valid UTF-8: {exc}") from exc
    else:
        text = raw
    collapsed = normalize_whitespace(text)
    if spec.output_type == "string":
        return collapsed
    tokens = collapsed.split(" ") if collapsed else []
    if spec.output_type == "number":
        if len(tokens) != 1:
            raise MalformedOutput(
                f"number output must be a single token, got {len(tokens)}"
            )
        return _canonical_int(tokens[0])
    if spec.output_type == "array":
        return " ".join(_canonical_int(t) for t in tokens)
    raise MalformedOutput(f"unknown output type {spec.output_type!r}")


def judge(candidate: bytes | str, instance: TestInstance, spec: OutputSpec) -> Verdict:
    """Compare a candidate answer against the instance ground truth.

    Pure in (normalize(candidate), ground_truth): malformed candidates are
    never correct.
    """
    try:
        normalized = normalize(candidate, spec)
    except MalformedOutput as exc:
        return Verdict(OUTCOME_MALFORMED, 0, str(exc))
    if normalized == instance.ground_truth:
        return Verdict(OUTCOME_CORRECT, 0)
    return Verdict(OUTCOME_WRONG, 0)


def materialize_instance(
    manifest: EnvironmentManifest,
    level: int,
    seed: int,
    *,
    grace_ms: int = DEFAULT_KILL_GRACE_MS,
) -> TestInstance:
    """Generate one instance at ``level`` and compute its ground truth via oracle 0."""
    config = config_at_level(manifest, level)
    input_text = run_generator(manifest, config, seed, grace_ms=grace_ms)
    if len(input_text) > manifest.input_byte_budget:
        raise InputBudgetExceeded(
            f"{manifest.id}: input of {len(input_text)} bytes exceeds budget "
            f"{manifest.input_byte_budget} at level {level}"
        )
    raw, _elapsed = run_oracle(
        manifest.executable(manifest.oracle_refs[0]),
        input_text,
        manifest.time_limit_ms,
        grace_ms=grace_ms,
    )
    ground_truth = normalize(raw, manifest.output_spec)
    return TestInstance(
        env_id=manifest.id,
        level=level,
        input_text=input_text,
        ground_truth=ground_truth,
        seed=seed,
    )

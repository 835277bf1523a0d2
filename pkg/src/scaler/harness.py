"""The adaptive multi-environment training loop.

Each step samples instances from every active environment at its controller's
level multiset, collects policy answers, judges them, updates the controller
from the measured accuracy, lets the policy learn, and then runs the curation
rules.  Runs are logged as JSONL (one header line, then one record per step)
and are bit-reproducible from the master seed for deterministic policies.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence, runtime_checkable

from .controller import ControllerState, fresh_state, level_multiset, update_difficulty
from .curation import ActiveSet, RetirementEvent
from .envpack import EnvironmentManifest, OutputSpec, load_manifest, package_fingerprint
from .errors import EmptyPool, EmptyWindow, EnvironmentDrift, SeedMismatch
from .sandbox import (
    DEFAULT_KILL_GRACE_MS,
    OUTCOME_CORRECT,
    TestInstance,
    Verdict,
    judge,
    map_jobs,
    materialize_instance,
)
from .seeding import derive_seed

log = logging.getLogger(__name__)

LOG_FORMAT_VERSION = 1


# -- environment sources -----------------------------------------------------


@runtime_checkable
class EnvironmentSource(Protocol):
    """Anything the harness can draw difficulty-tagged instances from."""

    env_id: str

    @property
    def max_level(self) -> int: ...

    @property
    def output_spec(self) -> OutputSpec: ...

    def sample(self, level: int, seed: int) -> TestInstance: ...

    def fingerprint(self) -> str: ...


class PackagedEnvironment:
    """Environment backed by an on-disk package (subprocess generator/oracles)."""

    def __init__(self, manifest: EnvironmentManifest, *, grace_ms: int = DEFAULT_KILL_GRACE_MS):
        self.manifest = manifest
        self.env_id = manifest.id
        self.grace_ms = grace_ms

    @property
    def max_level(self) -> int:
        return self.manifest.max_level

    @property
    def output_spec(self) -> OutputSpec:
        return self.manifest.output_spec

    def sample(self, level: int, seed: int) -> TestInstance:
        return materialize_instance(self.manifest, level, seed, grace_ms=self.grace_ms)

    def fingerprint(self) -> str:
        return package_fingerprint(self.manifest)


class SyntheticEnvironment:
    """In-process environment for desk-scale simulation.

    Instances carry a deterministic pseudo-answer derived from (level, seed);
    no subprocess is involved, so thousand-step runs finish in milliseconds.
    """

    _spec = OutputSpec(output_type="number", uniqueness=True)

    def __init__(self, env_id: str, max_level: int = 10, answer_space: int = 101):
        if max_level < 1:
            raise ValueError("max_level must be >= 1")
        self.env_id = env_id
        self._max_level = max_level
        self.answer_space = answer_space

    @property
    def max_level(self) -> int:
        return self._max_level

    @property
    def output_spec(self) -> OutputSpec:
        return self._spec

    def sample(self, level: int, seed: int) -> TestInstance:
        answer = derive_seed(self.env_id, level, seed) % self.answer_space
        return TestInstance(
            env_id=self.env_id,
            level=level,
            input_text=f"{self.env_id} level={level} seed={seed}\n".encode(),
            ground_truth=str(answer),
            seed=seed,
        )

    def fingerprint(self) -> str:
        descriptor = f"synthetic|{self.env_id}|{self._max_level}|{self.answer_space}"
        return hashlib.sha256(descriptor.encode()).hexdigest()


def load_universe(path: str | Path, *, level_cap: int = 64) -> list[PackagedEnvironment]:
    """Load every package directory under ``path`` (sorted for determinism)."""
    root = Path(path)
    envs = []
    for entry in sorted(p for p in root.iterdir() if p.is_dir()):
        if (entry / "manifest.json").is_file():
            envs.append(PackagedEnvironment(load_manifest(entry, level_cap=level_cap)))
    return envs


def synthetic_universe(count: int, max_level: int = 10) -> list[SyntheticEnvironment]:
    return [SyntheticEnvironment(f"synth-{i:03d}", max_level) for i in range(count)]


# -- policies --------------------------------------------------------------------


@runtime_checkable
class PolicyInterface(Protocol):
    """Behavioral contract: n_resp candidate answers for any instance.

    Policies may additionally expose ``learn(batches)`` to update internal
    state once per step from the judged rollouts.
    """

    def answer(self, instance: TestInstance, n_resp: int) -> list[str]: ...


@dataclass
class EnvRollout:
    """Judged rollouts for one environment within one step."""

    env_id: str
    instances: list[TestInstance]
    candidates: list[list[str]]
    verdicts: list[list[Verdict]]
    correct: int
    denom: int

    @property
    def accuracy(self) -> float | None:
        return self.correct / self.denom if self.denom else None


def _wrong_answer(ground_truth: str) -> str:
    try:
        return str(int(ground_truth) + 1)
    except ValueError:
        return ground_truth + " x" if ground_truth else "x"


class SkillModelPolicy:
    """Synthetic agent whose success probability is logistic in (skill - level).

    Per-response draws are seeded from (policy seed, env, instance seed,
    response index), so answers are reproducible regardless of call order.
    ``learn`` raises skill by ``learn_rate`` on every step whose pooled batch
    accuracy lies strictly inside (0, 1) — steps with an effective signal.
    """

    def __init__(
        self,
        skill: float = 0.0,
        width: float = 1.0,
        learn_rate: float = 0.0,
        seed: int = 0,
    ) -> None:
        if width <= 0:
            raise ValueError("width must be positive")
        if learn_rate < 0:
            raise ValueError("learn_rate must be >= 0")
        self.skill = skill
        self.width = width
        self.learn_rate = learn_rate
        self.seed = seed

    def success_probability(self, level: int) -> float:
        return 1.0 / (1.0 + math.exp(-(self.skill - level) / self.width))

    def answer(self, instance: TestInstance, n_resp: int) -> list[str]:
        p = self.success_probability(instance.level)
        answers = []
        for i in range(n_resp):
            rng = random.Random(derive_seed(self.seed, instance.env_id, instance.seed, i))
            if rng.random() < p:
                answers.append(instance.ground_truth)
            else:
                answers.append(_wrong_answer(instance.ground_truth))
        return answers

    def learn(self, batches: Sequence[EnvRollout]) -> None:
        correct = sum(b.correct for b in batches)
        denom = sum(b.denom for b in batches)
        if denom and 0 < correct < denom:
            self.skill += self.learn_rate

    def params(self) -> dict[str, float]:
        return {
            "skill": self.skill,
            "width": self.width,
            "learn_rate": self.learn_rate,
        }


class EndpointPolicy:
    """Rollouts through an external completion endpoint (optional adapter)."""

    def __init__(self, client: Any, *, prompt_prefix: str = "") -> None:
        self.client = client
        self.prompt_prefix = prompt_prefix

    def answer(self, instance: TestInstance, n_resp: int) -> list[str]:
        prompt = self.prompt_prefix + instance.input_text.decode("utf-8", errors="replace")
        answers = self.client.complete([{"role": "user", "content": prompt}], n=n_resp)
        answers = list(answers)[:n_resp]
        while len(answers) < n_resp:
            answers.append("")
        return answers


# -- run configuration and records ---------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    active_size: int = 64
    instances_per_env: int = 5
    responses_per_instance: int = 8
    tau: float = 0.5
    beta: float = 1.0
    k_slope: int = 10
    k_zero: int = 5
    k_sat: int = 5
    max_steps: int = 100
    master_seed: int = 0
    fixed_level: int | None = None
    policy_name: str = "skill"
    policy_params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("active_size", "instances_per_env", "responses_per_instance",
                     "k_slope", "k_zero", "k_sat", "max_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class EnvStepEntry:
    env_id: str
    levels: list[int]
    d_before: float
    d_after: float
    accuracy: float | None
    effective: bool
    failures: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class RunRecord:
    step: int
    entries: list[EnvStepEntry]
    retirements: list[RetirementEvent]
    wall_ms: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "envs": [e.to_dict() for e in self.entries],
            "retirements": [asdict(r) for r in self.retirements],
            "wall_ms": self.wall_ms,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunRecord":
        return cls(
            step=data["step"],
            entries=[EnvStepEntry(**e) for e in data["envs"]],
            retirements=[RetirementEvent(**r) for r in data["retirements"]],
            wall_ms=data["wall_ms"],
        )


def _dump_line(data: dict[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


@dataclass
class RunLog:
    config: RunConfig
    env_fingerprints: dict[str, str]
    records: list[RunRecord] = field(default_factory=list)

    def header_dict(self) -> dict[str, Any]:
        return {
            "record": "header",
            "format_version": LOG_FORMAT_VERSION,
            "master_seed": self.config.master_seed,
            "config": self.config.to_dict(),
            "environments": dict(sorted(self.env_fingerprints.items())),
        }

    def lines(self) -> Iterable[str]:
        yield _dump_line(self.header_dict())
        for record in self.records:
            yield _dump_line(record.to_dict())

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")

    def canonical_bytes(self) -> bytes:
        """Serialized log with volatile timing removed.

        Wall-clock durations are recorded for observability but are inherently
        nondeterministic, so replay equality is defined over this projection.
        """
        lines = [_dump_line(self.header_dict())]
        for record in self.records:
            data = record.to_dict()
            data.pop("wall_ms", None)
            lines.append(_dump_line(data))
        return ("\n".join(lines) + "\n").encode("utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "RunLog":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise SeedMismatch(f"{path}: empty run log")
        header = json.loads(lines[0])
        if header.get("record") != "header" or "master_seed" not in header:
            raise SeedMismatch(f"{path}: header line lacks the master seed")
        config = RunConfig.from_dict(header["config"])
        records = [RunRecord.from_dict(json.loads(line)) for line in lines[1:] if line]
        return cls(
            config=config,
            env_fingerprints=dict(header.get("environments", {})),
            records=records,
        )


# -- the training loop ------------------------------------------------------------------


def _exactly_n(answers: Sequence[str], n_resp: int) -> list[str]:
    # the policy contract promises exactly n_resp strings; enforce it anyway
    padded = list(answers)[:n_resp]
    padded.extend([""] * (n_resp - len(padded)))
    return padded


def build_policy(cfg: RunConfig, *, endpoint_client: Any = None) -> PolicyInterface:
    if cfg.policy_name == "skill":
        params = dict(cfg.policy_params)
        return SkillModelPolicy(
            skill=float(params.get("skill", 0.0)),
            width=float(params.get("width", 1.0)),
            learn_rate=float(params.get("learn_rate", 0.0)),
            seed=derive_seed(cfg.master_seed, "policy"),
        )
    if cfg.policy_name == "endpoint":
        if endpoint_client is None:
            from .errors import EndpointUnavailable

            raise EndpointUnavailable("endpoint policy requires a configured client")
        return EndpointPolicy(endpoint_client)
    raise ValueError(f"unknown policy {cfg.policy_name!r}")


def run_training(
    universe: Sequence[EnvironmentSource],
    policy: PolicyInterface,
    cfg: RunConfig,
    *,
    step_observer: Callable[[int, list[str], list[str]], None] | None = None,
) -> RunLog:
    """Execute the full training loop and return the run log.

    Order within a step: sample -> rollout -> controller update -> policy
    update -> curation.  Per-instance sandbox failures are excluded from the
    accuracy denominator with a warning; an environment whose whole batch
    failed is left unchanged for that step.
    """
    if len(universe) < cfg.active_size:
        raise ValueError(
            f"universe of {len(universe)} smaller than active size {cfg.active_size}"
        )
    by_id = {env.env_id: env for env in universe}
    if len(by_id) != len(universe):
        raise ValueError("duplicate environment ids in universe")
    if cfg.fixed_level is not None:
        bad = [e.env_id for e in universe if cfg.fixed_level > e.max_level]
        if bad:
            raise ValueError(f"fixed level {cfg.fixed_level} exceeds ladder of {bad}")

    rng_init = random.Random(derive_seed(cfg.master_seed, "init"))
    rng_curation = random.Random(derive_seed(cfg.master_seed, "curation"))
    active_set = ActiveSet.draw(
        [env.env_id for env in universe],
        cfg.active_size,
        rng_init,
        k_slope=cfg.k_slope,
        k_zero=cfg.k_zero,
        k_sat=cfg.k_sat,
    )
    controllers: dict[str, ControllerState] = {
        env_id: fresh_state(cfg.tau, cfg.beta, by_id[env_id].max_level)
        for env_id in active_set.active
    }

    run_log = RunLog(
        config=cfg,
        env_fingerprints={env.env_id: env.fingerprint() for env in universe},
    )
    k, n_resp = cfg.instances_per_env, cfg.responses_per_instance

    for step in range(1, cfg.max_steps + 1):
        step_start = time.perf_counter()
        entries: list[EnvStepEntry] = []
        rollouts: list[EnvRollout] = []

        for env_id in list(active_set.active):
            env = by_id[env_id]
            state = controllers[env_id]
            if cfg.fixed_level is not None:
                levels = [cfg.fixed_level] * k
                d_before = d_after = float(cfg.fixed_level)
            else:
                levels = level_multiset(state.d, k, state.max_level)
                d_before = state.d

            jobs = [
                (level, derive_seed(cfg.master_seed, "inst", step, env_id, idx))
                for idx, level in enumerate(levels)
            ]

            def sample_one(level: int, seed: int) -> TestInstance | Exception:
                try:
                    return env.sample(level, seed)
                except Exception as exc:  # noqa: BLE001 - logged, excluded
                    return exc

            instances: list[TestInstance] = []
            failures = 0
            for (level, _), result in zip(jobs, map_jobs(sample_one, jobs)):
                if isinstance(result, Exception):
                    failures += 1
                    log.warning(
                        "step %d %s: instance at level %d failed (%s); excluded "
                        "from accuracy",
                        step, env_id, level, result,
                    )
                else:
                    instances.append(result)
            candidates = [
                _exactly_n(policy.answer(inst, n_resp), n_resp) for inst in instances
            ]
            verdicts = [
                [judge(ans, inst, env.output_spec) for ans in answers]
                for inst, answers in zip(instances, candidates)
            ]
            correct = sum(
                v.outcome == OUTCOME_CORRECT for per_inst in verdicts for v in per_inst
            )
            denom = len(instances) * n_resp
            accuracy = correct / denom if denom else None

            if cfg.fixed_level is None and accuracy is not None:
                new_state = update_difficulty(state, accuracy, step=step)
                controllers[env_id] = new_state
                d_after = new_state.d
            elif cfg.fixed_level is None:
                d_after = state.d

            rollouts.append(
                EnvRollout(env_id, instances, candidates, verdicts, correct, denom)
            )
            entries.append(
                EnvStepEntry(
                    env_id=env_id,
                    levels=list(levels),
                    d_before=d_before,
                    d_after=d_after,
                    accuracy=accuracy,
                    effective=accuracy is not None and 0.0 < accuracy < 1.0,
                    failures=failures,
                )
            )

        learn = getattr(policy, "learn", None)
        if callable(learn):
            learn(rollouts)

        retirements: list[RetirementEvent] = []
        if cfg.fixed_level is None:
            for entry in entries:
                env_id = entry.env_id
                if entry.accuracy is None:
                    continue
                d_after = entry.d_after
                active_set.observe(
                    env_id,
                    step,
                    d_after,
                    entry.accuracy,
                    at_max=d_after >= by_id[env_id].max_level,
                )
                cause = active_set.check(env_id)
                if cause is None:
                    continue
                try:
                    event = active_set.retire_and_replace(
                        env_id, cause, step, rng_curation
                    )
                except EmptyPool:
                    log.warning(
                        "step %d: cannot retire %s (%s): pool is empty; keeping it",
                        step, env_id, cause,
                    )
                    continue
                retirements.append(event)
                controllers.pop(env_id, None)
                controllers[event.replacement_id] = fresh_state(
                    cfg.tau, cfg.beta, by_id[event.replacement_id].max_level
                )

        run_log.records.append(
            RunRecord(
                step=step,
                entries=entries,
                retirements=retirements,
                wall_ms=(time.perf_counter() - step_start) * 1000.0,
            )
        )
        if step_observer is not None:
            step_observer(step, list(active_set.active), list(active_set.pool))
    return run_log


# -- metrics and replay ---------------------------------------------------------------------


def effective_rate(
    records: Sequence[RunRecord], window: tuple[int, int] | None = None
) -> float:
    """Fraction of (step, env) batches with accuracy strictly inside (0, 1).

    ``window`` is an inclusive (first_step, last_step) range; None means the
    whole log.
    """
    if window is not None:
        first, last = window
        selected = [r for r in records if first <= r.step <= last]
    else:
        selected = list(records)
    total = sum(len(r.entries) for r in selected)
    if total == 0:
        raise EmptyWindow("no env batches in the requested window")
    hits = sum(e.effective for r in selected for e in r.entries)
    return hits / total


def replay(
    log_path: str | Path,
    universe: Sequence[EnvironmentSource],
    *,
    policy_factory: Callable[[RunConfig], PolicyInterface] | None = None,
) -> RunLog:
    """Re-execute a logged run from its recorded seed and configuration.

    Raises EnvironmentDrift when any package fingerprint differs from the one
    recorded at run time, and SeedMismatch when the log lacks a master seed.
    """
    original = RunLog.read(log_path)
    current = {env.env_id: env.fingerprint() for env in universe}
    for env_id, recorded in original.env_fingerprints.items():
        actual = current.get(env_id)
        if actual is None:
            raise EnvironmentDrift(f"environment {env_id!r} missing from universe")
        if actual != recorded:
            raise EnvironmentDrift(
                f"environment {env_id!r} content changed since the run was logged"
            )
    cfg = original.config
    policy = policy_factory(cfg) if policy_factory else build_policy(cfg)
    return run_training(universe, policy, cfg)

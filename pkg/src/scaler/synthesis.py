"""Candidate validation and difficulty calibration.

Three gates stand between a candidate problem and an emitted environment
package: the rule-based meta filter (unique output of a supported type, at
least one scalable parameter), the breadth check (independent oracles agree
across the parameter range), and the deep check (outputs at a fixed
configuration are diverse enough to resist memorization).  Calibration then
binary-searches a single global scale factor for the largest configuration
that fits the byte and time budgets, and discretizes the range into a ladder.
"""

from __future__ import annotations

import json
import logging
import math
import shutil
import stat
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .envpack import (
    DifficultyLadder,
    EnvironmentManifest,
    OutputSpec,
    OUTPUT_TYPES,
    ScaleParameter,
    manifest_from_dict,
    save_manifest,
    validate_manifest,
)
from .errors import (
    AuthoringRejected,
    EndpointUnavailable,
    InfeasibleAtMin,
    InvariantViolation,
    MissingFile,
    OracleTimeout,
    SandboxError,
    SchemaViolation,
)
from .sandbox import (
    DEFAULT_KILL_GRACE_MS,
    map_jobs,
    normalize,
    run_generator,
    run_oracle,
)
from .seeding import derive_seed

log = logging.getLogger(__name__)

RATIO_THRESHOLD = 32.0
DEFAULT_LEVEL_CAP = 24
DEFAULT_BYTE_BUDGET = 12_000
DEFAULT_BREADTH_CONFIGS = 5
DEFAULT_BREADTH_SEEDS = 4
DEFAULT_DEEP_INSTANCES = 16
DEEP_PROBE_FRACTION = 0.4
AUTHOR_ATTEMPTS = 3

META_FILE = "meta.json"
STATEMENT_FILE = "statement.txt"
REPORT_FILE = "validation_report.json"


@dataclass(frozen=True)
class CandidateProblem:
    """A problem plus its extracted metadata, before validation."""

    id: str
    statement: str
    scale_params: tuple[ScaleParameter, ...]
    output_spec: OutputSpec
    oracle_refs: tuple[str, ...]
    generator_ref: str | None
    time_limit_ms: int
    root: Path

    def __post_init__(self) -> None:
        if not self.oracle_refs:
            raise InvariantViolation(f"candidate {self.id!r}: oracle_refs is empty")


def load_candidate(path: str | Path) -> CandidateProblem:
    """Read a candidate directory: statement.txt, meta.json, executables."""
    root = Path(path)
    if not root.is_dir():
        raise MissingFile(f"candidate directory {root} does not exist")
    statement_path = root / STATEMENT_FILE
    meta_path = root / META_FILE
    if not statement_path.is_file():
        raise MissingFile(f"{statement_path} does not exist")
    if not meta_path.is_file():
        raise MissingFile(f"{meta_path} does not exist")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{meta_path}: invalid JSON: {exc}") from exc

    params = tuple(
        ScaleParameter(
            name=str(p["name"]),
            min_value=int(p["min_value"]),
            max_value=int(p["max_value"]),
            description=str(p.get("description", "")),
        )
        for p in meta.get("scale_params", [])
    )
    spec_raw = meta.get("output_spec", {})
    output_spec = OutputSpec(
        output_type=str(spec_raw.get("output_type", "")),
        uniqueness=bool(spec_raw.get("uniqueness", False)),
        requirement_text=str(spec_raw.get("requirement_text", "")),
    )
    oracles = tuple(sorted(p.name for p in root.glob("oracle_*") if p.is_file()))
    generator = "generator" if (root / "generator").is_file() else None
    return CandidateProblem(
        id=root.name,
        statement=statement_path.read_text(encoding="utf-8"),
        scale_params=params,
        output_spec=output_spec,
        oracle_refs=oracles,
        generator_ref=generator,
        time_limit_ms=int(meta.get("time_limit_ms", 10_000)),
        root=root,
    )


# -- rule-based meta filter -----------------------------------------------------


@dataclass(frozen=True)
class FilterReport:
    passed: bool
    reason: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "reason": self.reason}


def meta_filter(
    scale_params: Sequence[ScaleParameter], output_spec: OutputSpec
) -> FilterReport:
    """Reject problems without a unique, typed, scalable reward signal."""
    if not output_spec.uniqueness:
        return FilterReport(False, "non-unique: correct output is not unique")
    if output_spec.output_type not in OUTPUT_TYPES:
        return FilterReport(
            False,
            f"unsupported-type: {output_spec.output_type!r} not in {OUTPUT_TYPES}",
        )
    if not any(p.max_value > p.min_value for p in scale_params):
        return FilterReport(False, "unscalable: no parameter with max_value > min_value")
    return FilterReport(True)


# -- breadth check ---------------------------------------------------------------


@dataclass(frozen=True)
class Disagreement:
    config: dict[str, int]
    seed: int
    outputs: dict[str, str]
    input_excerpt: str


@dataclass
class BreadthReport:
    passed: bool
    configs: list[dict[str, int]] = field(default_factory=list)
    runs: int = 0
    disagreements: list[Disagreement] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    seed_respected: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "configs": self.configs,
            "runs": self.runs,
            "disagreements": [
                {
                    "config": d.config,
                    "seed": d.seed,
                    "outputs": d.outputs,
                    "input_excerpt": d.input_excerpt,
                }
                for d in self.disagreements
            ],
            "errors": self.errors,
            "seed_respected": self.seed_respected,
        }


def spread_configs(
    scale_params: Sequence[ScaleParameter], num_configs: int
) -> list[dict[str, int]]:
    """Configurations at evenly spread global scale factors, min and max included."""
    configs: list[dict[str, int]] = []
    for i in range(num_configs):
        factor = i / (num_configs - 1)
        config = {
            p.name: p.min_value + round(factor * (p.max_value - p.min_value))
            for p in scale_params
        }
        if config not in configs:
            configs.append(config)
    return configs


def _excerpt(data: bytes, limit: int = 2000) -> str:
    text = data.decode("utf-8", errors="replace")
    return text if len(text) <= limit else text[:limit] + "..."


def breadth_check(
    manifest: EnvironmentManifest,
    num_configs: int = DEFAULT_BREADTH_CONFIGS,
    seeds_per_config: int = DEFAULT_BREADTH_SEEDS,
    *,
    base_seed: int = 0,
    grace_ms: int = DEFAULT_KILL_GRACE_MS,
    workers: int | None = None,
) -> BreadthReport:
    """Require every oracle to agree on every generated input.

    Samples ``num_configs`` configurations spread over the declared parameter
    range (always including min and max) with ``seeds_per_config`` fresh seeds
    each.  Any generator failure, oracle failure, or normalized-output
    disagreement fails the check and is recorded with the triggering input.
    The (config, seed, oracle) jobs fan out over the sandbox worker pool; the
    report is assembled in job order, so it does not depend on scheduling.
    """
    if len(manifest.oracle_refs) < 2:
        raise ValueError("breadth check needs at least 2 oracles")
    if num_configs < 3:
        raise ValueError(f"num_configs must be >= 3, got {num_configs}")
    if seeds_per_config < 1:
        raise ValueError(f"seeds_per_config must be >= 1, got {seeds_per_config}")

    report = BreadthReport(passed=True)
    report.configs = spread_configs(manifest.scale_params, num_configs)
    cases = [
        (config, derive_seed(base_seed, "breadth", manifest.id,
                             tuple(sorted(config.items())), s))
        for config in report.configs
        for s in range(seeds_per_config)
    ]

    def run_case(
        config: dict[str, int], seed: int
    ) -> tuple[bytes | None, dict[str, object]]:
        try:
            input_text = run_generator(manifest, config, seed, grace_ms=grace_ms)
        except SandboxError as exc:
            return None, {"generator_error": f"generator at {config} seed {seed}: {exc}"}
        outputs: dict[str, object] = {}
        for ref in manifest.oracle_refs:
            try:
                raw, _ = run_oracle(
                    manifest.executable(ref),
                    input_text,
                    manifest.time_limit_ms,
                    grace_ms=grace_ms,
                )
                outputs[ref] = normalize(raw, manifest.output_spec)
            except Exception as exc:  # noqa: BLE001 - recorded, not raised
                outputs[ref] = exc
        return input_text, outputs

    results = map_jobs(run_case, cases, workers=workers)

    # Replay probe: a generator that ignores its seed loses determinism but
    # is not rejected for it.
    first_config, first_seed = cases[0]
    first_input = results[0][0]
    if first_input is not None:
        try:
            repeat = run_generator(manifest, first_config, first_seed, grace_ms=grace_ms)
        except SandboxError:
            repeat = None
        if repeat != first_input:
            report.seed_respected = False
            log.warning(
                "%s: generator output differs for identical (config, seed); "
                "replays will not be bit-exact",
                manifest.id,
            )

    for (config, seed), (input_text, outputs) in zip(cases, results):
        if input_text is None:
            report.passed = False
            report.errors.append(str(outputs["generator_error"]))
            continue
        report.runs += len(outputs)
        failed = False
        for ref, value in outputs.items():
            if isinstance(value, Exception):
                report.passed = False
                report.errors.append(f"oracle {ref} at {config} seed {seed}: {value}")
                failed = True
        if failed:
            continue
        if len(set(outputs.values())) > 1:
            report.passed = False
            report.disagreements.append(
                Disagreement(
                    config=dict(config),
                    seed=seed,
                    outputs={ref: str(v) for ref, v in outputs.items()},
                    input_excerpt=_excerpt(input_text),
                )
            )
    return report


# -- deep check ------------------------------------------------------------------


@dataclass
class DepthReport:
    passed: bool
    config: dict[str, int]
    num_instances: int
    distinct_outputs: int = 0
    largest_cluster: int = 0
    required_distinct: int = 0
    allowed_largest: int = 0
    clusters: dict[str, int] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    @property
    def largest_cluster_fraction(self) -> float:
        return self.largest_cluster / self.num_instances if self.num_instances else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "config": self.config,
            "num_instances": self.num_instances,
            "distinct_outputs": self.distinct_outputs,
            "largest_cluster": self.largest_cluster,
            "largest_cluster_fraction": self.largest_cluster_fraction,
            "required_distinct": self.required_distinct,
            "allowed_largest": self.allowed_largest,
            "clusters": self.clusters,
            "errors": self.errors,
        }


def deep_check(
    manifest: EnvironmentManifest,
    config: dict[str, int],
    num_instances: int = DEFAULT_DEEP_INSTANCES,
    *,
    base_seed: int = 0,
    grace_ms: int = DEFAULT_KILL_GRACE_MS,
    workers: int | None = None,
) -> DepthReport:
    """Cluster ground truths at one fixed configuration across fresh seeds.

    Passes when at least max(2, ceil(G/4)) distinct outputs appear and the
    largest cluster holds at most ceil(G/2) of the G instances.
    """
    if num_instances < 8:
        raise ValueError(f"num_instances must be >= 8, got {num_instances}")
    required_distinct = max(2, math.ceil(num_instances / 4))
    allowed_largest = math.ceil(num_instances / 2)
    report = DepthReport(
        passed=False,
        config=dict(config),
        num_instances=num_instances,
        required_distinct=required_distinct,
        allowed_largest=allowed_largest,
    )

    def ground_truth(index: int, seed: int) -> str | Exception:
        try:
            input_text = run_generator(manifest, config, seed, grace_ms=grace_ms)
            raw, _ = run_oracle(
                manifest.executable(manifest.oracle_refs[0]),
                input_text,
                manifest.time_limit_ms,
                grace_ms=grace_ms,
            )
            return normalize(raw, manifest.output_spec)
        except Exception as exc:  # noqa: BLE001 - recorded, not raised
            return exc

    seeds = [
        (i, derive_seed(base_seed, "deep", manifest.id, tuple(sorted(config.items())), i))
        for i in range(num_instances)
    ]
    outputs: list[str] = []
    for (i, seed), result in zip(seeds, map_jobs(ground_truth, seeds, workers=workers)):
        if isinstance(result, Exception):
            report.errors.append(f"instance {i} seed {seed}: {result}")
        else:
            outputs.append(result)
    if report.errors:
        return report
    for value in outputs:
        report.clusters[value] = report.clusters.get(value, 0) + 1
    report.distinct_outputs = len(report.clusters)
    report.largest_cluster = max(report.clusters.values())
    report.passed = (
        report.distinct_outputs >= required_distinct
        and report.largest_cluster <= allowed_largest
    )
    return report


def deep_probe_level(max_level: int, fraction: float = DEEP_PROBE_FRACTION) -> int:
    """Default ladder level for the deep check: partway up, never the minimum.

    Minimum configurations frequently admit only one output (n = 0 inputs),
    which says nothing about generator diversity.
    """
    return min(max_level, max(1, round(fraction * max_level)))


# -- calibration -----------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationProbe:
    scale_factor: float
    config: dict[str, int]
    feasible: bool
    input_bytes: int | None
    oracle_elapsed_ms: int | None
    reason: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "scale_factor": self.scale_factor,
            "config": self.config,
            "feasible": self.feasible,
            "input_bytes": self.input_bytes,
            "oracle_elapsed_ms": self.oracle_elapsed_ms,
            "reason": self.reason,
        }


@dataclass
class CalibrationResult:
    s_min: dict[str, int]
    s_max: dict[str, int]
    ladder: DifficultyLadder
    probes: list[CalibrationProbe]

    def to_dict(self) -> dict[str, Any]:
        return {
            "s_min": self.s_min,
            "s_max": self.s_max,
            "ladder": {
                str(i): dict(cfg) for i, cfg in enumerate(self.ladder.levels)
            },
            "probes": [p.to_dict() for p in self.probes],
        }


def _config_at_factor(params: Sequence[ScaleParameter], factor: float) -> dict[str, int]:
    config = {}
    for p in params:
        value = p.min_value + round(factor * (p.max_value - p.min_value))
        config[p.name] = min(max(value, p.min_value), p.max_value)
    return config


def calibrate(
    manifest: EnvironmentManifest,
    byte_budget: int = DEFAULT_BYTE_BUDGET,
    time_limit_ms: int | None = None,
    *,
    level_cap: int = DEFAULT_LEVEL_CAP,
    ratio_threshold: float = RATIO_THRESHOLD,
    base_seed: int = 0,
    grace_ms: int = DEFAULT_KILL_GRACE_MS,
) -> CalibrationResult:
    """Find the largest feasible configuration under the byte and time budgets.

    A single global factor in [0, 1] scales every parameter jointly; the probe
    at a factor is feasible when the generated input fits ``byte_budget`` and
    the first oracle finishes within ``time_limit_ms``.  Binary search runs on
    the integer grid induced by the widest parameter span, so it terminates
    exactly when adjacent integer configurations cannot be distinguished, and
    the infeasible witness one step above ``s_max`` is kept in the probe list.
    """
    params = manifest.scale_params
    if not all(p.max_value > p.min_value for p in params):
        raise ValueError("calibration requires min_value < max_value for every parameter")
    limit = manifest.time_limit_ms if time_limit_ms is None else time_limit_ms
    span = max(p.max_value - p.min_value for p in params)
    probes: list[CalibrationProbe] = []
    feasibility: dict[int, bool] = {}

    def probe(step: int) -> bool:
        if step in feasibility:
            return feasibility[step]
        factor = step / span
        config = _config_at_factor(params, factor)
        seed = derive_seed(base_seed, "calibrate", manifest.id, step)
        input_bytes: int | None = None
        elapsed: int | None = None
        feasible = False
        reason = ""
        try:
            input_text = run_generator(manifest, config, seed, grace_ms=grace_ms)
            input_bytes = len(input_text)
            if input_bytes > byte_budget:
                reason = f"input {input_bytes} bytes > budget {byte_budget}"
            else:
                _, elapsed = run_oracle(
                    manifest.executable(manifest.oracle_refs[0]),
                    input_text,
                    limit,
                    grace_ms=grace_ms,
                )
                feasible = True
        except OracleTimeout:
            reason = f"oracle exceeded {limit} ms"
        except SandboxError as exc:
            reason = f"{type(exc).__name__}: {exc}"
        probes.append(
            CalibrationProbe(factor, config, feasible, input_bytes, elapsed, reason)
        )
        feasibility[step] = feasible
        return feasible

    if not probe(0):
        raise InfeasibleAtMin(
            f"{manifest.id}: minimum configuration violates budgets: "
            f"{probes[-1].reason}"
        )
    s_min = _config_at_factor(params, 0.0)
    if probe(span):
        s_max = _config_at_factor(params, 1.0)
    else:
        lo, hi = 0, span
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if probe(mid):
                lo = mid
            else:
                hi = mid
        s_max = _config_at_factor(params, lo / span)
    ladder = discretize_ladder(
        s_min, s_max, level_cap=level_cap, ratio_threshold=ratio_threshold
    )
    return CalibrationResult(s_min=s_min, s_max=s_max, ladder=ladder, probes=probes)


def discretize_ladder(
    s_min: Mapping[str, int],
    s_max: Mapping[str, int],
    level_cap: int = DEFAULT_LEVEL_CAP,
    ratio_threshold: float = RATIO_THRESHOLD,
) -> DifficultyLadder:
    """Discretize [s_min, s_max] into a ladder of at most ``level_cap`` levels.

    Per parameter the progression is arithmetic when the span ratio is small
    and geometric otherwise; rounded duplicates are bumped up by one where the
    range allows, and level 0 / the top level pin s_min / s_max exactly.
    """
    if level_cap < 2:
        raise ValueError(f"level_cap must be >= 2, got {level_cap}")
    names = list(s_min)
    if set(names) != set(s_max):
        raise ValueError("s_min and s_max must cover the same parameters")
    for name in names:
        if s_max[name] < s_min[name]:
            raise ValueError(f"s_max < s_min for parameter {name!r}")
    span = max(s_max[n] - s_min[n] for n in names)
    num_levels = min(level_cap, span + 1)
    if num_levels < 2:
        # Degenerate single-level range; rejected upstream by the meta filter.
        return DifficultyLadder((dict(s_min),))

    per_param: dict[str, list[int]] = {}
    for name in names:
        lo, hi = s_min[name], s_max[name]
        ratio = max(1, hi) / max(1, lo)
        values: list[int] = []
        if ratio <= ratio_threshold:
            for i in range(num_levels):
                values.append(lo + round(i * (hi - lo) / (num_levels - 1)))
        else:
            log_lo = math.log(max(1, lo))
            log_hi = math.log(max(1, hi))
            for i in range(num_levels):
                values.append(
                    round(math.exp(log_lo + i * (log_hi - log_lo) / (num_levels - 1)))
                )
        values[0], values[-1] = lo, hi
        for i in range(1, num_levels):
            if values[i] <= values[i - 1]:
                values[i] = min(values[i - 1] + 1, hi)
        per_param[name] = values
    levels = tuple(
        {name: per_param[name][i] for name in names} for i in range(num_levels)
    )
    return DifficultyLadder(levels)


# -- generator authoring -----------------------------------------------------------


AUTHORING_INSTRUCTIONS = """\
Write a complete, standalone executable program that generates one random
testcase for the problem below.

Contract:
- The program reads a single JSON object from standard input.  Its keys are
  the scale parameter names listed below, each bound to an integer, plus a
  reserved integer key "seed" that must drive all randomness.
- It writes exactly one testcase to standard output in the problem's original
  input format, honoring the given parameter values.
- It must exit nonzero with a message on a malformed configuration.

Scale parameters: {params}
Output requirement: {requirement}

Problem statement:
{statement}
"""


def author_generator(
    candidate: CandidateProblem,
    client: Any,
    dest_dir: Path,
    *,
    attempts: int = AUTHOR_ATTEMPTS,
    base_seed: int = 0,
    grace_ms: int = DEFAULT_KILL_GRACE_MS,
) -> str:
    """Ask the completion endpoint for a generator and validate it before use.

    Each attempt materializes the returned source as ``generator`` inside
    ``dest_dir`` and smoke-tests it at the minimum and maximum configurations;
    authoring never bypasses the breadth and deep checks that run later.
    """
    from .endpoint import strip_code_fences

    if client is None:
        raise EndpointUnavailable("generator authoring requires a completion endpoint")
    prompt = AUTHORING_INSTRUCTIONS.format(
        params=", ".join(
            f"{p.name} (integer in [{p.min_value}, {p.max_value}]): {p.description}"
            for p in candidate.scale_params
        ),
        requirement=candidate.output_spec.requirement_text or "see statement",
        statement=candidate.statement,
    )
    target = dest_dir / "generator"
    last_error = ""
    for attempt in range(1, attempts + 1):
        source = strip_code_fences(client.complete([{"role": "user", "content": prompt}])[0])
        if not source.startswith("#!"):
            source = "#!/usr/bin/env python3\n" + source
        target.write_text(source + "\n", encoding="utf-8")
        target.chmod(target.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
        try:
            trial = _authoring_manifest(candidate, dest_dir)
            for factor in (0.0, 1.0):
                run_generator(
                    trial,
                    _config_at_factor(candidate.scale_params, factor),
                    derive_seed(base_seed, "author", attempt),
                    grace_ms=grace_ms,
                )
            return "generator"
        except Exception as exc:  # noqa: BLE001 - retried, then rejected
            last_error = f"attempt {attempt}: {type(exc).__name__}: {exc}"
            log.warning("%s: authored generator rejected (%s)", candidate.id, last_error)
    raise AuthoringRejected(
        f"{candidate.id}: {attempts} authoring attempts failed; last error: {last_error}"
    )


def _authoring_manifest(candidate: CandidateProblem, root: Path) -> EnvironmentManifest:
    """Provisional manifest (trivial two-point ladder) used during authoring."""
    ladder = {
        "0": {p.name: p.min_value for p in candidate.scale_params},
        "1": {p.name: p.max_value for p in candidate.scale_params},
    }
    data = {
        "id": candidate.id,
        "statement": candidate.statement,
        "scale_params": [
            {
                "name": p.name,
                "min_value": p.min_value,
                "max_value": p.max_value,
                "description": p.description,
            }
            for p in candidate.scale_params
        ],
        "output_spec": {
            "output_type": candidate.output_spec.output_type,
            "uniqueness": candidate.output_spec.uniqueness,
            "requirement_text": candidate.output_spec.requirement_text,
        },
        "ladder": ladder,
        "generator_ref": "generator",
        "oracle_refs": list(candidate.oracle_refs),
        "time_limit_ms": candidate.time_limit_ms,
        "input_byte_budget": 10**9,
    }
    return manifest_from_dict(data, root=root)


# -- pipeline driver ----------------------------------------------------------------


@dataclass
class ValidationReport:
    filter: FilterReport
    breadth: BreadthReport | None = None
    depth: DepthReport | None = None

    @property
    def passed(self) -> bool:
        return (
            self.filter.passed
            and self.breadth is not None
            and self.breadth.passed
            and self.depth is not None
            and self.depth.passed
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "filter": self.filter.to_dict(),
            "breadth": self.breadth.to_dict() if self.breadth else None,
            "depth": self.depth.to_dict() if self.depth else None,
        }


@dataclass(frozen=True)
class SynthesisOptions:
    byte_budget: int = DEFAULT_BYTE_BUDGET
    level_cap: int = DEFAULT_LEVEL_CAP
    ratio_threshold: float = RATIO_THRESHOLD
    breadth_configs: int = DEFAULT_BREADTH_CONFIGS
    breadth_seeds: int = DEFAULT_BREADTH_SEEDS
    deep_instances: int = DEFAULT_DEEP_INSTANCES
    base_seed: int = 0
    grace_ms: int = DEFAULT_KILL_GRACE_MS
    workers: int | None = None


def validate_package(
    manifest: EnvironmentManifest, options: SynthesisOptions = SynthesisOptions()
) -> ValidationReport:
    """Run all three validation gates against an existing package."""
    report = ValidationReport(
        filter=meta_filter(manifest.scale_params, manifest.output_spec)
    )
    if not report.filter.passed:
        return report
    report.breadth = breadth_check(
        manifest,
        options.breadth_configs,
        options.breadth_seeds,
        base_seed=options.base_seed,
        grace_ms=options.grace_ms,
        workers=options.workers,
    )
    probe_config = manifest.ladder.config_at(deep_probe_level(manifest.max_level))
    report.depth = deep_check(
        manifest,
        probe_config,
        options.deep_instances,
        base_seed=options.base_seed,
        grace_ms=options.grace_ms,
        workers=options.workers,
    )
    return report


def synthesize_candidate(
    candidate: CandidateProblem,
    out_dir: Path,
    options: SynthesisOptions = SynthesisOptions(),
    *,
    endpoint_client: Any = None,
) -> tuple[EnvironmentManifest | None, ValidationReport | FilterReport, str]:
    """Build, calibrate, and validate one candidate into ``out_dir``.

    Returns (manifest-or-None, report, reason).  The package directory is
    only kept when every gate passes.
    """
    filter_report = meta_filter(candidate.scale_params, candidate.output_spec)
    if not filter_report.passed:
        return None, ValidationReport(filter=filter_report), filter_report.reason

    package_dir = out_dir / candidate.id
    package_dir.mkdir(parents=True, exist_ok=True)
    try:
        for ref in candidate.oracle_refs:
            shutil.copy2(candidate.root / ref, package_dir / ref)
            _ensure_executable(package_dir / ref)
        if candidate.generator_ref is not None:
            shutil.copy2(candidate.root / candidate.generator_ref, package_dir / "generator")
            _ensure_executable(package_dir / "generator")
        else:
            author_generator(
                candidate,
                endpoint_client,
                package_dir,
                base_seed=options.base_seed,
                grace_ms=options.grace_ms,
            )

        provisional = _authoring_manifest(candidate, package_dir)
        calibration = calibrate(
            provisional,
            options.byte_budget,
            candidate.time_limit_ms,
            level_cap=options.level_cap,
            ratio_threshold=options.ratio_threshold,
            base_seed=options.base_seed,
            grace_ms=options.grace_ms,
        )
        manifest = build_manifest(candidate, calibration, options.byte_budget, package_dir)
        save_manifest(manifest, package_dir)
        report = validate_package(manifest, options)
        (package_dir / REPORT_FILE).write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        if report.passed:
            return manifest, report, ""
        shutil.rmtree(package_dir, ignore_errors=True)
        return None, report, "validation failed"
    except Exception as exc:
        shutil.rmtree(package_dir, ignore_errors=True)
        return None, ValidationReport(filter=filter_report), f"{type(exc).__name__}: {exc}"


def build_manifest(
    candidate: CandidateProblem,
    calibration: CalibrationResult,
    byte_budget: int,
    root: Path,
) -> EnvironmentManifest:
    """Assemble the final manifest from a candidate and its calibrated ladder.

    Parameter bounds are narrowed to the calibrated range so the ladder
    endpoints satisfy the package invariants.
    """
    params = tuple(
        ScaleParameter(
            name=p.name,
            min_value=calibration.s_min[p.name],
            max_value=calibration.s_max[p.name],
            description=p.description,
        )
        for p in candidate.scale_params
    )
    manifest = EnvironmentManifest(
        id=candidate.id,
        statement=candidate.statement,
        scale_params=params,
        output_spec=candidate.output_spec,
        ladder=calibration.ladder,
        generator_ref="generator",
        oracle_refs=candidate.oracle_refs,
        time_limit_ms=candidate.time_limit_ms,
        input_byte_budget=byte_budget,
        root=root,
    )
    validate_manifest(manifest, level_cap=max(DEFAULT_LEVEL_CAP, len(calibration.ladder.levels)))
    return manifest


def synthesize_candidates(
    candidates_dir: str | Path,
    out_dir: str | Path,
    options: SynthesisOptions = SynthesisOptions(),
    *,
    endpoint_client: Any = None,
) -> dict[str, Any]:
    """Run the pipeline over every candidate subdirectory; returns a summary."""
    candidates_root = Path(candidates_dir)
    if not candidates_root.is_dir():
        raise MissingFile(f"candidates directory {candidates_root} does not exist")
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    reports_dir = out_root / "reports"
    reports_dir.mkdir(exist_ok=True)

    accepted: list[str] = []
    rejected: dict[str, str] = {}
    for entry in sorted(p for p in candidates_root.iterdir() if p.is_dir()):
        try:
            candidate = load_candidate(entry)
        except (MissingFile, SchemaViolation, InvariantViolation) as exc:
            rejected[entry.name] = f"{type(exc).__name__}: {exc}"
            continue
        manifest, report, reason = synthesize_candidate(
            candidate, out_root, options, endpoint_client=endpoint_client
        )
        (reports_dir / f"{candidate.id}.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        if manifest is not None:
            accepted.append(candidate.id)
        else:
            rejected[candidate.id] = reason
    return {"accepted": accepted, "rejected": rejected}


def _ensure_executable(path: Path) -> None:
    mode = path.stat().st_mode
    path.chmod(mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)

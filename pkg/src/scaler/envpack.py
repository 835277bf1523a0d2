"""On-disk environment package format and typed manifests.

A package is a directory holding ``manifest.json`` plus the executables it
references (one generator, at least two oracles) as relative paths.  The
difficulty ladder is serialized as a string-keyed map from level index to
either a bare integer (single scale parameter) or an object mapping every
parameter name to an integer.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import InvariantViolation, LevelOutOfRange, MissingFile, SchemaViolation

MANIFEST_NAME = "manifest.json"
OUTPUT_TYPES = ("number", "array", "string")
DEFAULT_LEVEL_CAP = 24


@dataclass(frozen=True)
class ScaleParameter:
    """An integer constraint variable that modulates instance difficulty."""

    name: str
    min_value: int
    max_value: int
    description: str = ""


@dataclass(frozen=True)
class OutputSpec:
    """Shape of the unique answer an oracle must produce."""

    output_type: str
    uniqueness: bool
    requirement_text: str = ""


@dataclass(frozen=True)
class DifficultyLadder:
    """Ordered map from consecutive integer levels to parameter configurations."""

    levels: tuple[dict[str, int], ...]

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    def config_at(self, level: int) -> dict[str, int]:
        if not 0 <= level <= self.max_level:
            raise LevelOutOfRange(
                f"level {level} outside [0, {self.max_level}]"
            )
        return dict(self.levels[level])


@dataclass(frozen=True)
class EnvironmentManifest:
    id: str
    statement: str
    scale_params: tuple[ScaleParameter, ...]
    output_spec: OutputSpec
    ladder: DifficultyLadder
    generator_ref: str
    oracle_refs: tuple[str, ...]
    time_limit_ms: int
    input_byte_budget: int
    root: Path | None = field(default=None, compare=False)

    @property
    def max_level(self) -> int:
        return self.ladder.max_level

    def executable(self, ref: str) -> Path:
        if self.root is None:
            raise MissingFile(f"manifest {self.id!r} has no package root")
        return self.root / ref


def config_at_level(manifest: EnvironmentManifest, level: int) -> dict[str, int]:
    """Return the exact ladder entry for ``level``."""
    return manifest.ladder.config_at(level)


# -- schema parsing ----------------------------------------------------------


def _expect(obj: Mapping[str, Any], key: str, kind: type, where: str) -> Any:
    if key not in obj:
        raise SchemaViolation(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is int and isinstance(value, bool):
        raise SchemaViolation(f"{where}: field {key!r} must be an integer")
    if not isinstance(value, kind):
        raise SchemaViolation(
            f"{where}: field {key!r} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _parse_scale_param(obj: Any, where: str) -> ScaleParameter:
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{where}: scale parameter entries must be objects")
    name = _expect(obj, "name", str, where)
    min_value = _expect(obj, "min_value", int, where)
    max_value = _expect(obj, "max_value", int, where)
    description = obj.get("description", "")
    if not isinstance(description, str):
        raise SchemaViolation(f"{where}: field 'description' must be str")
    return ScaleParameter(name, min_value, max_value, description)


def _parse_output_spec(obj: Any, where: str) -> OutputSpec:
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{where}: 'output_spec' must be an object")
    output_type = _expect(obj, "output_type", str, where)
    uniqueness = _expect(obj, "uniqueness", bool, where)
    text = obj.get("requirement_text", "")
    if not isinstance(text, str):
        raise SchemaViolation(f"{where}: field 'requirement_text' must be str")
    return OutputSpec(output_type, uniqueness, text)


def _parse_ladder(obj: Any, param_names: Sequence[str], where: str) -> DifficultyLadder:
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{where}: 'ladder' must be a string-keyed map")
    entries: dict[int, dict[str, int]] = {}
    for key, value in obj.items():
        try:
            level = int(key)
        except (TypeError, ValueError):
            raise SchemaViolation(f"{where}: ladder key {key!r} is not an integer")
        if isinstance(value, bool):
            raise SchemaViolation(f"{where}: ladder value for level {level} must be int")
        if isinstance(value, int):
            if len(param_names) != 1:
                raise SchemaViolation(
                    f"{where}: bare-integer ladder entries require exactly one "
                    f"scale parameter, manifest declares {len(param_names)}"
                )
            entries[level] = {param_names[0]: value}
        elif isinstance(value, dict):
            config = {}
            for pname, pval in value.items():
                if isinstance(pval, bool) or not isinstance(pval, int):
                    raise SchemaViolation(
                        f"{where}: ladder level {level} value for {pname!r} must be int"
                    )
                config[str(pname)] = pval
            entries[level] = config
        else:
            raise SchemaViolation(
                f"{where}: ladder level {level} must map to an int or object"
            )
    ordered = [entries[i] for i in sorted(entries)] if entries else []
    if sorted(entries) != list(range(len(entries))):
        raise InvariantViolation(
            f"{where}: ladder levels must be consecutive integers starting at 0, "
            f"got {sorted(entries)}"
        )
    return DifficultyLadder(tuple(ordered))


def manifest_from_dict(
    data: Mapping[str, Any],
    *,
    root: Path | None = None,
    level_cap: int = DEFAULT_LEVEL_CAP,
) -> EnvironmentManifest:
    """Parse and validate a manifest dictionary (see also ``load_manifest``)."""
    where = f"manifest {data.get('id', '?')!r}"
    env_id = _expect(data, "id", str, where)
    statement = _expect(data, "statement", str, where)
    raw_params = _expect(data, "scale_params", list, where)
    params = tuple(_parse_scale_param(p, where) for p in raw_params)
    output_spec = _parse_output_spec(_expect(data, "output_spec", dict, where), where)
    ladder = _parse_ladder(data.get("ladder"), [p.name for p in params], where)
    generator_ref = _expect(data, "generator_ref", str, where)
    raw_oracles = _expect(data, "oracle_refs", list, where)
    if not all(isinstance(o, str) for o in raw_oracles):
        raise SchemaViolation(f"{where}: 'oracle_refs' must be a list of strings")
    manifest = EnvironmentManifest(
        id=env_id,
        statement=statement,
        scale_params=params,
        output_spec=output_spec,
        ladder=ladder,
        generator_ref=generator_ref,
        oracle_refs=tuple(raw_oracles),
        time_limit_ms=_expect(data, "time_limit_ms", int, where),
        input_byte_budget=_expect(data, "input_byte_budget", int, where),
        root=root,
    )
    validate_manifest(manifest, level_cap=level_cap)
    return manifest


def validate_manifest(
    manifest: EnvironmentManifest, *, level_cap: int = DEFAULT_LEVEL_CAP
) -> None:
    """Check every manifest invariant, raising InvariantViolation on the first break.

    Note: the appendix-style difficulty maps begin at a value of 0, so
    ``min_value`` is required to be nonnegative rather than strictly positive.
    """
    where = f"manifest {manifest.id!r}"
    if not manifest.id:
        raise InvariantViolation(f"{where}: 'id' must be nonempty")

    names = [p.name for p in manifest.scale_params]
    if len(set(names)) != len(names):
        raise InvariantViolation(f"{where}: duplicate scale parameter names {names}")
    if not names:
        raise InvariantViolation(f"{where}: at least one scale parameter is required")
    for p in manifest.scale_params:
        if p.min_value < 0:
            raise InvariantViolation(
                f"{where}: parameter {p.name!r} min_value must be >= 0"
            )
        if p.max_value < p.min_value:
            raise InvariantViolation(
                f"{where}: parameter {p.name!r} max_value < min_value"
            )

    spec = manifest.output_spec
    if spec.output_type not in OUTPUT_TYPES:
        raise InvariantViolation(
            f"{where}: output_type {spec.output_type!r} not one of {OUTPUT_TYPES}"
        )

    ladder = manifest.ladder
    if len(ladder.levels) < 2:
        raise InvariantViolation(f"{where}: ladder must have at least 2 levels")
    if len(ladder.levels) > level_cap:
        raise InvariantViolation(
            f"{where}: ladder has {len(ladder.levels)} levels, cap is {level_cap}"
        )
    by_param = {p.name: p for p in manifest.scale_params}
    for idx, config in enumerate(ladder.levels):
        if set(config) != set(names):
            raise InvariantViolation(
                f"{where}: ladder level {idx} parameters {sorted(config)} do not "
                f"match scale_params {sorted(names)}"
            )
    for name, p in by_param.items():
        values = [config[name] for config in ladder.levels]
        if any(b < a for a, b in zip(values, values[1:])):
            raise InvariantViolation(
                f"{where}: ladder values for {name!r} are not nondecreasing: {values}"
            )
        if values[0] != p.min_value:
            raise InvariantViolation(
                f"{where}: ladder level 0 value {values[0]} for {name!r} must equal "
                f"min_value {p.min_value}"
            )
        if values[-1] > p.max_value:
            raise InvariantViolation(
                f"{where}: ladder top value {values[-1]} for {name!r} exceeds "
                f"max_value {p.max_value}"
            )

    if len(manifest.oracle_refs) < 2:
        raise InvariantViolation(
            f"{where}: at least 2 oracle_refs required, got {len(manifest.oracle_refs)}"
        )
    if manifest.time_limit_ms <= 0:
        raise InvariantViolation(f"{where}: time_limit_ms must be positive")
    if manifest.input_byte_budget <= 0:
        raise InvariantViolation(f"{where}: input_byte_budget must be positive")


def load_manifest(
    path: str | Path, *, level_cap: int = DEFAULT_LEVEL_CAP
) -> EnvironmentManifest:
    """Load and validate the package at ``path``.

    The package directory must contain ``manifest.json``; every referenced
    executable must exist inside the package and carry the execute bit.
    """
    root = Path(path)
    if not root.is_dir():
        raise MissingFile(f"package directory {root} does not exist")
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingFile(f"{manifest_path} does not exist")
    try:
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{manifest_path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaViolation(f"{manifest_path}: top level must be an object")

    manifest = manifest_from_dict(data, root=root, level_cap=level_cap)
    for ref in (manifest.generator_ref, *manifest.oracle_refs):
        if Path(ref).is_absolute() or ".." in Path(ref).parts:
            raise InvariantViolation(
                f"{where_ref(manifest, ref)}: references must stay inside the package"
            )
        target = root / ref
        if not target.is_file():
            raise MissingFile(f"{where_ref(manifest, ref)}: {target} does not exist")
        if not os.access(target, os.X_OK):
            raise MissingFile(f"{where_ref(manifest, ref)}: {target} is not executable")
    return manifest


def where_ref(manifest: EnvironmentManifest, ref: str) -> str:
    return f"manifest {manifest.id!r} executable {ref!r}"


# -- serialization -------------------------------------------------------------


def manifest_to_dict(manifest: EnvironmentManifest) -> dict[str, Any]:
    """Serialize back to the manifest.json shape (single-param ladders use the
    bare-integer appendix form)."""
    names = [p.name for p in manifest.scale_params]
    if len(names) == 1:
        ladder: dict[str, Any] = {
            str(i): config[names[0]] for i, config in enumerate(manifest.ladder.levels)
        }
    else:
        ladder = {str(i): dict(config) for i, config in enumerate(manifest.ladder.levels)}
    return {
        "id": manifest.id,
        "statement": manifest.statement,
        "scale_params": [
            {
                "name": p.name,
                "min_value": p.min_value,
                "max_value": p.max_value,
                "description": p.description,
            }
            for p in manifest.scale_params
        ],
        "output_spec": {
            "output_type": manifest.output_spec.output_type,
            "uniqueness": manifest.output_spec.uniqueness,
            "requirement_text": manifest.output_spec.requirement_text,
        },
        "ladder": ladder,
        "generator_ref": manifest.generator_ref,
        "oracle_refs": list(manifest.oracle_refs),
        "time_limit_ms": manifest.time_limit_ms,
        "input_byte_budget": manifest.input_byte_budget,
    }


def save_manifest(manifest: EnvironmentManifest, directory: str | Path) -> Path:
    target = Path(directory) / MANIFEST_NAME
    target.write_text(
        json.dumps(manifest_to_dict(manifest), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return target


def package_fingerprint(manifest: EnvironmentManifest) -> str:
    """SHA-256 over the manifest file and every referenced executable.

    Used by the run log so replay can detect edited packages.
    """
    if manifest.root is None:
        raise MissingFile(f"manifest {manifest.id!r} has no package root")
    digest = hashlib.sha256()
    for name in [MANIFEST_NAME, manifest.generator_ref, *manifest.oracle_refs]:
        digest.update(name.encode("utf-8") + b"\x00")
        digest.update((manifest.root / name).read_bytes())
        digest.update(b"\x00")
    return digest.hexdigest()

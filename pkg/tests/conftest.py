from __future__ import annotations

import json
import stat
import textwrap
from pathlib import Path

import pytest

SUM_GENERATOR = """\
import json, random, sys

obj = json.load(sys.stdin)
if "n" not in obj:
    sys.stderr.write("missing scale parameter n\\n")
    sys.exit(2)
n = int(obj["n"])
rng = random.Random(obj.get("seed"))
values = [rng.randint(1, 9) for _ in range(n)]
print(n)
print(" ".join(map(str, values)))
"""

CONSTANT_GENERATOR = """\
import sys
sys.stdin.read()
print(3)
print("1 2 3")
"""

SUM_ORACLE_LOOP = """\
import sys
tokens = sys.stdin.read().split()
n = int(tokens[0])
total = 0
for value in tokens[1:1 + n]:
    total += int(value)
print(total)
"""

SUM_ORACLE_BUILTIN = """\
import sys
tokens = sys.stdin.read().split()
print(sum(map(int, tokens[1:1 + int(tokens[0])])))
"""

SUM_ORACLE_OFF_BY_ONE = """\
import sys
tokens = sys.stdin.read().split()
print(sum(map(int, tokens[1:1 + int(tokens[0])])) + 1)
"""


def write_script(directory: Path, name: str, body: str) -> Path:
    path = directory / name
    path.write_text("#!/usr/bin/env python3\n" + textwrap.dedent(body), encoding="utf-8")
    path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return path


def write_manifest(directory: Path, data: dict) -> Path:
    path = directory / "manifest.json"
    path.write_text(json.dumps(data, indent=2), encoding="utf-8")
    return path


def sum_manifest_dict(
    env_id: str = "sum-env",
    *,
    n_min: int = 1,
    n_max: int = 40,
    ladder: list[int] | None = None,
    oracle_refs: list[str] | None = None,
    time_limit_ms: int = 4000,
    input_byte_budget: int = 12000,
) -> dict:
    ladder = ladder if ladder is not None else [1, 2, 4, 8, 16, 40]
    return {
        "id": env_id,
        "statement": "Sum the n listed integers.",
        "scale_params": [
            {
                "name": "n",
                "min_value": n_min,
                "max_value": n_max,
                "description": "how many integers to sum",
            }
        ],
        "output_spec": {
            "output_type": "number",
            "uniqueness": True,
            "requirement_text": "Print the total on one line.",
        },
        "ladder": {str(i): v for i, v in enumerate(ladder)},
        "generator_ref": "generator",
        "oracle_refs": oracle_refs if oracle_refs is not None else ["oracle_0", "oracle_1"],
        "time_limit_ms": time_limit_ms,
        "input_byte_budget": input_byte_budget,
    }


def make_sum_package(
    directory: Path,
    env_id: str = "sum-env",
    *,
    mutant_oracle: bool = False,
    constant_generator: bool = False,
    **manifest_kwargs,
) -> Path:
    """A tiny working environment package used across the suite."""
    directory.mkdir(parents=True, exist_ok=True)
    write_manifest(directory, sum_manifest_dict(env_id, **manifest_kwargs))
    write_script(
        directory, "generator", CONSTANT_GENERATOR if constant_generator else SUM_GENERATOR
    )
    write_script(directory, "oracle_0", SUM_ORACLE_LOOP)
    write_script(
        directory, "oracle_1", SUM_ORACLE_OFF_BY_ONE if mutant_oracle else SUM_ORACLE_BUILTIN
    )
    return directory


@pytest.fixture
def sum_package(tmp_path: Path) -> Path:
    return make_sum_package(tmp_path / "sum-env")


FIXED_WIDTH_GENERATOR = """\
import json, sys
obj = json.load(sys.stdin)
n = int(obj["n"])
print(n)
print(" ".join(["1234567"] * n))
"""

COUNT_ORACLE = """\
import sys
print(sys.stdin.read().split()[0])
"""


def fixed_width_input_bytes(n: int) -> int:
    """Closed-form size of FIXED_WIDTH_GENERATOR output: header + 8 bytes/element."""
    return len(str(n)) + 1 + (8 * n if n else 1)


def make_fixed_width_package(directory: Path, n_max: int = 1_000_000) -> Path:
    """Package whose input size is analytically known, for calibration tests."""
    directory.mkdir(parents=True, exist_ok=True)
    write_manifest(
        directory,
        {
            "id": directory.name,
            "statement": "Count the listed tokens.",
            "scale_params": [
                {"name": "n", "min_value": 1, "max_value": n_max, "description": ""}
            ],
            "output_spec": {
                "output_type": "number",
                "uniqueness": True,
                "requirement_text": "",
            },
            "ladder": {"0": 1, "1": n_max},
            "generator_ref": "generator",
            "oracle_refs": ["oracle_0", "oracle_1"],
            "time_limit_ms": 4000,
            "input_byte_budget": 10**9,
        },
    )
    write_script(directory, "generator", FIXED_WIDTH_GENERATOR)
    write_script(directory, "oracle_0", COUNT_ORACLE)
    write_script(directory, "oracle_1", COUNT_ORACLE)
    return directory

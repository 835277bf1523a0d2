"""Difficulty-controllable verifiable reasoning environments.

Synthesis and validation of environment packages, sandboxed execution of
their generators and oracles, an online difficulty controller, active-set
curation, and a reproducible multi-environment training loop.
"""

__version__ = "0.1.0"

from .envpack import (
    DifficultyLadder,
    EnvironmentManifest,
    OutputSpec,
    ScaleParameter,
    config_at_level,
    load_manifest,
)
from .sandbox import TestInstance, Verdict, judge, normalize, run_generator, run_oracle

__all__ = [
    "__version__",
    "DifficultyLadder",
    "EnvironmentManifest",
    "OutputSpec",
    "ScaleParameter",
    "TestInstance",
    "Verdict",
    "config_at_level",
    "judge",
    "load_manifest",
    "normalize",
    "run_generator",
    "run_oracle",
]

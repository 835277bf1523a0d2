"""Command-line entry point wiring all engine modules.

Subcommands: synthesize, validate, calibrate, train-sim, replay, report.
Every subcommand honors --config (TOML), --seed, and --out; outputs refuse to
overwrite an existing path unless --force is given (replacement is atomic).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import GlobalConfig, apply_overrides, load_config
from .endpoint import CompletionClient
from .envpack import load_manifest
from .errors import ScalerError
from .harness import (
    RunConfig,
    RunLog,
    build_policy,
    load_universe,
    replay,
    run_training,
    synthetic_universe,
)
from .reporting import write_report_csvs
from .synthesis import (
    SynthesisOptions,
    calibrate,
    synthesize_candidates,
    validate_package,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scaler",
        description="Synthesize, validate, and train on difficulty-controllable "
        "verifiable environments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--out", help="output path")
    common.add_argument(
        "--force", action="store_true", help="overwrite an existing output path"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", parents=[common],
                       help="build environment packages from a candidates directory")
    p.add_argument("--candidates", required=True)
    _add_synthesis_flags(p)
    p.add_argument("--endpoint-url", default=None)

    p = sub.add_parser("validate", parents=[common],
                       help="run meta filter, breadth check, and deep check on a package")
    p.add_argument("env_dir")
    _add_synthesis_flags(p)

    p = sub.add_parser("calibrate", parents=[common],
                       help="binary-search the feasible difficulty range of a package")
    p.add_argument("env_dir")
    p.add_argument("--byte-budget", type=int, default=None)
    p.add_argument("--time-limit-ms", type=int, default=None)
    p.add_argument("--level-cap", type=int, default=None)
    p.add_argument("--ratio-threshold", type=float, default=None)

    p = sub.add_parser("train-sim", parents=[common],
                       help="run the adaptive training loop against a policy")
    p.add_argument("--envs", required=True,
                   help="package directory, or synthetic:<count>[:<max_level>]")
    p.add_argument("--policy", choices=["skill", "endpoint"], default="skill")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--active-size", type=int, default=None)
    p.add_argument("--k", type=int, default=5, help="instances per environment per step")
    p.add_argument("--n-resp", type=int, default=8, help="responses per instance")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--k-slope", type=int, default=None)
    p.add_argument("--k-zero", type=int, default=None)
    p.add_argument("--k-sat", type=int, default=None)
    p.add_argument("--fixed-level", type=int, default=None,
                   help="disable the controller and sample every instance at this level")
    p.add_argument("--skill", type=float, default=0.0, help="skill-model initial skill")
    p.add_argument("--skill-width", type=float, default=1.0)
    p.add_argument("--skill-eta", type=float, default=0.0, help="skill-model learn rate")

    p = sub.add_parser("replay", parents=[common],
                       help="re-execute a logged run and verify determinism")
    p.add_argument("--log", required=True)
    p.add_argument("--envs", required=True)

    p = sub.add_parser("report", parents=[common],
                       help="emit CSV series from a run log")
    p.add_argument("--log", required=True)
    p.add_argument("--out-dir", required=True)

    return parser


def _add_synthesis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--byte-budget", type=int, default=None)
    p.add_argument("--level-cap", type=int, default=None)
    p.add_argument("--ratio-threshold", type=float, default=None)
    p.add_argument("--deep-instances", type=int, default=None)
    p.add_argument("--breadth-configs", type=int, default=None)
    p.add_argument("--breadth-seeds", type=int, default=None)


def _resolve_config(args: argparse.Namespace) -> GlobalConfig:
    config = load_config(args.config)
    overrides = {
        key: getattr(args, attr)
        for key, attr in (
            ("byte_budget", "byte_budget"),
            ("level_cap", "level_cap"),
            ("ratio_threshold", "ratio_threshold"),
            ("deep_instances", "deep_instances"),
            ("breadth_configs", "breadth_configs"),
            ("breadth_seeds", "breadth_seeds"),
            ("tau", "tau"),
            ("beta", "beta"),
            ("k_slope", "k_slope"),
            ("k_zero", "k_zero"),
            ("k_sat", "k_sat"),
            ("active_size", "active_size"),
            ("endpoint_url", "endpoint_url"),
            ("time_limit_ms", "time_limit_ms"),
        )
        if hasattr(args, attr)
    }
    return apply_overrides(config, overrides)


def _synthesis_options(config: GlobalConfig, seed: int) -> SynthesisOptions:
    return SynthesisOptions(
        byte_budget=config.byte_budget,
        level_cap=config.level_cap,
        ratio_threshold=config.ratio_threshold,
        breadth_configs=config.breadth_configs,
        breadth_seeds=config.breadth_seeds,
        deep_instances=config.deep_instances,
        base_seed=seed,
        grace_ms=config.kill_grace_ms,
        workers=config.workers,
    )


def _write_output(path: Path, text: str, force: bool) -> None:
    """Atomic write; refuses to clobber unless forced."""
    if path.exists() and not force:
        raise ScalerError(
            f"output {path} already exists; pass --force to overwrite"
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _load_envs(spec: str, *, level_cap: int) -> list:
    if spec.startswith("synthetic:"):
        parts = spec.split(":")
        count = int(parts[1])
        max_level = int(parts[2]) if len(parts) > 2 else 10
        return synthetic_universe(count, max_level)
    return load_universe(spec, level_cap=level_cap)


def _endpoint_client(config: GlobalConfig) -> CompletionClient | None:
    if not config.endpoint_url:
        return None
    return CompletionClient(
        config.endpoint_url,
        token_env=config.endpoint_token_env or None,
        model=config.endpoint_model or None,
    )


# -- subcommand implementations -------------------------------------------------


def _cmd_synthesize(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    seed = args.seed if args.seed is not None else 0
    out_dir = Path(args.out or "environments")
    summary = synthesize_candidates(
        args.candidates,
        out_dir,
        _synthesis_options(config, seed),
        endpoint_client=_endpoint_client(config),
    )
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    seed = args.seed if args.seed is not None else 0
    manifest = load_manifest(args.env_dir, level_cap=max(config.level_cap, 64))
    report = validate_package(manifest, _synthesis_options(config, seed))
    out_path = Path(args.out or Path(args.env_dir) / "validation_report.json")
    _write_output(out_path, json.dumps(report.to_dict(), indent=2) + "\n", args.force)
    print(json.dumps({"passed": report.passed, "report": str(out_path)}))
    return 0 if report.passed else 1


def _cmd_calibrate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    seed = args.seed if args.seed is not None else 0
    manifest = load_manifest(args.env_dir, level_cap=max(config.level_cap, 64))
    result = calibrate(
        manifest,
        config.byte_budget,
        args.time_limit_ms,
        level_cap=config.level_cap,
        ratio_threshold=config.ratio_threshold,
        base_seed=seed,
        grace_ms=config.kill_grace_ms,
    )
    out_path = Path(args.out or Path(args.env_dir) / "calibration.json")
    _write_output(out_path, json.dumps(result.to_dict(), indent=2) + "\n", args.force)
    print(json.dumps({"s_max": result.s_max, "levels": len(result.ladder.levels),
                      "out": str(out_path)}))
    return 0


def _cmd_train_sim(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    seed = args.seed if args.seed is not None else 0
    universe = _load_envs(args.envs, level_cap=max(config.level_cap, 64))
    active_size = min(config.active_size, len(universe))
    cfg = RunConfig(
        active_size=active_size,
        instances_per_env=args.k,
        responses_per_instance=args.n_resp,
        tau=config.tau,
        beta=config.beta,
        k_slope=config.k_slope,
        k_zero=config.k_zero,
        k_sat=config.k_sat,
        max_steps=args.steps,
        master_seed=seed,
        fixed_level=args.fixed_level,
        policy_name=args.policy,
        policy_params=(
            {"skill": args.skill, "width": args.skill_width, "learn_rate": args.skill_eta}
            if args.policy == "skill"
            else {}
        ),
    )
    policy = build_policy(cfg, endpoint_client=_endpoint_client(config))
    out_path = Path(args.out or "run.jsonl")
    if out_path.exists() and not args.force:
        raise ScalerError(f"output {out_path} already exists; pass --force to overwrite")
    run_log = run_training(universe, policy, cfg)
    _write_output(out_path, "\n".join(run_log.lines()) + "\n", True)
    print(json.dumps({"steps": len(run_log.records), "out": str(out_path)}))
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    universe = _load_envs(args.envs, level_cap=max(config.level_cap, 64))
    replayed = replay(args.log, universe)
    original = RunLog.read(args.log)
    matches = replayed.canonical_bytes() == original.canonical_bytes()
    if args.out:
        _write_output(Path(args.out), "\n".join(replayed.lines()) + "\n", args.force)
    print(json.dumps({"match": matches, "steps": len(replayed.records)}))
    return 0 if matches else 1


def _cmd_report(args: argparse.Namespace) -> int:
    run_log = RunLog.read(args.log)
    paths = write_report_csvs(run_log, args.out_dir)
    print(json.dumps({"written": [str(p) for p in paths]}))
    return 0


_COMMANDS = {
    "synthesize": _cmd_synthesize,
    "validate": _cmd_validate,
    "calibrate": _cmd_calibrate,
    "train-sim": _cmd_train_sim,
    "replay": _cmd_replay,
    "report": _cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ScalerError as exc:
        _print_error(exc)
        return 1
    except (OSError, ValueError) as exc:
        _print_error(exc)
        return 1


def _print_error(exc: Exception) -> None:
    summary: dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(summary), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())

"""``magik`` command line: one subcommand per pipeline stage over a single config file."""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from loguru import logger

from api.config_manager.config_manager import ConfigManager, ExperimentConfig, config_hash, log_level_from_env
from core.envs import ENV_IDS
from core.errors import ConfigError, MagikError
from core.pipeline import PIPELINE, open_run, resolve_targets, run_stages, stage_registry

RUN_LOG = "run.log"
PER_ENV_COMMANDS = ("train-sac", "collect", "label", "train-vae", "traverse", "finetune", "evaluate")
SWEEPS = {"diversity": "sweep-diversity", "labels": "sweep-labels"}

LOG_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}"


def _common_options(defaults: bool) -> argparse.ArgumentParser:
    # accepted before or after the command; subcommand copies never override with defaults
    default = None if defaults else argparse.SUPPRESS
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", default=default, help="experiment config, YAML or JSON")
    parser.add_argument("--seed", type=int, default=default, help="overrides the config seed")
    parser.add_argument("--log-level", default=default, help="DEBUG, INFO, WARNING ... (env MAGIK_LOG_LEVEL)")
    parser.add_argument("--quiet", action="store_true", default=False if defaults else argparse.SUPPRESS,
                        help="warnings only, no progress bars")
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magik",
        description="Zero-shot policy transfer through a class-swapping VAE.",
        parents=[_common_options(defaults=True)],
    )
    common = _common_options(defaults=False)
    commands = parser.add_subparsers(dest="command", required=True, metavar="<command>")

    for name in PER_ENV_COMMANDS:
        sub = commands.add_parser(name, parents=[common], help=stage_registry.get(name).description or name)
        sub.add_argument("--env", choices=ENV_IDS, help="default: every environment in the config")
        if name == "collect":
            sub.add_argument("--mode", choices=("training", "random", "policy"))
            sub.add_argument("--steps", type=int, dest="n_steps")
            sub.add_argument("--random-prefix", type=int)
        elif name == "label":
            sub.add_argument("--budget", type=int)
        elif name in ("evaluate", "finetune"):
            sub.add_argument("--target", help="e.g. 3, target3, red or reach_red")
        if name == "evaluate":
            sub.add_argument("--jobs", type=int, help="parallel evaluation workers")

    full = commands.add_parser("reproduce-all", parents=[common], help="every stage for every configured environment")
    full.add_argument("--jobs", type=int)

    sweep = commands.add_parser("sweep", parents=[common], help="low-diversity or low-label robustness sweep")
    sweep.add_argument("kind", choices=sorted(SWEEPS))
    sweep.add_argument("--jobs", type=int)
    return parser


def configure_logging(level: str, quiet: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="WARNING" if quiet else level, format=LOG_FORMAT)


def _target_envs(config: ExperimentConfig, target: str) -> List[str]:
    envs = []
    for env_id in config.environments:
        try:
            resolve_targets(env_id, target)
        except ConfigError:
            continue
        envs.append(env_id)
    if not envs:
        raise ConfigError(f"Target '{target}' matches no task of {config.environments}")
    return envs


def plan(args: argparse.Namespace, config: ExperimentConfig) -> Tuple[List[str], List[str], Dict[str, Any]]:
    """(stages, environments, stage options) for the parsed command."""
    options: Dict[str, Any] = {}
    for name in ("mode", "n_steps", "random_prefix", "budget", "target", "jobs"):
        value = getattr(args, name, None)
        if value is not None:
            options[name] = value

    if args.command == "reproduce-all":
        return list(PIPELINE), list(config.environments), options
    if args.command == "sweep":
        env_id = config.sweep.diversity_env if args.kind == "diversity" else config.sweep.low_label_env
        return [SWEEPS[args.kind]], [env_id], options

    if args.env:
        envs = [args.env]
    elif "target" in options:
        envs = _target_envs(config, options["target"])
    else:
        envs = list(config.environments)
    return [args.command], envs, options


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging((args.log_level or log_level_from_env()).upper(), args.quiet)
    file_sink = None
    try:
        overrides = {"seed": args.seed} if args.seed is not None else None
        config = ConfigManager().load(args.config, overrides)
        out_dir = Path(config.paths.artifact_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        file_sink = logger.add(out_dir / RUN_LOG, level="DEBUG", encoding="utf-8")

        stages, envs, options = plan(args, config)
        command = " ".join(["magik", *(argv if argv is not None else sys.argv[1:])])
        ctx = open_run(
            config, command, config_hash(config), config.seed,
            jobs=options.get("jobs") or config.eval.jobs, show_progress=not args.quiet,
        )
        results = run_stages(ctx, stages, envs, **options)
        for node_id, output in results.items():
            logger.info(f"{node_id}: {output}")
        return 0
    except MagikError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        for line in getattr(e, "field_errors", []):
            logger.error(f"  {line}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("interrupted")
        return 130
    except Exception as e:
        logger.exception(f"unexpected failure: {e}")
        return 1
    finally:
        if file_sink is not None:
            logger.remove(file_sink)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

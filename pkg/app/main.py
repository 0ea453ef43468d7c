import argparse
import sys
from pathlib import Path

from app.core.exceptions import AppException, ConfigError
from app.core.logging import get_logger, setup_logging
from app.db.session import close_db, get_db_session, init_db
from app.repositories.run_repository import RunRepository
from app.schemas.presets import PRESETS
from app.services.experiment_service import ExperimentService

logger = get_logger(__name__)

COMMANDS = ("run", "replay", "runs")


# ---------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------
def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shelab",
        description=(
            "Simulation and verification lab for the stochastic heat equation "
            "with spectrally positive Levy noise."
        ),
    )
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="Run an experiment (default command)")
    run.add_argument("--config", type=Path, help="Experiment TOML file")
    run.add_argument(
        "--preset", metavar="NAME", help=f"Built-in experiment: {', '.join(sorted(PRESETS))}"
    )
    run.add_argument("--seed", type=_seed, help="Overrides [sampling] seed")
    run.add_argument("--out", type=Path, help="Artifact directory")
    run.add_argument("--threads", type=_positive_int, help="Thread budget")

    replay = sub.add_parser("replay", help="Re-run a manifest and compare artifact hashes")
    replay.add_argument("manifest", type=Path)
    replay.add_argument("--out", type=Path, help="Artifact directory (default: <run>/replay)")
    replay.add_argument("--threads", type=_positive_int, help="Thread budget")

    runs = sub.add_parser("runs", help="List runs recorded in the run registry")
    runs.add_argument("--kind", help="Only runs of this experiment kind")
    runs.add_argument("--limit", type=_positive_int, default=20)
    return parser


def parse_args(argv: list[str]) -> argparse.Namespace:
    if not argv or argv[0] not in COMMANDS and argv[0] not in ("-h", "--help"):
        argv = ["run", *argv]
    return build_parser().parse_args(argv)


# ---------------------------------------------------------
# Commands
# ---------------------------------------------------------
def _run(args: argparse.Namespace) -> int:
    config = ExperimentService.resolve_config(
        preset=args.preset, config_path=args.config, seed=args.seed
    )
    outcome = ExperimentService.run(config, out_dir=args.out, threads=args.threads)
    print(outcome.manifest_path)
    return outcome.exit_code


def _replay(args: argparse.Namespace) -> int:
    outcome = ExperimentService.replay(args.manifest, out_dir=args.out, threads=args.threads)
    print(outcome.manifest_path)
    return outcome.exit_code


def _runs(args: argparse.Namespace) -> int:
    if not init_db():
        raise ConfigError("No run registry configured: set RUN_REGISTRY_URL")
    with get_db_session() as db:
        for run in RunRepository.list_runs(db, kind=args.kind, limit=args.limit):
            print(
                f"{run.created_at.isoformat()}  {run.kind:<24} seed={run.seed}  "
                f"exit={run.exit_code}  config={run.config_hash[:12]}  {run.output_dir}"
            )
    return 0


HANDLERS = {"run": _run, "replay": _replay, "runs": _runs}


# ---------------------------------------------------------
# Entrypoint
# ---------------------------------------------------------
def main(argv: list[str] | None = None) -> int:
    setup_logging()
    args = parse_args(sys.argv[1:] if argv is None else list(argv))
    try:
        return HANDLERS[args.command](args)
    except AppException as exc:
        logger.warning(
            "experiment_failed",
            extra={"error_code": exc.error_code, "exit_code": exc.exit_code},
        )
        print(f"error [{exc.error_code}]: {exc.message}", file=sys.stderr)
        return exc.exit_code
    finally:
        close_db()


if __name__ == "__main__":
    sys.exit(main())

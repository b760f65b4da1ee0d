from dotenv import load_dotenv

# .env must be loaded before settings are read
load_dotenv()

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import structlog

from cli.output import emit_json
from cli.routes import classify, evolve, ground, report, sweep
from engine.settings import get_settings
from engine.telemetry.logger import setup_logging
from engine.telemetry.metrics import metrics
from inls.errors import InlsError

logger = structlog.get_logger()

ROUTES = (ground, evolve, classify, sweep, report)


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS lets the flags appear before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="Output directory")
    common.add_argument(
        "--force", action="store_true", default=argparse.SUPPRESS, help="Overwrite a non-empty --out"
    )
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="Parallel sweep rows")
    common.add_argument("--log-level", default=argparse.SUPPRESS)
    common.add_argument("--json-logs", action="store_true", default=argparse.SUPPRESS)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="inls",
        parents=[common],
        description="Numerical lab for the focusing inhomogeneous NLS.",
    )
    parser.set_defaults(out=None, force=False, jobs=None, log_level=None, json_logs=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for route in ROUTES:
        route.register(sub, common)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(
        json_logs=args.json_logs or settings.json_logs,
        log_level=args.log_level or settings.log_level,
    )
    log = logger.bind(command=args.command)
    log.info("cli.command.start")

    try:
        code = args.handler(args, settings)
    except InlsError as e:
        log.error("cli.command.failed", reason=e.reason, error=e.message)
        emit_json(
            {
                "status": "error",
                "reason": e.reason,
                "message": e.message,
                "exit_code": int(e.exit_code),
            }
        )
        code = int(e.exit_code)
    finally:
        metrics.log_snapshot()
    return code


if __name__ == "__main__":
    sys.exit(main())

import logging
import sys

import structlog
from rich.console import Console
from rich.logging import RichHandler
from structlog.types import Processor

# Logs go to stderr; stdout carries verdicts and reports.
console = Console(stderr=True)


def setup_logging(json_logs: bool = False, log_level: str = "INFO") -> None:
    """
    Configures structlog for the lab.

    Args:
        json_logs: JSON lines instead of the rich console renderer.
        log_level: 'DEBUG', 'INFO', 'WARNING', 'ERROR'.
    """

    shared_processors: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.CallsiteParameterAdder(
            {
                structlog.processors.CallsiteParameter.FILENAME,
                structlog.processors.CallsiteParameter.LINENO,
            }
        ),
    ]

    handler: logging.Handler
    if json_logs:
        processors = shared_processors + [
            structlog.processors.dict_tracebacks,
            structlog.processors.JSONRenderer(),
        ]
        handler = logging.StreamHandler(sys.stderr)
    else:
        processors = shared_processors + [
            structlog.dev.ConsoleRenderer(colors=console.is_terminal, pad_event_to=28),
        ]
        handler = RichHandler(console=console, rich_tracebacks=True, show_path=False, markup=False)

    structlog.configure(
        processors=processors,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    root = logging.getLogger()
    root.handlers.clear()
    root.addHandler(handler)
    root.setLevel(log_level.upper())

    structlog.get_logger().debug("logging.initialized", mode="json" if json_logs else "rich")

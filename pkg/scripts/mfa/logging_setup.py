"""CLI 로깅 설정 (라이브러리 모듈은 핸들러를 건드리지 않는다)."""

import logging

from rich.console import Console
from rich.logging import RichHandler

PLAIN_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

console = Console(stderr=True)


def setup_logging(level: str = "info", fmt: str = "pretty", verbose: bool = False) -> None:
    """format 이 "pretty" 면 RichHandler, 아니면 평문 포맷."""
    resolved = logging.DEBUG if verbose else getattr(logging, level.upper(), logging.INFO)
    if fmt == "pretty":
        logging.basicConfig(
            level=resolved,
            format="%(message)s",
            datefmt="[%X]",
            handlers=[RichHandler(console=console, rich_tracebacks=False, show_path=False)],
            force=True,
        )
    else:
        logging.basicConfig(level=resolved, format=PLAIN_FORMAT, force=True)

import time

from rich.console import Console

QUIET = False
_console = Console(stderr=True, markup=False, highlight=False, soft_wrap=True)


def now_s() -> float:
    return time.perf_counter()


def log(tag: str, message: str) -> None:
    """One status line on stderr, ``[TAG] message``; stdout stays for CSV/JSON."""
    if QUIET:
        return
    _console.print(f"[{tag}] {message}")

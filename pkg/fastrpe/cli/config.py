# fastrpe/cli/config.py
import os
from pathlib import Path

from fastrpe.shared.protocol import DENOM_GUARD

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "VECLIB_MAXIMUM_THREADS",
                "NUMEXPR_NUM_THREADS")


def _env_int(name: str, default: int) -> int:
    try:
        return int(os.environ.get(name, default))
    except ValueError:
        return default


def _env_float(name: str, default: float) -> float:
    try:
        return float(os.environ.get(name, default))
    except ValueError:
        return default


DEFAULT_SEED = _env_int("FASTRPE_SEED", 0)
OUT_DIR = Path(os.environ.get("FASTRPE_OUT_DIR", "."))
THREADS = os.environ.get("FASTRPE_THREADS") or None
DENOM_GUARD_DEFAULT = _env_float("FASTRPE_DENOM_GUARD", DENOM_GUARD)


def pin_threads(count: int | str | None) -> None:
    """Cap BLAS/OpenMP pools; only effective before numpy is first imported."""
    if count is None:
        return
    for name in _THREAD_VARS:
        os.environ[name] = str(count)


def resolve_out(path: str | None) -> Path | None:
    if not path:
        return None
    p = Path(path)
    return p if p.is_absolute() else OUT_DIR / p

"""Entry point: pins kernel thread pools, then dispatches to the commands.

BLAS pools read their environment at import time, so ``--threads`` (or the
``KGEXPLAIN_THREADS`` variable) must be applied before anything imports
numpy. ``--threads 1`` is the determinism mode: re-running a command with an
identical manifest and seed then reproduces outputs byte for byte.
"""

from __future__ import annotations

import argparse
import os
import sys

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _pin_threads(argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--threads", type=int, default=None)
    known, _ = pre.parse_known_args(argv)
    threads = known.threads
    if threads is None:
        env = os.environ.get("KGEXPLAIN_THREADS")
        threads = int(env) if env else None
    if threads is not None and threads >= 1:
        for var in _THREAD_VARS:
            os.environ[var] = str(threads)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    _pin_threads(argv)
    from . import commands

    return commands.dispatch(argv)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

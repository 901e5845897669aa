"""Worker-count control for per-axis parallelism.

Results are reduced in a fixed axis order, so any worker count produces
bit-identical output; the knob only trades latency.
"""

from __future__ import annotations

import os

ENV_VAR = "PROJCONN_THREADS"

_override: int | None = None


def set_thread_count(n: int | None) -> None:
    global _override
    _override = None if n is None else max(1, int(n))


def thread_count() -> int:
    if _override is not None:
        return _override
    env = os.environ.get(ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1

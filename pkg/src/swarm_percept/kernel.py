"""Backend selection for the simulation loop.

The compiled extension is used when it imports; otherwise the pure-Python
reference runs. ``SWARM_PERCEPT_BACKEND`` (auto | python | compiled) overrides
the choice. Both backends produce identical event logs for the same world.
"""
from __future__ import annotations

import os

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

BACKENDS = ("auto", "python", "compiled")


ACTIVE = "compiled" if _ckernel is not None else "python"


def compiled_available() -> bool:
    return _ckernel is not None


def resolve(backend: str | None = None) -> str:
    choice = backend or os.environ.get("SWARM_PERCEPT_BACKEND", "auto")
    if choice not in BACKENDS:
        raise ValueError(f"unknown backend {choice!r}; expected one of {BACKENDS}")
    if choice == "auto":
        return "compiled" if _ckernel is not None else "python"
    if choice == "compiled" and _ckernel is None:
        raise RuntimeError("compiled backend requested but the extension is not built")
    return choice


def run_kernel(world, backend: str | None = None) -> list[tuple]:
    if resolve(backend) == "compiled":
        return _ckernel.run_kernel(world)
    return _pykernel.run_kernel(world)


"""Execution backends for the per-individual update phase.

Two interchangeable implementations exist:

* ``numba_backend``: compiled kernels, with a thread-parallel variant of
  the update loop. The default when numba imports cleanly.
* ``numpy_backend``: pure Python/numpy composition of the operations in
  :mod:`protozoa.core`. Always available; also the only path able to run
  caller-supplied objective functions.

Both produce bit-identical populations for the same config and seed; the
test suite sweeps this property across backends, modes and worker counts.

Set the environment variable ``PROTOZOA_KERNELS`` to ``numba``, ``numpy``
or ``auto`` (default) to pick the path at import time. Requesting numba
when it cannot be imported is an error; ``auto`` falls back silently.
"""

from __future__ import annotations

import os

ENV_VAR = "PROTOZOA_KERNELS"

_CHOICES = ("auto", "numba", "numpy")


def _detect_default() -> str:
    choice = os.environ.get(ENV_VAR, "auto").strip().lower() or "auto"
    if choice not in _CHOICES:
        raise ValueError(f"{ENV_VAR} must be one of {_CHOICES}, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        from . import numba_backend  # noqa: F401  raises if unavailable
        return "numba"
    try:
        from . import numba_backend  # noqa: F401
    except Exception:
        return "numpy"
    return "numba"


DEFAULT_BACKEND = _detect_default()


def get_backend(name: str | None = None):
    """Return the backend module for ``name`` (default: active selection)."""
    resolved = (name or DEFAULT_BACKEND).strip().lower()
    if resolved == "numpy":
        from . import numpy_backend
        return numpy_backend
    if resolved == "numba":
        from . import numba_backend
        return numba_backend
    raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")


def available_backends() -> tuple:
    """Names of the backends importable in this environment."""
    names = ["numpy"]
    try:
        from . import numba_backend  # noqa: F401
        names.insert(0, "numba")
    except Exception:
        pass
    return tuple(names)

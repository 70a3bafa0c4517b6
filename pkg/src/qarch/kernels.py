"""Backend selection for the hot loops.

The compiled extension ``qarch._kernels`` is used when it imports; otherwise,
or when the environment variable ``QARCH_BACKEND`` is ``python``, the
pure-Python module is used. ``BACKEND`` names the active choice.
"""
from __future__ import annotations

import os
from types import ModuleType

from qarch import _recursions_python

__all__ = ["BACKEND", "backend", "get_backend", "Q_LINEAR", "Q_QUADRATIC", "Q_ABS"]

Q_LINEAR = _recursions_python.Q_LINEAR
Q_QUADRATIC = _recursions_python.Q_QUADRATIC
Q_ABS = _recursions_python.Q_ABS


def _load_compiled() -> ModuleType | None:
    try:
        from qarch import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ("cython", "python" or None for default)."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _recursions_python
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; reinstall with Cython available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


if os.environ.get("QARCH_BACKEND", "").lower() == "python" or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

backend = get_backend(BACKEND)

"""Kernel backend selection.

The compiled extension is used when it imports; set ``GHOSTOP_PURE=1`` to
force the NumPy fallback.  :func:`get_backend` returns either by name.
"""
import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def available() -> list[str]:
    return ["numpy"] + (["compiled"] if _compiled is not None else [])


def get_backend(name: str | None = None):
    if name in (None, "auto"):
        if _compiled is not None and os.environ.get("GHOSTOP_PURE", "") not in ("1", "true"):
            return _compiled
        return _kernels_py
    if name == "numpy":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


backend = get_backend()

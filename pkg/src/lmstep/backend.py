"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the
pure-numpy fallback takes over. Set ``LMSTEP_BACKEND=python`` (or ``c``) to
force a choice, e.g. for the backend benchmark.
"""

import os

from . import _core_py

_requested = os.environ.get("LMSTEP_BACKEND", "").strip().lower()

if _requested == "python":
    _impl = _core_py
elif _requested in ("", "c"):
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "c":
            raise ImportError(
                "LMSTEP_BACKEND=c requested but the compiled extension is unavailable")
        _impl = _core_py
else:
    raise ValueError(f"unknown LMSTEP_BACKEND {_requested!r} (use 'c' or 'python')")

BACKEND = _impl.BACKEND_NAME

log_emissions = _impl.log_emissions
fb_batch_shared = _impl.fb_batch_shared
fb_batch_per_unit = _impl.fb_batch_per_unit


def get_backend(name=None):
    """Return the kernel module for ``name`` ('c' or 'python'); default is the
    active backend. Used by tests and the backend benchmark."""
    if name in (None, BACKEND):
        return _impl
    if name == "python":
        return _core_py
    if name == "c":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")

"""Simulation-kernel backend selection.

The hot path (forward path simulation under an exercise rule) has two
interchangeable implementations:

* ``_core`` -- a Cython extension that walks paths in C with the GIL
  released, so worker threads scale on real cores;
* ``numpy_backend`` -- a vectorized pure-NumPy fallback used when the
  extension was not built.

``BERMUDA_BACKEND=cython|numpy`` forces a choice (``cython`` raises if
the extension is unavailable). Within one backend, results are
bit-for-bit independent of worker count; across backends they agree to
floating-point noise (different transcendental implementations).
"""

from __future__ import annotations

import os

from . import numpy_backend

try:
    from . import core_backend as _core_backend
    HAVE_CORE = True
except ImportError:
    _core_backend = None
    HAVE_CORE = False

__all__ = ["get_backend", "available_backends", "HAVE_CORE"]


def available_backends() -> list[str]:
    return ["cython", "numpy"] if HAVE_CORE else ["numpy"]


def get_backend(name: str | None = None):
    """Resolve a kernel backend by name, env var, or availability."""
    if name is None:
        name = os.environ.get("BERMUDA_BACKEND", "auto")
    name = name.lower()
    if name in ("auto", ""):
        return _core_backend if HAVE_CORE else numpy_backend
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        if not HAVE_CORE:
            raise RuntimeError(
                "compiled kernels requested via BERMUDA_BACKEND=cython "
                "but the extension is not built"
            )
        return _core_backend
    raise ValueError(f"unknown backend {name!r} (expected 'cython', 'numpy' or 'auto')")

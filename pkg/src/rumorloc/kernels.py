"""Backend selection for the graph kernels.

The compiled extension is used when it imports; otherwise the pure-Python
module takes over.  Setting ``RUMORLOC_PURE_PYTHON=1`` forces the fallback.
"""
import importlib
import os

from . import _kernels_py

__all__ = ["BACKEND", "available_backends", "get_backend",
           "sssp", "betweenness", "batch_arrivals", "shared_variance"]


def _load_compiled():
    try:
        return importlib.import_module("rumorloc._kernels")
    except ImportError:
        return None


_compiled = None if os.environ.get("RUMORLOC_PURE_PYTHON") == "1" else _load_compiled()
_active = _compiled if _compiled is not None else _kernels_py

BACKEND = _active.BACKEND
sssp = _active.sssp
betweenness = _active.betweenness
batch_arrivals = _active.batch_arrivals
shared_variance = _active.shared_variance


def available_backends():
    names = ["python"]
    if _load_compiled() is not None:
        names.insert(0, "cython")
    return names


def get_backend(name):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        mod = _load_compiled()
        if mod is None:
            raise ImportError("compiled kernels are not built")
        return mod
    raise ValueError(f"unknown backend {name!r}")

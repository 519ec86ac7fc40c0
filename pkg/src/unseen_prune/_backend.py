"""Select the training kernel implementation at import time.

The compiled extension is preferred. Set ``UNSEEN_PRUNE_BACKEND=python`` to
force the numpy fallback (or ``cython`` to fail loudly if it is missing).
"""

import importlib
import os

from . import _pykernels

BACKENDS = ("cython", "python")


def load(name):
    """Return the kernel module for ``name`` ('cython' or 'python')."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("unseen_prune._kernels")
    raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")


def available():
    names = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


def _select():
    requested = os.environ.get("UNSEEN_PRUNE_BACKEND", "").strip().lower()
    if requested:
        return requested, load(requested)
    try:
        return "cython", load("cython")
    except ImportError:
        return "python", _pykernels


NAME, kernels = _select()

"""Backend selection for the reachability index.

The compiled extension is used when it was built; set ``DAGCAST_PURE=1`` to
force the pure-Python implementation.
"""
import os

from . import _pycore

if os.environ.get("DAGCAST_PURE"):
    DagIndex = _pycore.DagIndex
else:
    try:
        from ._core import DagIndex
    except ImportError:
        DagIndex = _pycore.DagIndex

BACKEND = DagIndex.backend
PyDagIndex = _pycore.DagIndex

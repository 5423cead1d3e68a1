"""Kernel backend selection.

The compiled extension is used when importable; set ``SCENETHREADS_PURE=1``
to force the pure-Python implementations. Both take and return numpy arrays
(``int64`` inputs, contiguous).
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("SCENETHREADS_PURE"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def _i64(x):
    return np.ascontiguousarray(x, dtype=np.int64)


def contingency(a, b, ka, kb, impl=None):
    return (impl or _impl).contingency(_i64(a), _i64(b), int(ka), int(kb))


def utterance_features(speakers, impl=None):
    return (impl or _impl).utterance_features(_i64(speakers))


def pair_features(speakers, turns, tok_indptr, tok_ids, ui, uj, ufeat, dup=False, impl=None):
    return (impl or _impl).pair_features(
        _i64(speakers), _i64(turns), _i64(tok_indptr), _i64(tok_ids), _i64(ui), _i64(uj),
        np.ascontiguousarray(ufeat, dtype=np.float64), bool(dup),
    )


def backends():
    """All importable implementations, by name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out

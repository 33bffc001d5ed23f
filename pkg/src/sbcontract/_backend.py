"""Select the compiled kernels when available, numpy otherwise.

Set ``SBCONTRACT_BACKEND=python`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

_impl = _pykernels
BACKEND = "python"

if os.environ.get("SBCONTRACT_BACKEND", "").lower() != "python":
    try:
        from . import _ext as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def lse_rows(logK, v):
    return _impl.lse_rows(_c(logK), _c(v))


def sqdist_extrema(P, Q):
    return _impl.sqdist_extrema(_c(P), _c(Q))


def mixture_stats(Z, C, logc):
    return _impl.mixture_stats(_c(Z), _c(C), _c(logc))

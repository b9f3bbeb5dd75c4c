"""Pick the compiled kernels when available, else the numpy fallback.

Set ``TESSEL_BACKEND=python`` to force the fallback (used by the backend
benchmark and the cross-backend tests).
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("TESSEL_BACKEND", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"


def _prep(A, B, theta=None):
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    if theta is None:
        return A, B
    return A, B, np.ascontiguousarray(theta, dtype=np.float64)


def matern_tensor(A, B, theta, nu2, impl=None):
    A, B, theta = _prep(A, B, theta)
    return (impl or _impl).matern_tensor(A, B, theta, int(nu2))


def matern_aniso(A, B, theta, nu2, impl=None):
    A, B, theta = _prep(A, B, theta)
    return (impl or _impl).matern_aniso(A, B, theta, int(nu2))


def distances(A, B, impl=None):
    A, B = _prep(A, B)
    return (impl or _impl).distances(A, B)

"""Pure-numpy versions of the hot cross-matrix kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; selected
automatically when the extension is not built.
"""

import numpy as np

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)

# rows of A processed per block, bounds the temporaries to ~block*nB doubles
_BLOCK = 512


def _matern_1d(r, nu2):
    """Matern correlation of the already-scaled lag ``r >= 0``."""
    if nu2 == 1:
        return np.exp(-r)
    if nu2 == 3:
        a = _SQRT3 * r
        return (1.0 + a) * np.exp(-a)
    a = _SQRT5 * r
    return (1.0 + a + a * a / 3.0) * np.exp(-a)


def matern_tensor(A, B, theta, nu2):
    nA, d = A.shape
    out = np.empty((nA, B.shape[0]))
    for s in range(0, nA, _BLOCK):
        blk = np.ones((min(_BLOCK, nA - s), B.shape[0]))
        for i in range(d):
            r = np.abs(A[s:s + _BLOCK, i, None] - B[None, :, i]) / theta[i]
            blk *= _matern_1d(r, nu2)
        out[s:s + _BLOCK] = blk
    return out


def matern_aniso(A, B, theta, nu2):
    nA, d = A.shape
    out = np.empty((nA, B.shape[0]))
    for s in range(0, nA, _BLOCK):
        sq = np.zeros((min(_BLOCK, nA - s), B.shape[0]))
        for i in range(d):
            diff = (A[s:s + _BLOCK, i, None] - B[None, :, i]) / theta[i]
            sq += diff * diff
        out[s:s + _BLOCK] = _matern_1d(np.sqrt(sq), nu2)
    return out


def distances(A, B):
    nA, d = A.shape
    out = np.empty((nA, B.shape[0]))
    for s in range(0, nA, _BLOCK):
        sq = np.zeros((min(_BLOCK, nA - s), B.shape[0]))
        for i in range(d):
            diff = A[s:s + _BLOCK, i, None] - B[None, :, i]
            sq += diff * diff
        out[s:s + _BLOCK] = np.sqrt(sq)
    return out

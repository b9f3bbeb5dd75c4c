# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cross-matrix kernels (Matern tensor/anisotropic, Euclidean distance)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs

cnp.import_array()

cdef double SQRT3 = sqrt(3.0)
cdef double SQRT5 = sqrt(5.0)


cdef inline double _matern(double r, int nu2) noexcept nogil:
    cdef double a
    if nu2 == 1:
        return exp(-r)
    if nu2 == 3:
        a = SQRT3 * r
        return (1.0 + a) * exp(-a)
    a = SQRT5 * r
    return (1.0 + a + a * a / 3.0) * exp(-a)


def matern_tensor(const double[:, ::1] A, const double[:, ::1] B,
                  const double[::1] theta, int nu2):
    cdef Py_ssize_t nA = A.shape[0], nB = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    out = np.empty((nA, nB), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(nA):
            for j in range(nB):
                acc = 1.0
                for k in range(d):
                    acc *= _matern(fabs(A[i, k] - B[j, k]) / theta[k], nu2)
                o[i, j] = acc
    return out


def matern_aniso(const double[:, ::1] A, const double[:, ::1] B,
                 const double[::1] theta, int nu2):
    cdef Py_ssize_t nA = A.shape[0], nB = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double sq, diff
    out = np.empty((nA, nB), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(nA):
            for j in range(nB):
                sq = 0.0
                for k in range(d):
                    diff = (A[i, k] - B[j, k]) / theta[k]
                    sq += diff * diff
                o[i, j] = _matern(sqrt(sq), nu2)
    return out


def distances(const double[:, ::1] A, const double[:, ::1] B):
    cdef Py_ssize_t nA = A.shape[0], nB = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double sq, diff
    out = np.empty((nA, nB), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(nA):
            for j in range(nB):
                sq = 0.0
                for k in range(d):
                    diff = A[i, k] - B[j, k]
                    sq += diff * diff
                o[i, j] = sqrt(sq)
    return out

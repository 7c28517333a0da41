# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

cdef extern from *:
    """
    static inline int hl_popcount(long long v) {
        return __builtin_popcountll((unsigned long long)v);
    }
    """
    int hl_popcount(long long v) nogil


def pauli_product_table(xs, zs):
    cdef const cnp.int64_t[::1] x = np.ascontiguousarray(xs, dtype=np.int64).ravel()
    cdef const cnp.int64_t[::1] z = np.ascontiguousarray(zs, dtype=np.int64).ravel()
    cdef Py_ssize_t m = x.shape[0]
    phase_arr = np.empty((m, m), dtype=np.uint8)
    xr_arr = np.empty((m, m), dtype=np.int64)
    zr_arr = np.empty((m, m), dtype=np.int64)
    cdef cnp.uint8_t[:, ::1] phase = phase_arr
    cdef cnp.int64_t[:, ::1] xr = xr_arr
    cdef cnp.int64_t[:, ::1] zr = zr_arr
    cdef Py_ssize_t j, k
    cdef long long a, b
    cdef int e
    with nogil:
        for j in range(m):
            for k in range(m):
                a = x[j] ^ x[k]
                b = z[j] ^ z[k]
                xr[j, k] = a
                zr[j, k] = b
                e = (hl_popcount(x[j] & z[j]) + hl_popcount(x[k] & z[k])
                     - hl_popcount(a & b) + 2 * hl_popcount(z[j] & x[k]))
                phase[j, k] = <cnp.uint8_t>(((e % 4) + 4) % 4)
    return phase_arr, xr_arr, zr_arr


def pauli_expectations(rho, xs, zs):
    cdef const double complex[:, ::1] r = np.ascontiguousarray(rho, dtype=np.complex128)
    cdef const cnp.int64_t[::1] x = np.ascontiguousarray(xs, dtype=np.int64).ravel()
    cdef const cnp.int64_t[::1] z = np.ascontiguousarray(zs, dtype=np.int64).ravel()
    cdef Py_ssize_t p = x.shape[0]
    cdef Py_ssize_t d = r.shape[0]
    out_arr = np.empty(p, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t i, c
    cdef double re, im
    cdef double complex v
    cdef int ny
    with nogil:
        for i in range(p):
            re = 0.0
            im = 0.0
            for c in range(d):
                v = r[c, c ^ x[i]]
                if hl_popcount(z[i] & c) & 1:
                    re -= v.real
                    im -= v.imag
                else:
                    re += v.real
                    im += v.imag
            ny = hl_popcount(x[i] & z[i]) & 3
            # multiply (re + i im) by i**ny
            if ny == 0:
                out[i] = re + 1j * im
            elif ny == 1:
                out[i] = -im + 1j * re
            elif ny == 2:
                out[i] = -re - 1j * im
            else:
                out[i] = im - 1j * re
    return out_arr


def shadow_accumulate(settings, outcomes, targets):
    cdef const cnp.int8_t[:, ::1] s = np.ascontiguousarray(settings, dtype=np.int8)
    cdef const cnp.int8_t[:, ::1] o = np.ascontiguousarray(outcomes, dtype=np.int8)
    cdef const cnp.int8_t[:, ::1] t = np.ascontiguousarray(targets, dtype=np.int8)
    cdef Py_ssize_t L = s.shape[0]
    cdef Py_ssize_t n = s.shape[1]
    cdef Py_ssize_t m = t.shape[0]
    sums_arr = np.zeros(m, dtype=np.int64)
    counts_arr = np.zeros(m, dtype=np.int64)
    cdef cnp.int64_t[::1] sums = sums_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    supp_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] supp = supp_arr
    cdef Py_ssize_t k, l, q, w, j
    cdef int prod
    cdef bint ok
    with nogil:
        for k in range(m):
            w = 0
            for q in range(n):
                if t[k, q] != 0:
                    supp[w] = q
                    w += 1
            for l in range(L):
                ok = True
                prod = 1
                for j in range(w):
                    q = supp[j]
                    if s[l, q] != t[k, q]:
                        ok = False
                        break
                    prod *= o[l, q]
                if ok:
                    counts[k] += 1
                    sums[k] += prod
    return sums_arr, counts_arr

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def contingency(const cnp.int64_t[::1] a, const cnp.int64_t[::1] b, Py_ssize_t ka, Py_ssize_t kb):
    cdef cnp.ndarray[cnp.int64_t, ndim=2] table = np.zeros((ka, kb), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] t = table
    cdef Py_ssize_t i, n = a.shape[0]
    for i in range(n):
        t[a[i], b[i]] += 1
    return table


def utterance_features(const cnp.int64_t[::1] speakers):
    cdef Py_ssize_t n = speakers.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, 3), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, k, q, start, last_i, n_others
    cdef cnp.int64_t s, t
    cdef bint seen
    cdef cnp.int64_t[::1] buf = np.empty(max(n, 1), dtype=np.int64)
    for i in range(n):
        s = speakers[i]
        last_i = -1
        for k in range(i - 1, -1, -1):
            if speakers[k] == s:
                last_i = k
                break
        start = last_i + 1
        n_others = 0
        for k in range(start, i):
            t = speakers[k]
            if t == s:
                continue
            seen = False
            for q in range(n_others):
                if buf[q] == t:
                    seen = True
                    break
            if not seen:
                buf[n_others] = t
                n_others += 1
        o[i, 0] = n_others
        o[i, 1] = (i - last_i) if last_i >= 0 else n
        o[i, 2] = 1.0 if (i + 1 < n and speakers[i + 1] == s) else 0.0
    return out


cdef Py_ssize_t _overlap(const cnp.int64_t[::1] ids, Py_ssize_t a0, Py_ssize_t a1, Py_ssize_t b0, Py_ssize_t b1) nogil:
    # both ranges sorted and unique
    cdef Py_ssize_t c = 0
    while a0 < a1 and b0 < b1:
        if ids[a0] == ids[b0]:
            c += 1
            a0 += 1
            b0 += 1
        elif ids[a0] < ids[b0]:
            a0 += 1
        else:
            b0 += 1
    return c


def pair_features(const cnp.int64_t[::1] speakers, const cnp.int64_t[::1] turns,
                  const cnp.int64_t[::1] tok_indptr, const cnp.int64_t[::1] tok_ids,
                  const cnp.int64_t[::1] ui, const cnp.int64_t[::1] uj,
                  const double[:, ::1] ufeat, bint dup):
    cdef Py_ssize_t m = ui.shape[0]
    cdef Py_ssize_t width = 12 if dup else 9
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((m, width), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, i, j, k, lo, hi, c
    cdef cnp.int64_t si, sj
    cdef bint between
    with nogil:
        for r in range(m):
            i = ui[r]
            j = uj[r]
            for c in range(3):
                o[r, c] = ufeat[i, c]
            o[r, 3] = _overlap(tok_ids, tok_indptr[i], tok_indptr[i + 1], tok_indptr[j], tok_indptr[j + 1])
            lo = i if i < j else j
            hi = j if i < j else i
            o[r, 4] = hi - lo
            si = speakers[i]
            sj = speakers[j]
            between = False
            for k in range(lo + 1, hi):
                if speakers[k] == si or speakers[k] == sj:
                    between = True
                    break
            o[r, 5] = 1.0 if between else 0.0
            o[r, 6] = 1.0 if turns[i] == turns[j] else 0.0
            o[r, 7] = 1.0 if si == sj else 0.0
            o[r, 8] = 1.0 if i == j else 0.0
            if dup:
                for c in range(3):
                    o[r, 9 + c] = ufeat[j, c]
    return out

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for similarity scoring and NFM match counting.

Mirrors ``collabloc._kernels_py`` exactly; the two are checked against each
other in the test suite.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def batch_cosine(const cnp.int64_t[::1] q_ids, const double[::1] q_mw,
                 const cnp.int64_t[::1] ids, const double[::1] mw,
                 const cnp.int64_t[::1] offsets):
    """Cosine similarity of one sparse query against every packed row.

    Rows are slices ``offsets[r]:offsets[r + 1]`` of ``ids``/``mw``; ids are
    sorted ascending within each row and within the query.
    """
    cdef Py_ssize_t n_rows = offsets.shape[0] - 1
    cdef Py_ssize_t nq = q_ids.shape[0]
    cdef Py_ssize_t r, i, j, end
    cdef double dot, qn, rn, v
    out = np.zeros(n_rows, dtype=np.float64)
    cdef double[::1] res = out

    qn = 0.0
    for i in range(nq):
        qn += q_mw[i] * q_mw[i]
    qn = sqrt(qn)

    for r in range(n_rows):
        i = 0
        j = offsets[r]
        end = offsets[r + 1]
        dot = 0.0
        rn = 0.0
        for j in range(offsets[r], end):
            rn += mw[j] * mw[j]
        rn = sqrt(rn)
        j = offsets[r]
        while i < nq and j < end:
            if q_ids[i] == ids[j]:
                dot += q_mw[i] * mw[j]
                i += 1
                j += 1
            elif q_ids[i] < ids[j]:
                i += 1
            else:
                j += 1
        if dot <= 0.0 or qn == 0.0 or rn == 0.0:
            res[r] = 0.0
        else:
            v = dot / (qn * rn)
            res[r] = 1.0 if v > 1.0 else v
    return out


def match_counts(const cnp.int64_t[:, ::1] train, const cnp.int64_t[::1] query):
    """Per-row count of columns whose code equals the query's code."""
    cdef Py_ssize_t m = train.shape[0]
    cdef Py_ssize_t f = train.shape[1]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t c
    out = np.zeros(m, dtype=np.int64)
    cdef cnp.int64_t[::1] res = out
    for i in range(m):
        c = 0
        for j in range(f):
            if train[i, j] == query[j]:
                c += 1
        res[i] = c
    return out

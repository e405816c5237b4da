# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Levenshtein kernel. Same contract as ``_align_py.align_codes``."""
from libc.stdlib cimport malloc, free


def align_codes(ref, hyp):
    cdef Py_ssize_t n = len(ref), m = len(hyp)
    cdef Py_ssize_t width = m + 1
    cdef Py_ssize_t i, j, row, prev
    cdef long long r
    cdef int best, up, left, cur, diag
    cdef long long *a = <long long *> malloc((n + 1) * sizeof(long long))
    cdef long long *b = <long long *> malloc((m + 1) * sizeof(long long))
    cdef int *d = <int *> malloc((n + 1) * width * sizeof(int))
    cdef unsigned char *ops = <unsigned char *> malloc(n + m + 1)
    cdef Py_ssize_t k = 0
    cdef dict vocab = {}
    if a == NULL or b == NULL or d == NULL or ops == NULL:
        free(a); free(b); free(d); free(ops)
        raise MemoryError()
    try:
        # intern items so the DP compares machine integers
        for i in range(n):
            a[i] = vocab.setdefault(ref[i], len(vocab))
        for j in range(m):
            b[j] = vocab.setdefault(hyp[j], len(vocab))
        for j in range(width):
            d[j] = <int> j
        for i in range(1, n + 1):
            row = i * width
            prev = row - width
            d[row] = <int> i
            r = a[i - 1]
            for j in range(1, width):
                best = d[prev + j - 1] + (0 if r == b[j - 1] else 1)
                up = d[prev + j] + 1
                if up < best:
                    best = up
                left = d[row + j - 1] + 1
                if left < best:
                    best = left
                d[row + j] = best

        i = n
        j = m
        while i > 0 or j > 0:
            cur = d[i * width + j]
            if i > 0 and j > 0:
                diag = d[(i - 1) * width + j - 1]
                if a[i - 1] == b[j - 1] and diag == cur:
                    ops[k] = 0
                    k += 1
                    i -= 1
                    j -= 1
                    continue
                if diag + 1 == cur:
                    ops[k] = 1
                    k += 1
                    i -= 1
                    j -= 1
                    continue
            if i > 0 and d[(i - 1) * width + j] + 1 == cur:
                ops[k] = 2
                k += 1
                i -= 1
            else:
                ops[k] = 3
                k += 1
                j -= 1
        out = bytes(ops[:k])[::-1]
        return d[n * width + m], out
    finally:
        free(a)
        free(b)
        free(d)
        free(ops)

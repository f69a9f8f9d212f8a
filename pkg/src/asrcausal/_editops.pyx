# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled edit-distance kernel.

Same contract and tie-break as _editops_py.align_counts: minimum-cost
word alignment, ties resolved by fewer substitutions, then fewer
deletions.  The three counters are packed into one 64-bit key
(total, subs, dels in 20-bit fields) so each DP cell is a single
integer compare; 20 bits bounds sequence lengths at 2**20 tokens.
"""

from libc.stdlib cimport malloc, free

BACKEND = "compiled"

DEF SHIFT = 20
DEF MASK = (1 << SHIFT) - 1


def align_counts(ref, hyp):
    """Return (substitutions, deletions, insertions) for ref vs hyp tokens."""
    cdef Py_ssize_t n = len(ref)
    cdef Py_ssize_t m = len(hyp)
    if n >= MASK or m >= MASK:
        raise OverflowError("sequence too long for compiled kernel")

    # Intern tokens to ints so the inner loop compares C longs.
    cdef dict ids = {}
    cdef long *rid = <long *> malloc(n * sizeof(long))
    cdef long *hid = <long *> malloc(m * sizeof(long))
    cdef unsigned long long *prev = <unsigned long long *> malloc(
        (m + 1) * sizeof(unsigned long long))
    cdef unsigned long long *cur = <unsigned long long *> malloc(
        (m + 1) * sizeof(unsigned long long))
    if rid == NULL or hid == NULL or prev == NULL or cur == NULL:
        free(rid); free(hid); free(prev); free(cur)
        raise MemoryError()

    cdef Py_ssize_t i, j
    cdef long r
    cdef unsigned long long best, cand, diag, up, left
    # per-operation increments on the packed (total, subs, dels) key
    cdef unsigned long long SUB = (1ULL << (2 * SHIFT)) + (1ULL << SHIFT)
    cdef unsigned long long DEL = (1ULL << (2 * SHIFT)) + 1ULL
    cdef unsigned long long INS = 1ULL << (2 * SHIFT)

    try:
        for i in range(n):
            rid[i] = ids.setdefault(ref[i], len(ids))
        for j in range(m):
            hid[j] = ids.setdefault(hyp[j], len(ids))

        for j in range(m + 1):
            prev[j] = (<unsigned long long> j) * INS
        for i in range(1, n + 1):
            cur[0] = (<unsigned long long> i) * DEL
            r = rid[i - 1]
            for j in range(1, m + 1):
                diag = prev[j - 1] if r == hid[j - 1] else prev[j - 1] + SUB
                up = prev[j] + DEL
                left = cur[j - 1] + INS
                best = diag
                if up < best:
                    best = up
                if left < best:
                    best = left
                cur[j] = best
            prev, cur = cur, prev
        best = prev[m]
    finally:
        free(rid); free(hid); free(prev); free(cur)

    cdef unsigned long long total = best >> (2 * SHIFT)
    cdef unsigned long long subs = (best >> SHIFT) & MASK
    cdef unsigned long long dels = best & MASK
    return int(subs), int(dels), int(total - subs - dels)

"""Pure-Python edit-distance kernel (fallback for the compiled version).

Computes the (substitutions, deletions, insertions) decomposition of a
minimum-cost word alignment.  Because minimum-cost alignments are not
unique, ties are broken by preferring fewer substitutions, then fewer
deletions; this makes the decomposition deterministic.  The tie-break is
implemented as a lexicographic minimisation of (total, subs, dels),
which is valid in the DP because lexicographic order on count vectors is
translation invariant.
"""

BACKEND = "python"


def align_counts(ref, hyp):
    """Return (substitutions, deletions, insertions) for ref vs hyp tokens."""
    n, m = len(ref), len(hyp)
    # prev[j] = (total, subs, dels) of the best alignment of ref[:i], hyp[:j]
    prev = [(j, 0, 0) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, 0, i)]
        r = ref[i - 1]
        for j in range(1, m + 1):
            pt, ps, pd = prev[j - 1]
            if r == hyp[j - 1]:
                best = (pt, ps, pd)
            else:
                best = (pt + 1, ps + 1, pd)
            ut, us, ud = prev[j]
            cand = (ut + 1, us, ud + 1)
            if cand < best:
                best = cand
            lt, ls, ld = cur[j - 1]
            cand = (lt + 1, ls, ld)
            if cand < best:
                best = cand
            cur.append(best)
        prev = cur
    total, subs, dels = prev[m]
    return subs, dels, total - subs - dels

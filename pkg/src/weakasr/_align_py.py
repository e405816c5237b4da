"""Pure-Python Levenshtein kernel; fallback for the compiled ``_align_core``.

Both kernels share one contract: given two sequences of hashable items return
``(cost, ops)`` where ``ops`` is a ``bytes`` of op codes in forward order
(0 match, 1 substitute, 2 delete, 3 insert). The backtrace runs from the
end and prefers match > substitute > delete > insert.
"""

MATCH, SUB, DEL, INS = 0, 1, 2, 3


def align_codes(ref, hyp):
    n, m = len(ref), len(hyp)
    width = m + 1
    d = list(range(width)) + [0] * (n * width)
    for i in range(1, n + 1):
        row = i * width
        prev = row - width
        d[row] = i
        r = ref[i - 1]
        for j in range(1, width):
            best = d[prev + j - 1] + (0 if r == hyp[j - 1] else 1)
            up = d[prev + j] + 1
            if up < best:
                best = up
            left = d[row + j - 1] + 1
            if left < best:
                best = left
            d[row + j] = best

    ops = bytearray()
    i, j = n, m
    while i > 0 or j > 0:
        cur = d[i * width + j]
        if i > 0 and j > 0:
            diag = d[(i - 1) * width + j - 1]
            if ref[i - 1] == hyp[j - 1] and diag == cur:
                ops.append(MATCH)
                i -= 1
                j -= 1
                continue
            if diag + 1 == cur:
                ops.append(SUB)
                i -= 1
                j -= 1
                continue
        if i > 0 and d[(i - 1) * width + j] + 1 == cur:
            ops.append(DEL)
            i -= 1
        else:
            ops.append(INS)
            j -= 1
    ops.reverse()
    return d[n * width + m], bytes(ops)

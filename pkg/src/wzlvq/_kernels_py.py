"""Pure-numpy versions of the hot loops.

Same signatures and results as the compiled ``_kernels`` module; used when
the extension is not built or when ``WZLVQ_PURE=1`` is set.
"""

import numpy as np


def nearest_box(x, basis, inv, offsets, tol):
    """Closest lattice coordinates by scanning ``offsets`` around rounded ``inv @ x``.

    ``offsets`` must be in lexicographic order; a later candidate replaces the
    incumbent only when it is closer by more than ``tol``, so ties resolve to
    the lexicographically smallest coordinate vector.
    """
    x = np.asarray(x, dtype=np.float64)
    c0 = np.floor(x @ inv.T + 0.5).astype(np.int64)
    best = np.full(x.shape[0], np.inf)
    best_c = c0.copy()
    for off in offsets:
        cand = c0 + off
        diff = x - cand @ basis.T
        d = np.einsum("ij,ij->i", diff, diff)
        better = d < best - tol
        best = np.where(better, d, best)
        best_c[better] = cand[better]
    return best_c


def nearest_codebook(x, codebook):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0], dtype=np.int64)
    step = max(1, (1 << 22) // max(1, codebook.size))
    for lo in range(0, x.shape[0], step):
        diff = x[lo:lo + step, None, :] - codebook[None, :, :]
        d = np.einsum("ijk,ijk->ij", diff, diff)
        out[lo:lo + step] = np.argmin(d, axis=1)
    return out

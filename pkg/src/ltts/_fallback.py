"""Pure numpy implementations of the hot TT kernels.

Same signatures as the compiled ``_kernels`` module.  Cores travel packed:
``flat`` holds every core in C order, ``offsets[k]`` is where core ``k``
starts and ``ranks`` is ``(1, r_1, ..., r_{N-1}, 1)``.
"""

import numpy as np


def _factors(x, m):
    v = np.empty(np.shape(x) + (m,))
    v[..., 0] = 1.0
    for a in range(1, m):
        v[..., a] = v[..., a - 1] * x / a
    return v


def tt_eval_point(flat, offsets, ranks, m, xi):
    # two small dots per core; tensordot's setup cost dominates at these sizes
    u = np.ones(1)
    v = np.empty(m)
    v[0] = 1.0
    for k in range(len(ranks) - 1):
        for a in range(1, m):
            v[a] = v[a - 1] * xi[k] / a
        G = flat[offsets[k]:offsets[k + 1]].reshape(ranks[k], m * ranks[k + 1])
        u = v @ (u @ G).reshape(m, ranks[k + 1])
    return float(u[0])


def tt_eval_batch(flat, offsets, ranks, m, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    U = np.ones((X.shape[0], 1))
    for k in range(len(ranks) - 1):
        r0, r1 = ranks[k], ranks[k + 1]
        G = flat[offsets[k]:offsets[k + 1]].reshape(r0, m, r1)
        U = contract_left(U, G, _factors(X[:, k], m))
    return U[:, 0].copy()


def contract_left(L, core, V):
    """``out[s, j] = sum_{i,a} L[s, i] V[s, a] core[i, a, j]``."""
    return np.einsum("si,sa,iaj->sj", L, V, core, optimize=True)


def contract_right(R, core, V):
    """``out[s, i] = sum_{a,j} core[i, a, j] V[s, a] R[s, j]``."""
    return np.einsum("iaj,sa,sj->si", core, V, R, optimize=True)

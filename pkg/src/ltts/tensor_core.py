"""Dense box tensors, unfoldings and multi-index combinatorics.

Dense tensors are plain C-ordered numpy arrays of shape ``(p+1,)*N`` (last
index fastest), so every unfolding is a reshape.  They only exist as small-N
oracles; :func:`check_dense_cap` guards every allocation path.
"""

from __future__ import annotations

import itertools
from math import comb

import numpy as np

DENSE_CAP = 10**7
_INT64_MAX = 2**63 - 1


class DenseCapError(ValueError):
    """Requested dense tensor exceeds the configured entry cap."""


def check_dense_cap(N: int, m: int, cap: int | None = None) -> int:
    """Return ``m**N`` or raise if it exceeds ``cap`` (default :data:`DENSE_CAP`)."""
    cap = DENSE_CAP if cap is None else cap
    size = m**N
    if size > cap:
        raise DenseCapError(f"dense tensor with {m}^{N} = {size} entries exceeds cap {cap}")
    return size


def _checked(value: int) -> int:
    if value > _INT64_MAX:
        raise OverflowError(f"combinatorial count {value} does not fit in 64 bits")
    return value


def count_degree_exactly(N: int, m: int) -> int:
    """Number of multi-indices of length ``N`` with total degree exactly ``m``."""
    if N < 1 or m < 0:
        raise ValueError("need N >= 1 and m >= 0")
    return _checked(comb(N + m - 1, m))


def simplex_size(N: int, p: int) -> int:
    return _checked(comb(N + p, p))


def simplex_indices(N: int, p: int) -> list[tuple[int, ...]]:
    """All ``alpha`` in ``{0..p}^N`` with ``|alpha| <= p``, lexicographic order."""
    if N < 1 or p < 0:
        raise ValueError("need N >= 1 and p >= 0")
    out: list[tuple[int, ...]] = []

    def rec(prefix: list[int], budget: int) -> None:
        if len(prefix) == N:
            out.append(tuple(prefix))
            return
        for a in range(budget + 1):
            prefix.append(a)
            rec(prefix, budget - a)
            prefix.pop()

    rec([], p)
    return out


def box_indices(N: int, p: int) -> np.ndarray:
    """All of ``{0..p}^N`` as an ``((p+1)^N, N)`` int array in row-major order."""
    check_dense_cap(N, p + 1)
    return np.array(list(itertools.product(range(p + 1), repeat=N)), dtype=np.int64).reshape(-1, N)


def simplex_mask(N: int, p: int) -> np.ndarray:
    """Boolean box-shaped tensor, True where ``|alpha| <= p``."""
    check_dense_cap(N, p + 1)
    total = np.zeros((p + 1,) * N, dtype=np.int64)
    for k in range(N):
        shape = [1] * N
        shape[k] = p + 1
        total = total + np.arange(p + 1).reshape(shape)
    return total <= p


def unfold(A: np.ndarray, k: int) -> np.ndarray:
    """k-th unfolding: first ``k`` modes index rows, the rest index columns."""
    N = A.ndim
    if not 1 <= k <= N - 1:
        raise ValueError(f"split position k={k} outside 1..{N - 1}")
    rows = int(np.prod(A.shape[:k]))
    return A.reshape(rows, -1)


def fold(M: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`unfold` for any split."""
    return np.reshape(M, shape)


def frobenius_norm(A: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(A, dtype=np.float64))))


def inner_product(A: np.ndarray, B: np.ndarray) -> float:
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.dot(A.ravel(), B.ravel()))

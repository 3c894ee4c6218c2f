"""Taylor data from a black box: FD stencils, the embedded coefficient tensor,
Taylor evaluation, and the truncation / coefficient-norm bounds."""

from __future__ import annotations

import itertools
import json
import threading
from dataclasses import dataclass
from math import factorial, prod
from typing import Callable

import numpy as np

from .features import PatchSpec, factor_vector
from .tensor_core import check_dense_cap, count_degree_exactly, simplex_indices


class BlackBoxError(RuntimeError):
    """The black box returned a non-finite value."""


class BlackBox:
    """Counted wrapper around ``x -> g(x)``.

    ``batch_fn`` (rows in, values out) is used when given; each row still
    counts as one query.  ``g_max`` is checked on every return value.
    """

    def __init__(self, fn: Callable, batch_fn: Callable | None = None,
                 g_max: float | None = None, reentrant: bool = False):
        self.fn = fn
        self.batch_fn = batch_fn
        self.g_max = g_max
        self.reentrant = reentrant
        self._count = 0
        self._lock = threading.Lock()

    @property
    def queries(self) -> int:
        return self._count

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    def _check(self, y: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(y)):
            raise BlackBoxError("black box returned a non-finite value")
        if self.g_max is not None and np.any(np.abs(y) > self.g_max * (1 + 1e-12)):
            raise BlackBoxError(f"black box value exceeds declared bound {self.g_max}")
        return y

    def __call__(self, x) -> float:
        with self._lock:
            self._count += 1
        return float(self._check(np.asarray(self.fn(np.asarray(x, dtype=np.float64)), dtype=np.float64)))

    def batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        with self._lock:
            self._count += X.shape[0]
        if self.batch_fn is not None:
            y = np.asarray(self.batch_fn(X), dtype=np.float64)
        else:
            y = np.array([self.fn(x) for x in X], dtype=np.float64)
        return self._check(y)


def default_step(r: float) -> float:
    return 1e-2 * max(r, 1e-3)


def fd_derivatives(g: BlackBox, x0, p: int, h: float) -> dict[tuple[int, ...], float]:
    """Central-difference estimates of ``d^alpha g(x0)`` for all ``|alpha| <= p <= 2``.

    Queries are deduplicated, so ``p = 2`` costs ``1 + 2N + 2N(N-1)`` calls.
    """
    if p not in (0, 1, 2):
        raise ValueError("finite-difference stencils are implemented for p <= 2")
    if not h > 0:
        raise ValueError("step h must be positive")
    x0 = np.asarray(x0, dtype=np.float64)
    N = len(x0)
    E = np.eye(N) * h

    keys: list[tuple] = [()]
    if p >= 1:
        keys += [((i, s),) for i in range(N) for s in (1, -1)]
    if p >= 2:
        keys += [((i, si), (j, sj)) for i in range(N) for j in range(i + 1, N)
                 for si in (1, -1) for sj in (1, -1)]
    points = np.array([x0 + sum((s * E[i] for i, s in key), np.zeros(N)) for key in keys])
    values = dict(zip(keys, g.batch(points)))

    f0 = values[()]
    out = {(0,) * N: f0}
    if p >= 1:
        for i in range(N):
            a = [0] * N
            a[i] = 1
            out[tuple(a)] = (values[((i, 1),)] - values[((i, -1),)]) / (2 * h)
    if p >= 2:
        for i in range(N):
            a = [0] * N
            a[i] = 2
            out[tuple(a)] = (values[((i, 1),)] - 2 * f0 + values[((i, -1),)]) / h**2
        for i in range(N):
            for j in range(i + 1, N):
                a = [0] * N
                a[i] = a[j] = 1
                out[tuple(a)] = (values[((i, 1), (j, 1))] - values[((i, 1), (j, -1))]
                                 - values[((i, -1), (j, 1))] + values[((i, -1), (j, -1))]) / (4 * h**2)
    return {a: out[a] for a in simplex_indices(N, p)}


# Per-axis central stencils (offset multiples of h, weights before dividing by h^order).
_STENCILS = {
    0: ((0,), (1.0,)),
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
}


def fd_derivative_at(g: Callable[[np.ndarray], np.ndarray], x: np.ndarray, alpha, h: float) -> np.ndarray:
    """Tensor-product central difference of order ``alpha`` (entries <= 3) at rows of ``x``.

    ``g`` is a batch function.  Used for grid estimates of derivative budgets.
    """
    x = np.atleast_2d(x)
    axes = [(i, a) for i, a in enumerate(alpha) if a > 0]
    total = np.zeros(x.shape[0])
    grids = [list(zip(*_STENCILS[a])) for _, a in axes]
    for combo in itertools.product(*grids):
        shift = np.zeros(x.shape[1])
        w = 1.0
        for (i, _), (off, wt) in zip(axes, combo):
            shift[i] = off * h
            w *= wt
        total += w * g(x + shift)
    return total / h ** sum(alpha)


@dataclass(frozen=True)
class SmoothnessBudget:
    """Sup-bounds on derivatives over the patch.

    ``C_le_p`` covers orders ``0..p``; ``C_p1`` covers order ``p+1``.
    """

    C_le_p: float
    C_p1: float
    provenance: str = "exact"

    def __post_init__(self):
        if not (np.isfinite(self.C_le_p) and np.isfinite(self.C_p1)) or self.C_le_p < 0 or self.C_p1 < 0:
            raise ValueError("budget constants must be finite and nonnegative")
        if self.provenance not in ("exact", "estimated"):
            raise ValueError("provenance is 'exact' or 'estimated'")

    def xi_bound(self, r: float, p: int) -> float:
        """Order ``p+1`` bound for the normalised function ``f(xi) = g(x0 + r xi)``."""
        return r ** (p + 1) * self.C_p1


@dataclass
class CoefficientTensor:
    """``r^|alpha| d^alpha g(x0)`` on the total-degree simplex, zero elsewhere."""

    N: int
    p: int
    r: float
    x0: tuple[float, ...]
    entries: dict[tuple[int, ...], float]

    def entry(self, alpha) -> float:
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) > self.p:
            return 0.0
        return self.entries[alpha]

    def densify(self) -> np.ndarray:
        check_dense_cap(self.N, self.p + 1)
        A = np.zeros((self.p + 1,) * self.N)
        for a, v in self.entries.items():
            A[a] = v
        return A

    def to_dict(self) -> dict:
        return {"N": self.N, "p": self.p, "r": self.r, "x0": list(self.x0),
                "entries": [[list(a), v] for a, v in self.entries.items()]}

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientTensor":
        return cls(d["N"], d["p"], d["r"], tuple(d["x0"]),
                   {tuple(a): float(v) for a, v in d["entries"]})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "CoefficientTensor":
        return cls.from_dict(json.loads(s))


def embed(derivs: dict, patch: PatchSpec) -> CoefficientTensor:
    N, p, r = patch.N, patch.p, patch.r
    entries = {}
    for a in simplex_indices(N, p):
        if a not in derivs:
            raise KeyError(f"derivative for multi-index {a} is missing")
        entries[a] = r ** sum(a) * float(derivs[a])
    return CoefficientTensor(N, p, r, patch.x0, entries)


def taylor_eval(A_star: CoefficientTensor, xi) -> float:
    """``<A*, Phi(xi)>`` summed over the simplex support only."""
    xi = np.asarray(xi, dtype=np.float64)
    if np.any(np.abs(xi) > 1 + 1e-12):
        raise ValueError("normalised point outside [-1, 1]^N")
    V = [factor_vector(float(x), A_star.p) for x in xi]
    total = 0.0
    for a, v in A_star.entries.items():
        total += v * prod(V[i][ai] for i, ai in enumerate(a))
    return total


def taylor_eval_batch(A_star: CoefficientTensor, XI) -> np.ndarray:
    from .features import factor_matrix

    XI = np.atleast_2d(np.asarray(XI, dtype=np.float64))
    V = factor_matrix(XI, A_star.p)  # (n, N, p+1)
    out = np.zeros(XI.shape[0])
    for a, v in A_star.entries.items():
        term = np.full(XI.shape[0], v)
        for i, ai in enumerate(a):
            if ai:
                term *= V[:, i, ai]
        out += term
    return out


def truncation_bound(budget: SmoothnessBudget, r: float, N: int, p: int) -> float:
    return budget.C_p1 * r ** (p + 1) * N ** (p + 1) / factorial(p + 1)


def lambda_star(budget: SmoothnessBudget, r: float, N: int, p: int) -> float:
    s = sum(count_degree_exactly(N, m) * r ** (2 * m) for m in range(p + 1))
    return budget.C_le_p * float(np.sqrt(s))


def estimate_budget(g: BlackBox, patch: PatchSpec, density: int = 3,
                    safety: float = 1.5, h: float | None = None) -> SmoothnessBudget:
    """Grid maxima of FD derivative magnitudes, times ``safety``; flagged estimated.

    Orders ``0..p+1`` are estimated on a ``density^N`` grid including the
    patch corners; needs ``p <= 2`` since per-axis stencils stop at order 3.
    """
    p, N = patch.p, patch.N
    if p > 2:
        raise ValueError("FD budget estimation supports p <= 2")
    h = default_step(patch.r) if h is None else h
    axis = np.linspace(-patch.r, patch.r, density) if density > 1 else np.zeros(1)
    grid = np.array(list(itertools.product(axis, repeat=N))) + patch.center
    maxima = []
    for order in range(p + 2):
        best = 0.0
        for alpha in itertools.product(range(order + 1), repeat=N):
            if sum(alpha) != order:
                continue
            vals = fd_derivative_at(g.batch, grid, alpha, h)
            best = max(best, float(np.max(np.abs(vals))))
        maxima.append(best)
    return SmoothnessBudget(safety * max(maxima[: p + 1]), safety * maxima[p + 1], "estimated")

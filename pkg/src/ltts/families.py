"""Analytic test functions with exact derivatives at the origin.

Seven kinds: ExpSum, ProductCos, PolyMatched, PolyHigher, QuadraticForm,
Trig and Gauss.  Besides exact Taylor data at ``x0 = 0`` every instance
exposes :meth:`FamilyInstance.derivative_bound`, a rigorous sup-bound of
``|d^alpha f|`` over the cube ``||x||_inf <= r``; certificates built from
those bounds are exact rather than estimated.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import exp, factorial, prod

import numpy as np

from .tensor_core import box_indices, check_dense_cap, simplex_indices, simplex_mask

KINDS = ("ExpSum", "ProductCos", "PolyMatched", "PolyHigher", "QuadraticForm", "Trig", "Gauss")
TRIG_TERMS = 8
TRIG_MAX_L1 = 3


def _cos_deriv(a: int, c: float) -> float:
    """a-th derivative of cos(c x) at 0."""
    if a % 2:
        return 0.0
    return (-1.0) ** (a // 2) * c**a


def _multi_factorial(alpha) -> int:
    return prod(factorial(int(a)) for a in alpha)


@dataclass
class FamilyInstance:
    kind: str
    params: dict
    seed: int | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}; expected one of {KINDS}")
        self.params = {k: np.asarray(v, dtype=np.int64 if k in ("exponents", "m") else np.float64)
                       for k, v in self.params.items()}

    @property
    def N(self) -> int:
        P = self.params
        if "c_vec" in P:
            return len(P["c_vec"])
        if "exponents" in P:
            return P["exponents"].shape[1]
        if "A" in P:
            return P["A"].shape[0]
        if "m" in P:
            return P["m"].shape[1]
        return P["Q"].shape[0]

    # -- values -------------------------------------------------------------

    def evaluate(self, x) -> np.ndarray | float:
        """Closed-form value at one point or at each row of a batch."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        P = self.params
        k = self.kind
        if k == "ExpSum":
            y = np.exp(X @ P["c_vec"])
        elif k == "ProductCos":
            y = np.prod(np.cos(X * P["c_vec"]), axis=1)
        elif k in ("PolyMatched", "PolyHigher"):
            mon = np.prod(X[:, None, :] ** P["exponents"][None, :, :], axis=2)
            y = mon @ P["coefs"]
        elif k == "QuadraticForm":
            y = np.einsum("si,ij,sj->s", X, P["A"], X) + X @ P["b"] + float(P["c"])
        elif k == "Trig":
            terms = np.prod(np.cos(X[:, None, :] * P["m"][None, :, :]), axis=2)
            y = terms @ P["w"]
        else:
            y = np.exp(-0.5 * np.einsum("si,ij,sj->s", X, P["Q"], X))
        return float(y[0]) if single else y

    def __call__(self, x):
        return self.evaluate(x)

    # -- derivatives at the origin -------------------------------------------

    def exact_derivative(self, alpha) -> float:
        alpha = tuple(int(a) for a in alpha)
        if any(a < 0 for a in alpha):
            raise ValueError("multi-index entries must be nonnegative")
        P = self.params
        k = self.kind
        if k == "ExpSum":
            return float(prod(c**a for c, a in zip(P["c_vec"], alpha)))
        if k == "ProductCos":
            return float(prod(_cos_deriv(a, c) for c, a in zip(P["c_vec"], alpha)))
        if k in ("PolyMatched", "PolyHigher"):
            table = self._cache.get("poly")
            if table is None:
                table = {tuple(int(v) for v in e): float(c) for e, c in zip(P["exponents"], P["coefs"])}
                self._cache["poly"] = table
            return _multi_factorial(alpha) * table.get(alpha, 0.0)
        if k == "QuadraticForm":
            deg = sum(alpha)
            if deg == 0:
                return float(P["c"])
            if deg == 1:
                return float(P["b"][alpha.index(1)])
            if deg == 2:
                idx = [i for i, a in enumerate(alpha) for _ in range(a)]
                i, j = idx
                return float(P["A"][i, j] + P["A"][j, i])
            return 0.0
        if k == "Trig":
            return float(sum(w * prod(_cos_deriv(a, m) for m, a in zip(row, alpha))
                             for w, row in zip(P["w"], P["m"])))
        return self._gauss(alpha)

    def _gauss(self, alpha: tuple[int, ...]) -> float:
        """Pairing recursion for ``exp(-x^T Q x / 2)`` at the origin."""
        memo = self._cache.setdefault("gauss", {})
        Q = self.params["Q"]

        def D(a: tuple[int, ...]) -> float:
            if a in memo:
                return memo[a]
            total = sum(a)
            if total == 0:
                val = 1.0
            elif total % 2:
                val = 0.0
            else:
                i = next(t for t, v in enumerate(a) if v > 0)
                b = list(a)
                b[i] -= 1
                val = 0.0
                for j, bj in enumerate(b):
                    if bj == 0:
                        continue
                    c = list(b)
                    c[j] -= 1
                    val -= bj * Q[i, j] * D(tuple(c))
            memo[a] = val
            return val

        return D(alpha)

    def box_tensor(self, p: int) -> np.ndarray:
        """``A_box[alpha] = d^alpha f(0)`` on all of ``{0..p}^N``."""
        N = self.N
        check_dense_cap(N, p + 1)
        vals = np.array([self.exact_derivative(a) for a in box_indices(N, p)])
        return vals.reshape((p + 1,) * N)

    def simplex_tensor(self, p: int) -> np.ndarray:
        """Box tensor with every entry of total degree above ``p`` zeroed."""
        return np.where(simplex_mask(self.N, p), self.box_tensor(p), 0.0)

    def simplex_derivatives(self, p: int) -> dict[tuple[int, ...], float]:
        return {a: self.exact_derivative(a) for a in simplex_indices(self.N, p)}

    # -- rigorous derivative bounds on B(0, r) --------------------------------

    def derivative_bound(self, order: int, r: float) -> float:
        """Upper bound on ``sup_{||x||_inf <= r} max_{|alpha|=order} |d^alpha f(x)|``."""
        P = self.params
        k = self.kind
        if k == "ExpSum":
            c = np.abs(P["c_vec"])
            return float(c.max() ** order * exp(r * c.sum()))
        if k == "ProductCos":
            return float(np.abs(P["c_vec"]).max() ** order)
        if k == "Trig":
            mmax = P["m"].max(axis=1).astype(float)
            return float(np.sum(np.abs(P["w"]) * mmax**order))
        if k == "QuadraticForm":
            A, b, c = P["A"], P["b"], float(P["c"])
            S = np.abs(A + A.T)
            if order == 0:
                return abs(c) + r * np.abs(b).sum() + r * r * np.abs(A).sum()
            if order == 1:
                return float(np.max(np.abs(b) + r * S.sum(axis=1)))
            if order == 2:
                return float(S.max())
            return 0.0
        if k in ("PolyMatched", "PolyHigher"):
            E, a = P["exponents"], np.abs(P["coefs"])
            best = 0.0
            for alpha in _degree_exactly(self.N, order):
                al = np.array(alpha)
                ok = np.all(E >= al, axis=1)
                if not ok.any():
                    continue
                falling = np.array([prod(factorial(int(e)) // factorial(int(e - s)) for e, s in zip(row, al))
                                    for row in E[ok]], dtype=float)
                rest = (E[ok] - al).sum(axis=1)
                best = max(best, float(np.sum(a[ok] * falling * r ** rest)))
            return best
        # Gauss: Cauchy estimate on a polydisc of radius rho, optimised over rho.
        if order == 0:
            return 1.0
        lam = float(np.linalg.eigvalsh(P["Q"]).max())
        N = self.N
        return float(factorial(order) * exp(order / 2) * (lam * N / order) ** (order / 2))

    # -- serialisation ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed,
                "params": {k: v.tolist() for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "FamilyInstance":
        return cls(d["kind"], d["params"], d.get("seed"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "FamilyInstance":
        return cls.from_dict(json.loads(s))


def _degree_exactly(N: int, m: int):
    for alpha in itertools.product(range(m + 1), repeat=N):
        if sum(alpha) == m:
            yield alpha


def _all_exponents(N: int, deg: int) -> np.ndarray:
    return np.array(simplex_indices(N, deg), dtype=np.int64)


def _trig_rows(N: int) -> np.ndarray:
    rows = [m for m in simplex_indices(N, TRIG_MAX_L1) if sum(m) > 0]
    return np.array(rows, dtype=np.int64)


def make_instance(kind: str, N: int, p: int, rng: np.random.Generator,
                  deterministic: bool = False, seed: int | None = None) -> FamilyInstance:
    """Draw one instance; ``deterministic`` gives the all-ones separable baseline."""
    if kind in ("ExpSum", "ProductCos"):
        c = np.ones(N) if deterministic else rng.standard_normal(N)
        return FamilyInstance(kind, {"c_vec": c}, seed)
    if kind in ("PolyMatched", "PolyHigher"):
        deg = p if kind == "PolyMatched" else p + 2
        E = _all_exponents(N, deg)
        return FamilyInstance(kind, {"exponents": E, "coefs": rng.standard_normal(len(E))}, seed)
    if kind == "QuadraticForm":
        A = rng.standard_normal((N, N))
        b = rng.standard_normal(N)
        c = rng.standard_normal()
        return FamilyInstance(kind, {"A": A, "b": b, "c": c}, seed)
    if kind == "Trig":
        rows = _trig_rows(N)
        pick = rng.integers(0, len(rows), size=TRIG_TERMS)
        return FamilyInstance(kind, {"m": rows[pick], "w": rng.standard_normal(TRIG_TERMS)}, seed)
    if kind == "Gauss":
        M = rng.standard_normal((N, N))
        return FamilyInstance(kind, {"Q": M.T @ M + 0.5 * np.eye(N)}, seed)
    raise ValueError(f"unknown family kind {kind!r}")

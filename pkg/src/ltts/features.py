"""Patch normalisation and the factorial feature map.

Each normalised coordinate ``xi`` maps to ``v(xi)_k = xi**k / k!``; the full
feature tensor is the outer product of these vectors and is never formed
outside of test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .tensor_core import check_dense_cap

_SLACK = 1e-12


class OutOfPatchError(ValueError):
    """A point lies outside the patch ``B(x0, r)``."""

    def __init__(self, coordinate: int, value: float, bound: float):
        self.coordinate = coordinate
        self.value = value
        super().__init__(
            f"coordinate {coordinate}: |x - x0|/r = {value:.6g} exceeds {bound:g}"
        )


@dataclass(frozen=True)
class PatchSpec:
    """Centre ``x0``, radius ``r``, Taylor degree ``p`` and rank cap ``chi``."""

    x0: tuple[float, ...]
    r: float
    p: int = 2
    chi: int = 1
    _x0_arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        if not self.r > 0:
            raise ValueError("patch radius must be positive")
        if self.p < 0:
            raise ValueError("degree must be nonnegative")
        if self.chi < 1:
            raise ValueError("rank cap must be at least 1")
        object.__setattr__(self, "_x0_arr", np.asarray(self.x0, dtype=np.float64))

    @property
    def N(self) -> int:
        return len(self.x0)

    @property
    def center(self) -> np.ndarray:
        return self._x0_arr.copy()

    def to_dict(self) -> dict:
        return {"x0": list(self.x0), "r": self.r, "p": self.p, "chi": self.chi}

    @classmethod
    def from_dict(cls, d: dict) -> "PatchSpec":
        return cls(tuple(d["x0"]), float(d["r"]), int(d.get("p", 2)), int(d.get("chi", 1)))


def normalize(x, patch: PatchSpec) -> np.ndarray:
    """Map ``x`` (one point or a batch of rows) to ``xi = (x - x0)/r``."""
    xi = (np.asarray(x, dtype=np.float64) - patch._x0_arr) / patch.r
    over = np.abs(xi) > 1.0 + _SLACK
    if np.any(over):
        flat = np.argwhere(over)[0]
        coord = int(flat[-1])
        raise OutOfPatchError(coord, float(np.abs(xi[tuple(flat)])), 1.0)
    return np.clip(xi, -1.0, 1.0)


def in_patch(x, patch: PatchSpec) -> np.ndarray:
    """Row-wise membership test with the same slack as :func:`normalize`."""
    xi = (np.atleast_2d(np.asarray(x, dtype=np.float64)) - patch._x0_arr) / patch.r
    return np.all(np.abs(xi) <= 1.0 + _SLACK, axis=1)


def factor_vector(xi: float, p: int) -> np.ndarray:
    """``(xi**k / k!)`` for ``k = 0..p`` via the running-product recurrence."""
    if abs(xi) > 1.0 + _SLACK:
        raise ValueError(f"normalised coordinate {xi} outside [-1, 1]")
    v = np.empty(p + 1)
    v[0] = 1.0
    for k in range(1, p + 1):
        v[k] = v[k - 1] * xi / k
    return v


def factor_matrix(xi: np.ndarray, p: int) -> np.ndarray:
    """Vectorised factor vectors: ``(..., p+1)`` array for an array of coordinates."""
    xi = np.asarray(xi, dtype=np.float64)
    V = np.empty(xi.shape + (p + 1,))
    V[..., 0] = 1.0
    for k in range(1, p + 1):
        V[..., k] = V[..., k - 1] * xi / k
    return V


def phi_entry(xi, alpha) -> float:
    """One entry of the feature tensor, ``prod_i xi_i**alpha_i / alpha_i!``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    out = 1.0
    for x, a in zip(xi, alpha):
        out *= factor_vector(float(x), int(a))[int(a)]
    return out


def dense_features(xi, p: int) -> np.ndarray:
    """Full ``(p+1)^N`` feature tensor.  Test oracle only."""
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    check_dense_cap(len(xi), p + 1)
    out = np.ones(())
    for x in xi:
        out = np.multiply.outer(out, factor_vector(float(x), p))
    return out


@lru_cache(maxsize=None)
def bessel_constant() -> float:
    """``K = sqrt(I0(2)) = sqrt(sum_k 1/(k!)^2)``, summed until terms drop below 1e-18."""
    total, term, k = 0.0, 1.0, 0
    while term >= 1e-18:
        total += term
        k += 1
        term /= k * k
    return float(np.sqrt(total))


def feature_norm_bound(N: int) -> float:
    """``K**N`` by repeated multiplication; bounds ``||Phi(xi)||_2`` on the cube."""
    K = bessel_constant()
    out = 1.0
    for _ in range(N):
        out *= K
    return out

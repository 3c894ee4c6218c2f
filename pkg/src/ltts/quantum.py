"""Desk-scale statevector simulator for a frozen QCNN-style classifier.

Layout (version 1) on ``q`` qubits, ``3q + 2`` frozen angles:

* embedding ``RY(x_i)`` on qubit ``i`` for ``i < D``;
* block 1: ``RY, RZ`` on every qubit, then a CNOT ring ``0->1->...->q-1->0``;
* block 2: ``RY`` on every qubit, then the same ring;
* pooling: ``CNOT(k -> 0)`` for ``k = 1..q-1``, then ``RY`` and ``RX`` on qubit 0;
* output ``<Z_0>``.

Every input enters through exactly one ``RY`` gate, so by the parameter-shift
identity each partial derivative is a half-difference of shifted outputs and
``|d^alpha g| <= ||Z_0|| = 1`` for every multi-index.  That gives exact
smoothness budgets for the oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

LAYOUT_VERSION = 1
MAX_QUBITS = 12
OBSERVABLE_NORM = 1.0
# label bound G_max + sigma with sigma <= 2 ||O||: conservative default for M
Y_MAX_DEFAULT = 3.0 * OBSERVABLE_NORM


class NormError(RuntimeError):
    pass


def _pair_indices(q: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(2**q)
    i0 = idx[(idx >> k) & 1 == 0]
    return i0, i0 | (1 << k)


def _cnot_indices(q: int, c: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(2**q)
    i0 = idx[((idx >> c) & 1 == 1) & ((idx >> t) & 1 == 0)]
    return i0, i0 | (1 << t)


def _ry(theta):
    c, s = np.cos(np.asarray(theta) / 2), np.sin(np.asarray(theta) / 2)
    return c, -s, s, c


def _rz(theta):
    ph = np.exp(-0.5j * np.asarray(theta))
    return ph, 0.0, 0.0, np.conj(ph)


def _rx(theta):
    c, s = np.cos(np.asarray(theta) / 2), np.sin(np.asarray(theta) / 2)
    return c, -1j * s, -1j * s, c


@dataclass(frozen=True)
class QcnnModel:
    q: int = 6
    seed: int = 2024
    theta: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.q <= MAX_QUBITS:
            raise ValueError(f"qubit count must be in 1..{MAX_QUBITS}")
        if self.theta is None:
            theta = np.random.default_rng(self.seed).uniform(-np.pi, np.pi, size=self.n_params)
        else:
            theta = np.asarray(self.theta, dtype=np.float64)
            if theta.shape != (self.n_params,):
                raise ValueError(f"expected {self.n_params} angles")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "_pairs", [_pair_indices(self.q, k) for k in range(self.q)])
        ring = [(i, (i + 1) % self.q) for i in range(self.q)] if self.q > 1 else []
        object.__setattr__(self, "_ring", [_cnot_indices(self.q, c, t) for c, t in ring])
        object.__setattr__(self, "_pool", [_cnot_indices(self.q, k, 0) for k in range(1, self.q)])
        z0 = 1.0 - 2.0 * (np.arange(2**self.q) & 1)
        object.__setattr__(self, "_z0", z0)

    @property
    def n_params(self) -> int:
        return 3 * self.q + 2

    def to_dict(self) -> dict:
        return {"q": self.q, "seed": self.seed, "layout_version": LAYOUT_VERSION,
                "theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "QcnnModel":
        if d.get("layout_version", LAYOUT_VERSION) != LAYOUT_VERSION:
            raise ValueError("unsupported circuit layout version")
        return cls(d["q"], d["seed"], np.asarray(d["theta"]) if "theta" in d else None)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    # -- simulation -------------------------------------------------------------

    def _apply_1q(self, psi, k, gate, check):
        u00, u01, u10, u11 = gate
        i0, i1 = self._pairs[k]
        a0, a1 = psi[:, i0], psi[:, i1]
        psi[:, i0] = u00 * a0 + u01 * a1
        psi[:, i1] = u10 * a0 + u11 * a1
        if check:
            self._check(psi)

    def _apply_cnots(self, psi, pairs, check):
        for i0, i1 in pairs:
            psi[:, i0], psi[:, i1] = psi[:, i1], psi[:, i0].copy()
            if check:
                self._check(psi)

    @staticmethod
    def _check(psi):
        norms = np.sum(np.abs(psi) ** 2, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            raise NormError(f"statevector norm drifted to {norms.min()}..{norms.max()}")

    def statevector(self, X, check_norm: bool = False) -> np.ndarray:
        """Final states for each row of ``X`` (shape ``(B, D)``, ``D <= q``)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        B, D = X.shape
        if D > self.q:
            raise ValueError(f"input dimension {D} exceeds qubit count {self.q}")
        q, th = self.q, self.theta
        psi = np.zeros((B, 2**q), dtype=np.complex128)
        psi[:, 0] = 1.0
        for i in range(D):
            self._apply_1q(psi, i, tuple(np.reshape(u, (-1, 1)) if np.ndim(u) else u
                                         for u in _ry(X[:, i])), check_norm)
        for i in range(q):
            self._apply_1q(psi, i, _ry(th[i]), check_norm)
            self._apply_1q(psi, i, _rz(th[q + i]), check_norm)
        self._apply_cnots(psi, self._ring, check_norm)
        for i in range(q):
            self._apply_1q(psi, i, _ry(th[2 * q + i]), check_norm)
        self._apply_cnots(psi, self._ring, check_norm)
        self._apply_cnots(psi, self._pool, check_norm)
        self._apply_1q(psi, 0, _ry(th[3 * q]), check_norm)
        self._apply_1q(psi, 0, _rx(th[3 * q + 1]), check_norm)
        return psi

    def evaluate_batch(self, X, check_norm: bool = False) -> np.ndarray:
        psi = self.statevector(X, check_norm)
        return np.clip((np.abs(psi) ** 2) @ self._z0, -1.0, 1.0)

    def evaluate(self, x) -> float:
        """``<Z_0>`` for a single input vector."""
        return float(self.evaluate_batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    __call__ = evaluate

    def derivative_bound(self) -> float:
        """Sup of ``|d^alpha g|`` over all inputs and all ``alpha``; see module docstring."""
        return OBSERVABLE_NORM


def shot_estimate(exp_val, shots: int, rng: np.random.Generator):
    """Finite-shot estimate of a ``+-1`` observable with mean ``exp_val``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p1 = np.clip((1.0 + np.asarray(exp_val, dtype=np.float64)) / 2.0, 0.0, 1.0)
    k = rng.binomial(shots, p1)
    return 2.0 * k / shots - 1.0

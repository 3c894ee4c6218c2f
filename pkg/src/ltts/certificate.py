"""Deterministic error certificates and the pseudo-dimension PAC calculators."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from math import e, log, log2, sqrt

from .features import feature_norm_bound


@dataclass(frozen=True)
class Certificate:
    e_taylor: float
    e_tt_raw: float
    kN: float
    e_det: float
    lam: float
    m_bound: float
    y_max: float
    provenance: str = "exact"

    def label(self) -> str:
        return "" if self.provenance == "exact" else " (estimated)"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        return cls(**d)


@dataclass(frozen=True)
class StatBounds:
    d_hyp: float
    d_loss: float
    n: int
    delta: float
    delta_n: float
    risk_bound: float
    eta: float
    n_required: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StatBounds":
        return cls(**d)


def deterministic_certificate(trunc: float, tt_err: float, N: int) -> tuple[float, float]:
    """Return ``(K^N, trunc + K^N * tt_err)``."""
    if trunc < 0 or tt_err < 0:
        raise ValueError("error terms must be nonnegative")
    kN = feature_norm_bound(N)
    return kN, trunc + kN * tt_err


def m_bound(lam: float, N: int, y_max: float) -> float:
    """Squared-loss range ``(lam * K^N + y_max)^2``."""
    if lam < 0 or y_max < 0:
        raise ValueError("inputs must be nonnegative")
    return (lam * feature_norm_bound(N) + y_max) ** 2


def build_certificate(trunc: float, tt_err: float, N: int, lam: float, y_max: float,
                      provenance: str = "exact") -> Certificate:
    kN, e_det = deterministic_certificate(trunc, tt_err, N)
    return Certificate(trunc, tt_err, kN, e_det, lam, m_bound(lam, N, y_max), y_max, provenance)


def pdim_hypothesis(N: int, m: int, chi: int) -> float:
    """``2 N m chi^2 log(12 N)`` (natural log)."""
    if min(N, m, chi) < 1:
        raise ValueError("N, m and chi must be >= 1")
    return 2.0 * N * m * chi * chi * log(12 * N)


def pdim_loss(d_hyp: float) -> float:
    """Squared-loss lifting ``4 (2 d_hyp + 1) log2 6``."""
    if d_hyp < 0:
        raise ValueError("pseudo-dimension must be nonnegative")
    return 4.0 * (2.0 * d_hyp + 1.0) * log2(6)


def uniform_deviation(M: float, d: float, n: int, delta: float) -> float:
    """``M sqrt(2 d log(e n / d) / n) + M sqrt(log(1/delta) / (2 n))``.

    ``log(e n / d)`` is floored at 1, which only bites for ``n < d``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if n < 1 or d <= 0:
        raise ValueError("need n >= 1 and d > 0")
    lg = max(1.0, log(e * n / d))
    return M * sqrt(2.0 * d * lg / n) + M * sqrt(log(1.0 / delta) / (2.0 * n))


def risk_bound(cert: Certificate, d_loss: float, n: int, delta: float) -> float:
    return cert.e_det**2 + 2.0 * uniform_deviation(cert.m_bound, d_loss, n, delta)


def sample_complexity(M: float, d_loss: float, eta: float, delta: float) -> int:
    """Smallest ``n`` with ``2 * uniform_deviation(M, d, n, delta) <= eta``.

    The deviation is nonincreasing in ``n``; doubling brackets, bisection pins.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")

    def ok(n: int) -> bool:
        return 2.0 * uniform_deviation(M, d_loss, n, delta) <= eta

    if ok(1):
        return 1
    hi = 2
    while not ok(hi):
        hi *= 2
    lo = hi // 2  # fails
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def stat_bounds(cert: Certificate, N: int, m: int, chi: int, n: int, delta: float, eta: float) -> StatBounds:
    d_hyp = pdim_hypothesis(N, m, chi)
    d_loss = pdim_loss(d_hyp)
    dev = uniform_deviation(cert.m_bound, d_loss, n, delta)
    return StatBounds(d_hyp, d_loss, n, delta, dev, cert.e_det**2 + 2.0 * dev, eta,
                      sample_complexity(cert.m_bound, d_loss, eta, delta))


def bounds_to_json(cert: Certificate, stats: StatBounds | None = None) -> str:
    d = {"certificate": cert.to_dict()}
    if stats is not None:
        d["stat_bounds"] = stats.to_dict()
    return json.dumps(d, indent=1, sort_keys=True)

"""Patch sampling and alternating-least-squares fits over TT cores.

ALS is a heuristic: each core update is an exact (ridge) least-squares solve
with the other cores held fixed, so the empirical risk is nonincreasing, but
nothing guarantees a global minimiser.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _backend
from .derivatives import BlackBox
from .features import PatchSpec, factor_matrix, normalize
from .quantum import shot_estimate
from .tt import TTTensor, pad_ranks, random_tt, structural_ranks, tt_eval_batch, tt_norm

FALLBACK_RIDGE = 1e-10


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    XI: np.ndarray
    Y: np.ndarray
    seed: int | None = None
    noise: dict = field(default_factory=lambda: {"model": "none"})

    @property
    def n(self) -> int:
        return len(self.Y)


def sample_patch(g: BlackBox, patch: PatchSpec, n: int, rng: np.random.Generator,
                 sigma: float = 0.0, shots: int | None = None, seed: int | None = None) -> Dataset:
    """``n`` uniform points on the patch with labels ``g(X) + eps``.

    ``eps`` is uniform on ``[-sigma, sigma]``; with ``shots`` the labels are
    finite-shot estimates of a ``+-1`` observable instead.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    X = patch.center + patch.r * rng.uniform(-1.0, 1.0, size=(n, patch.N))
    clean = g.batch(X)
    if shots is not None:
        Y = shot_estimate(clean, shots, rng)
        noise = {"model": "shots", "shots": int(shots)}
    elif sigma > 0:
        Y = clean + rng.uniform(-sigma, sigma, size=n)
        noise = {"model": "uniform", "sigma": float(sigma)}
    else:
        Y = clean
        noise = {"model": "none"}
    return Dataset(X, normalize(X, patch), Y, seed, noise)


@dataclass
class ERMConfig:
    chi: int
    lambda_budget: float | None = None
    max_sweeps: int = 50
    rel_tol: float = 1e-9
    ridge: float = 1e-10
    init: TTTensor | None = None
    seed: int = 0
    rescale: bool = False

    def __post_init__(self):
        if self.chi < 1:
            raise ValueError("chi must be >= 1")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


@dataclass
class FitReport:
    init: str
    sweeps: int
    converged: bool
    risk_trace: list[float]
    sweep_risks: list[float]
    final_risk: float
    norm: float
    lambda_budget: float | None
    budget_violation: bool
    rescaled: bool
    singular_retries: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _solve(Phi: np.ndarray, y: np.ndarray, ridge: float) -> tuple[np.ndarray, bool]:
    """Ridge least squares via an augmented system; flags rank deficiency at ridge 0."""
    n, d = Phi.shape
    if ridge == 0.0:
        sol, _, rank, _ = np.linalg.lstsq(Phi, y, rcond=None)
        if rank == d:
            return sol, False
        ridge = FALLBACK_RIDGE
        retried = True
    else:
        retried = False
    A = np.vstack([Phi, np.sqrt(ridge * n) * np.eye(d)])
    b = np.concatenate([y, np.zeros(d)])
    return np.linalg.lstsq(A, b, rcond=None)[0], retried


def _initial_tt(cfg: ERMConfig, N: int, m: int) -> tuple[TTTensor, str]:
    rng = np.random.default_rng(cfg.seed)
    if cfg.init is None:
        return random_tt(N, m, cfg.chi, rng), "random"
    tt = cfg.init
    if tt.N != N or tt.m != m:
        raise ValueError("warm start does not match data order or feature degree")
    if tt.max_rank > cfg.chi:
        raise ValueError("warm start exceeds the rank cap")
    if list(tt.ranks) != structural_ranks(N, m, cfg.chi):
        tt = pad_ranks(tt, cfg.chi, rng)
    return tt, "warm"


def als_fit(data: Dataset, cfg: ERMConfig, p: int) -> tuple[TTTensor, FitReport]:
    """Fit TT cores to ``(XI, Y)`` by right-then-left ALS sweeps with QR gauge moves."""
    if data.n < 1:
        raise ValueError("empty dataset")
    n, N = data.XI.shape
    m = p + 1
    tt, init = _initial_tt(cfg, N, m)
    V = factor_matrix(data.XI, p)  # (n, N, m)
    Y = data.Y
    cores = [np.array(c) for c in tt.cores]

    # right-orthogonalise so core 0 carries the norm
    for k in range(N - 1, 0, -1):
        r0, _, r1 = cores[k].shape
        Q, R = np.linalg.qr(cores[k].reshape(r0, m * r1).T)
        cores[k] = Q.T.reshape(-1, m, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], R.T, axes=([2], [0]))

    L = [np.ones((n, 1))] + [None] * (N - 1)
    R_env = [None] * (N - 1) + [np.ones((n, 1))]
    for k in range(N - 1, 0, -1):
        R_env[k - 1] = _backend.contract_right(R_env[k], cores[k], V[:, k])

    retries = 0

    def update(k):
        nonlocal retries
        r0, _, r1 = cores[k].shape
        Phi = np.einsum("si,sa,sj->siaj", L[k], V[:, k], R_env[k]).reshape(n, -1)
        sol, retried = _solve(Phi, Y, cfg.ridge)
        retries += retried
        cores[k] = sol.reshape(r0, m, r1)
        return float(np.mean((Phi @ sol - Y) ** 2))

    trace, sweep_risks = [], []
    prev = float(np.mean((tt_eval_batch(TTTensor(tuple(cores)), data.XI) - Y) ** 2))
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        for k in range(N - 1):
            risk = update(k)
            r0, _, r1 = cores[k].shape
            Q, Rm = np.linalg.qr(cores[k].reshape(r0 * m, r1))
            cores[k] = Q.reshape(r0, m, -1)
            cores[k + 1] = np.tensordot(Rm, cores[k + 1], axes=([1], [0]))
            L[k + 1] = _backend.contract_left(L[k], cores[k], V[:, k])
        trace.append(risk if N > 1 else update(0))
        for k in range(N - 1, 0, -1):
            risk = update(k)
            r0, _, r1 = cores[k].shape
            Q, Rm = np.linalg.qr(cores[k].reshape(r0, m * r1).T)
            cores[k] = Q.T.reshape(-1, m, r1)
            cores[k - 1] = np.tensordot(cores[k - 1], Rm.T, axes=([2], [0]))
            R_env[k - 1] = _backend.contract_right(R_env[k], cores[k], V[:, k])
        risk = update(0)
        trace.append(risk)
        sweep_risks.append(risk)
        if risk <= 1e-300 or abs(prev - risk) <= cfg.rel_tol * max(prev, 1e-300):
            converged = True
            break
        prev = risk

    fitted = TTTensor(tuple(cores))
    norm = tt_norm(fitted)
    violation = cfg.lambda_budget is not None and norm > cfg.lambda_budget
    rescaled = False
    if violation and cfg.rescale:
        fitted = fitted.scaled(cfg.lambda_budget / norm)
        norm = cfg.lambda_budget
        rescaled = True
    final = empirical_risk(fitted, data)
    report = FitReport(init, sweeps, converged, trace, sweep_risks, final, norm,
                       cfg.lambda_budget, bool(violation), rescaled, int(retries))
    return fitted, report


def empirical_risk(tt: TTTensor, data: Dataset) -> float:
    return float(np.mean((tt_eval_batch(tt, data.XI) - data.Y) ** 2))


def clean_rmse(tt: TTTensor, g, X: np.ndarray, patch: PatchSpec) -> float:
    """RMS of ``h_A - g`` over input points ``X`` (``g`` maps rows to values)."""
    X = np.atleast_2d(X)
    gv = g.batch(X) if isinstance(g, BlackBox) else np.asarray(g(X), dtype=np.float64)
    return float(np.sqrt(np.mean((tt_eval_batch(tt, normalize(X, patch)) - gv) ** 2)))

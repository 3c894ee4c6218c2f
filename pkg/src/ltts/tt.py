"""Tensor trains: TT-SVD, evaluation against the factorial features, norms, I/O."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .tensor_core import check_dense_cap, frobenius_norm, unfold

RANK_EPS = 1e-14


@dataclass(frozen=True)
class TTTensor:
    """Order-N tensor train with cores of shape ``(r_{k-1}, m, r_k)``."""

    cores: tuple[np.ndarray, ...]
    _packed: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cores = tuple(np.ascontiguousarray(c, dtype=np.float64) for c in self.cores)
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        m = cores[0].shape[1]
        for k, c in enumerate(cores):
            if c.ndim != 3 or c.shape[1] != m:
                raise ValueError(f"core {k} has shape {c.shape}; expected (r, {m}, r')")
            if k and cores[k - 1].shape[2] != c.shape[0]:
                raise ValueError(f"rank mismatch between cores {k - 1} and {k}")
        for c in cores:
            c.setflags(write=False)
        object.__setattr__(self, "cores", cores)
        ranks = np.array([1] + [c.shape[2] for c in cores], dtype=np.int64)
        sizes = np.array([c.size for c in cores], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        flat = np.concatenate([c.ravel() for c in cores])
        object.__setattr__(self, "_packed", (flat, offsets, ranks))

    @property
    def N(self) -> int:
        return len(self.cores)

    @property
    def m(self) -> int:
        return self.cores[0].shape[1]

    @property
    def ranks(self) -> tuple[int, ...]:
        """Internal ranks ``(r_1, ..., r_{N-1})``."""
        return tuple(int(c.shape[2]) for c in self.cores[:-1])

    @property
    def max_rank(self) -> int:
        return max(self.ranks, default=1)

    def densify(self) -> np.ndarray:
        check_dense_cap(self.N, self.m)
        out = self.cores[0]
        for c in self.cores[1:]:
            out = np.tensordot(out, c, axes=([-1], [0]))
        return out.reshape((self.m,) * self.N)

    def scaled(self, s: float, core: int = 0) -> "TTTensor":
        cores = list(self.cores)
        cores[core] = cores[core] * s
        return TTTensor(tuple(cores))


@dataclass
class TruncationReport:
    """Singular values discarded at each split of the TT-SVD sweep."""

    discarded: list[np.ndarray]
    kept_ranks: list[int]

    @property
    def bound(self) -> float:
        return float(np.sqrt(sum(float(np.sum(d**2)) for d in self.discarded)))


def tt_svd(A: np.ndarray, chi: int, tol: float | None = None) -> tuple[TTTensor, TruncationReport]:
    """Left-to-right TT-SVD with rank cap ``chi`` and optional absolute Frobenius ``tol``.

    The tolerance is split evenly over the ``N-1`` unfoldings, so the kept
    ranks are the smallest meeting ``tol`` but never above ``chi``.
    """
    if chi < 1:
        raise ValueError("rank cap must be >= 1")
    A = np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise np.linalg.LinAlgError("TT-SVD input contains non-finite entries")
    shape = A.shape
    N = A.ndim
    check_dense_cap(N, max(shape))
    delta = None if tol is None else tol / np.sqrt(max(N - 1, 1))
    cores, discarded, kept = [], [], []
    r = 1
    C = A.reshape(1, -1)
    for k in range(N - 1):
        C = C.reshape(r * shape[k], -1)
        U, S, Vt = np.linalg.svd(C, full_matrices=False)
        nonzero = int(np.sum(S > RANK_EPS * S[0])) if S.size and S[0] > 0 else 0
        keep = min(chi, max(nonzero, 1))
        if delta is not None:
            tail = np.sqrt(np.cumsum((S**2)[::-1])[::-1])  # tail[j] = ||S[j:]||
            need = next((j for j in range(1, len(S) + 1) if j == len(S) or tail[j] <= delta), len(S))
            keep = min(keep, max(need, 1))
        cores.append(U[:, :keep].reshape(r, shape[k], keep))
        discarded.append(S[keep:].copy())
        kept.append(keep)
        C = S[:keep, None] * Vt[:keep]
        r = keep
    cores.append(C.reshape(r, shape[-1], 1))
    return TTTensor(tuple(cores)), TruncationReport(discarded, kept)


def unfolding_tail_bound(A: np.ndarray, chi: int) -> float:
    """``sqrt(sum_k sum_{j>chi} sigma_{k,j}^2)`` from the unfoldings of ``A`` itself."""
    total = 0.0
    for k in range(1, A.ndim):
        s = np.linalg.svd(unfold(A, k), compute_uv=False)
        total += float(np.sum(s[chi:] ** 2))
    return float(np.sqrt(total))


def tt_eval(tt: TTTensor, xi) -> float:
    """``<A, Phi(xi)>`` by a left-to-right contraction with the factor vectors."""
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    if xi.shape != (tt.N,):
        raise ValueError(f"point has shape {xi.shape}; TT has order {tt.N}")
    flat, offsets, ranks = tt._packed
    return _backend.tt_eval_point(flat, offsets, ranks, tt.m, xi)


def tt_eval_batch(tt: TTTensor, XI) -> np.ndarray:
    XI = np.ascontiguousarray(np.atleast_2d(XI), dtype=np.float64)
    if XI.shape[1] != tt.N:
        raise ValueError(f"points have {XI.shape[1]} coordinates; TT has order {tt.N}")
    flat, offsets, ranks = tt._packed
    return _backend.tt_eval_batch(flat, offsets, ranks, tt.m, XI)


def left_orthogonalize(tt: TTTensor) -> TTTensor:
    cores = [c.copy() for c in tt.cores]
    for k in range(len(cores) - 1):
        r0, m, r1 = cores[k].shape
        Q, R = np.linalg.qr(cores[k].reshape(r0 * m, r1))
        cores[k] = Q.reshape(r0, m, Q.shape[1])
        cores[k + 1] = np.tensordot(R, cores[k + 1], axes=([1], [0]))
    return TTTensor(tuple(cores))


def tt_norm(tt: TTTensor) -> float:
    """Frobenius norm: norm of the last core once all others are left-orthogonal."""
    return frobenius_norm(left_orthogonalize(tt).cores[-1])


def tt_distance_dense(tt: TTTensor, A: np.ndarray) -> float:
    return frobenius_norm(tt.densify() - A)


def param_count(tt: TTTensor) -> int:
    return int(sum(c.size for c in tt.cores))


def zeros_tt(N: int, m: int) -> TTTensor:
    return TTTensor(tuple(np.zeros((1, m, 1)) for _ in range(N)))


def structural_ranks(N: int, m: int, chi: int) -> list[int]:
    """Largest useful ranks under cap ``chi``: ``min(chi, m^k, m^(N-k))``."""
    return [min(chi, m**k, m ** (N - k)) for k in range(1, N)]


def random_tt(N: int, m: int, chi: int, rng: np.random.Generator, std: float | None = None) -> TTTensor:
    ranks = [1] + structural_ranks(N, m, chi) + [1]
    std = (m * chi) ** -0.5 if std is None else std
    return TTTensor(tuple(rng.normal(0.0, std, size=(ranks[k], m, ranks[k + 1])) for k in range(N)))


def pad_ranks(tt: TTTensor, chi: int, rng: np.random.Generator, scale: float = 1e-8) -> TTTensor:
    """Grow ranks to ``structural_ranks(N, m, chi)`` with small random fill.

    The fill lives only in the new slices, so the represented tensor moves by
    ``O(scale^2)``; a pure zero fill would be a fixed point of ALS.
    """
    target = [1] + structural_ranks(tt.N, tt.m, chi) + [1]
    cores = []
    for k, c in enumerate(tt.cores):
        r0, m, r1 = c.shape
        R0, R1 = max(r0, target[k]), max(r1, target[k + 1])
        G = rng.normal(0.0, scale, size=(R0, m, R1))
        G[:r0, :, :r1] = c
        cores.append(G)
    return TTTensor(tuple(cores))


# -- serialisation -------------------------------------------------------------

def tt_to_dict(tt: TTTensor, sidecar: str | None = None) -> dict:
    d = {"format": "ltts-tt", "version": 1, "N": tt.N, "m": tt.m,
         "ranks": list(tt.ranks),
         "cores": [{"shape": list(c.shape)} for c in tt.cores]}
    if sidecar is None:
        for entry, c in zip(d["cores"], tt.cores):
            entry["data"] = c.ravel().tolist()
    else:
        d["sidecar"] = sidecar
    return d


def tt_from_dict(d: dict, base: Path | None = None) -> TTTensor:
    if d.get("format") != "ltts-tt":
        raise ValueError("not a serialised tensor train")
    if "sidecar" in d:
        arrays = read_sidecar((base or Path(".")) / d["sidecar"])
    else:
        arrays = [np.asarray(e["data"], dtype=np.float64) for e in d["cores"]]
    return TTTensor(tuple(a.reshape(e["shape"]) for a, e in zip(arrays, d["cores"])))


def write_sidecar(tt: TTTensor, path: Path) -> None:
    """Length-prefixed little-endian float64 blocks, one per core."""
    with open(path, "wb") as fh:
        for c in tt.cores:
            data = c.astype("<f8").ravel()
            fh.write(struct.pack("<Q", data.size))
            fh.write(data.tobytes())


def read_sidecar(path: Path) -> list[np.ndarray]:
    out = []
    with open(path, "rb") as fh:
        while header := fh.read(8):
            (n,) = struct.unpack("<Q", header)
            out.append(np.frombuffer(fh.read(8 * n), dtype="<f8").astype(np.float64))
    return out


def save_tt(tt: TTTensor, path, binary: bool = False, extra: dict | None = None) -> None:
    path = Path(path)
    sidecar = None
    if binary:
        sidecar = path.with_suffix(".bin").name
        write_sidecar(tt, path.with_suffix(".bin"))
    d = tt_to_dict(tt, sidecar)
    if extra:
        d.update(extra)
    path.write_text(json.dumps(d, indent=1))


def load_tt(path) -> tuple[TTTensor, dict]:
    path = Path(path)
    d = json.loads(path.read_text())
    return tt_from_dict(d, path.parent), d

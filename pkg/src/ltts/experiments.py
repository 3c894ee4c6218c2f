"""Rank-scaling scan over the analytic families and the end-to-end surrogate
validation study, plus their CSV / JSON writers."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .certificate import build_certificate
from .derivatives import (BlackBox, SmoothnessBudget, default_step, embed, estimate_budget,
                          fd_derivatives, lambda_star, taylor_eval_batch, truncation_bound)
from .erm import ERMConfig, als_fit, sample_patch
from .families import KINDS, FamilyInstance, make_instance
from .features import PatchSpec, normalize
from .quantum import QcnnModel
from .tensor_core import frobenius_norm
from .tt import tt_eval, tt_eval_batch, tt_svd

DEFAULT_CONFIGS = ((4, 3), (4, 4), (6, 2), (6, 3))
DEFAULT_EPS = (1e-2, 1e-3)
CRITERIA = ("common-scale", "self-relative")
# (deterministic all-ones instance?, random draws) per (N, p)
DEFAULT_INVENTORY = {
    "ExpSum": (True, 10),
    "ProductCos": (True, 0),
    "PolyMatched": (False, 10),
    "PolyHigher": (False, 10),
    "QuadraticForm": (False, 4),
    "Trig": (False, 4),
    "Gauss": (False, 4),
}
BUCKETS = {
    "ExpSum": "Separable", "ProductCos": "Separable",
    "PolyMatched": "Poly (deg=p)", "PolyHigher": "Poly (deg>p)",
    "QuadraticForm": "QuadraticForm", "Trig": "Trig+Gauss", "Gauss": "Trig+Gauss",
}
BUCKET_ORDER = ("Separable", "Poly (deg=p)", "Poly (deg>p)", "QuadraticForm", "Trig+Gauss")
FAMILY_GROUPS = {
    "separable": ("ExpSum", "ProductCos"),
    "poly": ("PolyMatched", "PolyHigher"),
    "quadratic": ("QuadraticForm",),
    "trig+gauss": ("Trig", "Gauss"),
    "trig": ("Trig",),
    "gauss": ("Gauss",),
}


def substream(master_seed: int, *names) -> np.random.Generator:
    """Independent generator keyed by ``names`` under ``master_seed``."""
    digest = hashlib.sha256("/".join(map(str, names)).encode()).digest()
    key = tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def resolve_families(names) -> tuple[str, ...]:
    """Expand group aliases (``separable``, ``poly``, ...) and kind names."""
    out = []
    for name in names:
        if name in KINDS:
            kinds = (name,)
        elif name.lower() in FAMILY_GROUPS:
            kinds = FAMILY_GROUPS[name.lower()]
        else:
            raise ValueError(f"unknown family {name!r}")
        out += [k for k in kinds if k not in out]
    return tuple(out)


# -- minimal ranks ---------------------------------------------------------------

def error_profile(A: np.ndarray, chi_max: int, stop_below: float = 0.0) -> list[float]:
    """``||A - tt_svd(A, chi)||_F`` for ``chi = 1, 2, ...``; stops early once
    the error is ``<= stop_below`` or the TT is exact."""
    exact = max(min(int(np.prod(A.shape[:k])), int(np.prod(A.shape[k:]))) for k in range(1, A.ndim))
    errs = []
    for chi in range(1, chi_max + 1):
        tt, _ = tt_svd(A, chi)
        errs.append(frobenius_norm(A - tt.densify()))
        if errs[-1] <= stop_below or chi >= exact:
            break
    return errs


def _first_within(errs: list[float], tol: float) -> int | None:
    return next((i + 1 for i, e in enumerate(errs) if e <= tol), None)


def min_rank_to_tolerance(A: np.ndarray, tol_abs: float, chi_max: int) -> int | None:
    """Smallest ``chi <= chi_max`` whose TT-SVD meets ``tol_abs``; ``None`` if unreached."""
    if not tol_abs > 0:
        raise ValueError("tolerance must be positive")
    return _first_within(error_profile(A, chi_max, tol_abs), tol_abs)


@dataclass(frozen=True)
class RankScanRecord:
    family: str
    N: int
    p: int
    instance: int
    epsilon: float
    criterion: str
    chi_box: int | None
    chi_delta: int | None
    rho: float | None
    reached_box: bool
    reached_delta: bool


@dataclass(frozen=True)
class ScanTask:
    kind: str
    N: int
    p: int
    index: int
    deterministic: bool
    master_seed: int
    eps: tuple[float, ...]
    chi_max: int


def build_tasks(families=KINDS, configs=DEFAULT_CONFIGS, eps=DEFAULT_EPS, chi_max: int = 25,
                seed: int = 0, inventory: dict | None = None) -> list[ScanTask]:
    inventory = inventory or DEFAULT_INVENTORY
    tasks = []
    for N, p in configs:
        for kind in resolve_families(families):
            det, n_random = inventory[kind]
            for idx in range(int(det) + n_random):
                tasks.append(ScanTask(kind, N, p, idx, det and idx == 0, seed, tuple(eps), chi_max))
    return tasks


def scan_instance(task: ScanTask) -> list[RankScanRecord]:
    rng = substream(task.master_seed, "rank-scan", task.kind, task.N, task.p, task.index)
    inst = make_instance(task.kind, task.N, task.p, rng, deterministic=task.deterministic)
    A_box = inst.box_tensor(task.p)
    A_delta = inst.simplex_tensor(task.p)
    n_box, n_delta = frobenius_norm(A_box), frobenius_norm(A_delta)
    if n_box == 0 or n_delta == 0:
        raise ValueError(f"{task.kind} instance {task.index} at (N,p)=({task.N},{task.p}) has a zero tensor")
    tols = [e * n for e in task.eps for n in (n_box, n_delta)]
    errs_box = error_profile(A_box, task.chi_max, min(tols))
    errs_delta = error_profile(A_delta, task.chi_max, min(tols))
    out = []
    for e in task.eps:
        cb = _first_within(errs_box, e * n_box)
        for crit in CRITERIA:
            cd = _first_within(errs_delta, e * (n_box if crit == "common-scale" else n_delta))
            rho = cd / cb if cb and cd else None
            out.append(RankScanRecord(task.kind, task.N, task.p, task.index, e, crit,
                                      cb, cd, rho, cb is not None, cd is not None))
    return out


def rank_scan(tasks: list[ScanTask], workers: int = 1) -> list[RankScanRecord]:
    """Run every task; output order follows ``tasks`` whatever the pool size."""
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(scan_instance, tasks, chunksize=4))
    else:
        chunks = [scan_instance(t) for t in tasks]
    return [r for chunk in chunks for r in chunk]


def _q(values, q):
    return float(np.percentile(values, q, method="linear"))


def aggregate(records: list[RankScanRecord]) -> list[dict]:
    """Per (bucket, epsilon, criterion): n, median and IQR of rho, median ranks, unreached."""
    if not records:
        raise ValueError("nothing to aggregate")
    groups: dict[tuple, list[RankScanRecord]] = {}
    for rec in records:
        groups.setdefault((BUCKETS[rec.family], rec.epsilon, rec.criterion), []).append(rec)
    rows = []
    key = lambda k: (BUCKET_ORDER.index(k[0]), -k[1], CRITERIA.index(k[2]))
    for (bucket, e, crit) in sorted(groups, key=key):
        recs = groups[(bucket, e, crit)]
        rho = [r.rho for r in recs if r.rho is not None]
        cb = [r.chi_box for r in recs if r.chi_box is not None]
        cd = [r.chi_delta for r in recs if r.chi_delta is not None]
        rows.append({
            "bucket": bucket, "epsilon": e, "criterion": crit, "n": len(recs),
            "median_rho": _q(rho, 50) if rho else None,
            "q25_rho": _q(rho, 25) if rho else None,
            "q75_rho": _q(rho, 75) if rho else None,
            "median_chi_box": _q(cb, 50) if cb else None,
            "median_chi_delta": _q(cd, 50) if cd else None,
            "unreached": sum(not (r.reached_box and r.reached_delta) for r in recs),
        })
    return rows


# -- validation study ------------------------------------------------------------

@dataclass(frozen=True)
class ValidationRecord:
    center: str
    r: float
    chi: int
    rmse_trunc: float
    rmse_tt: float
    rmse_total: float
    coeff_compression: float
    tt_over_trunc: float
    e_det: float
    cert_rmse: float
    erm_rmse: float
    te_ratio: float
    speedup: float | None
    provenance: str = "exact"
    fit_sweeps: int = 0
    fit_norm: float = 0.0


def quantum_oracle(model: QcnnModel | None = None) -> tuple[BlackBox, QcnnModel]:
    model = model or QcnnModel()
    return BlackBox(model.evaluate, model.evaluate_batch, g_max=1.0, reentrant=True), model


def default_centers(g: BlackBox, N: int, seed: int, lo: float = 0.0, hi: float = np.pi,
                    n_candidates: int = 256) -> dict[str, np.ndarray]:
    """Origin, a random interior point, the candidates closest to the decision
    boundary on either side, and the midpoint of ``[lo, hi]^N``."""
    rng = substream(seed, "centers")
    interior = rng.uniform(lo, hi, size=N)
    cand = rng.uniform(lo, hi, size=(n_candidates, N))
    vals = g.batch(cand)
    pos, neg = np.flatnonzero(vals > 0), np.flatnonzero(vals < 0)
    out = {"origin": np.full(N, lo), "interior": interior}
    if pos.size:
        out["boundary_pos"] = cand[pos[np.argmin(vals[pos])]]
    if neg.size:
        out["boundary_neg"] = cand[neg[np.argmax(vals[neg])]]
    out["midpoint"] = np.full(N, (lo + hi) / 2)
    return out


def _rms(v) -> float:
    return float(np.sqrt(np.mean(np.square(v))))


def _median_time(fn, args_list, block: int = 50) -> float:
    """Median per-call wall time over blocks of ``block`` calls."""
    times = []
    for i in range(0, len(args_list), block):
        chunk = args_list[i:i + block]
        t0 = time.perf_counter()
        for a in chunk:
            fn(a)
        times.append((time.perf_counter() - t0) / len(chunk))
    return float(np.median(times))


def ltts_validate(g: BlackBox, centers: dict[str, np.ndarray], radii, chis, p: int = 2,
                  n_train: int = 600, n_test: int = 2000, seed: int = 0,
                  budget_fn=None, y_max: float | None = None, sigma: float = 0.0,
                  shots: int | None = None, timing_reps: int = 0,
                  single_eval=None, erm_kwargs: dict | None = None) -> list[ValidationRecord]:
    """Taylor data by finite differences, TT-SVD, certificate and warm-started ALS
    for every (center, r, chi); metrics on a fresh uniform test sample.

    ``budget_fn(center, r)`` returns a :class:`SmoothnessBudget` or ``None``,
    in which case the budget is estimated on a grid and flagged.
    ``timing_reps > 0`` fills the speedup column (oracle time over TT time).
    """
    y_max = g.g_max if y_max is None else y_max
    single_eval = single_eval or g.fn
    records = []
    for name, c in centers.items():
        c = np.asarray(c, dtype=np.float64)
        N = len(c)
        for r in radii:
            patch = PatchSpec(tuple(c), float(r), p)
            rng = substream(seed, "validate", name, repr(float(r)))
            derivs = fd_derivatives(g, c, p, default_step(r))
            A_star = embed(derivs, patch)
            A = A_star.densify()
            budget = budget_fn(c, r) if budget_fn else None
            if budget is None:
                budget = estimate_budget(g, patch)
            trunc = truncation_bound(budget, r, N, p)
            lam = lambda_star(budget, r, N, p)
            train = sample_patch(g, patch, n_train, rng, sigma=sigma, shots=shots)
            X_test = c + r * rng.uniform(-1.0, 1.0, size=(n_test, N))
            XI_test = normalize(X_test, patch)
            g_test = g.batch(X_test)
            T_p = taylor_eval_batch(A_star, XI_test)
            rmse_trunc = _rms(g_test - T_p)
            ym = y_max if y_max is not None else float(np.max(np.abs(train.Y)))
            t_oracle = None
            if timing_reps:
                t_oracle = _median_time(single_eval, list(X_test[:timing_reps]))
            for chi in chis:
                tt, _ = tt_svd(A, chi)
                e_tt = frobenius_norm(A - tt.densify())
                cert = build_certificate(trunc, e_tt, N, lam, ym, budget.provenance)
                h = tt_eval_batch(tt, XI_test)
                rmse_tt = _rms(T_p - h)
                cert_rmse = _rms(g_test - h)
                cfg = ERMConfig(chi=chi, init=tt, lambda_budget=lam,
                                seed=int(rng.integers(2**31)), **(erm_kwargs or {}))
                fit, rep = als_fit(train, cfg, p)
                erm_rmse = _rms(g_test - tt_eval_batch(fit, XI_test))
                speedup = None
                if timing_reps:
                    t_tt = _median_time(lambda xi: tt_eval(tt, xi), list(XI_test[:timing_reps]))
                    speedup = t_oracle / t_tt
                norm_a = frobenius_norm(A)
                records.append(ValidationRecord(
                    name, float(r), int(chi), rmse_trunc, rmse_tt, cert_rmse,
                    e_tt / norm_a if norm_a > 0 else 0.0,
                    rmse_tt / rmse_trunc if rmse_trunc > 0 else float("inf"),
                    cert.e_det, cert_rmse, erm_rmse,
                    erm_rmse / cert_rmse if cert_rmse > 0 else float("inf"),
                    speedup, budget.provenance, rep.sweeps, rep.norm))
    return records


def validation_summary(records: list[ValidationRecord]) -> list[dict]:
    """Per (r, chi): medians across centers, worst te_ratio, certificate coverage."""
    groups: dict[tuple, list[ValidationRecord]] = {}
    for rec in records:
        groups.setdefault((rec.r, rec.chi), []).append(rec)
    rows = []
    for (r, chi) in sorted(groups):
        recs = groups[(r, chi)]
        med = lambda attr: float(np.median([getattr(x, attr) for x in recs]))
        rows.append({"r": r, "chi": chi, "n_centers": len(recs),
                     "cert_rmse": med("cert_rmse"), "erm_rmse": med("erm_rmse"),
                     "te_ratio": med("te_ratio"),
                     "max_te_ratio": max(x.te_ratio for x in recs),
                     "e_det": med("e_det"),
                     "cert_within_e_det": all(x.cert_rmse <= x.e_det for x in recs),
                     "estimated": any(x.provenance != "exact" for x in recs)})
    return rows


# -- writers ---------------------------------------------------------------------

RANK_COLUMNS = ("family", "N", "p", "instance", "epsilon", "criterion", "chi_box",
                "chi_delta", "rho", "reached_box", "reached_delta")
VALIDATION_COLUMNS = ("center", "r", "chi", "rmse_trunc", "rmse_tt", "rmse_total",
                      "coeff_compression", "tt_over_trunc", "e_det", "cert_rmse",
                      "erm_rmse", "te_ratio", "speedup")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(records, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        d = asdict(rec)
        w.writerow([_fmt(d[c]) for c in columns])
    return buf.getvalue()


def write_text(path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def to_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_fmt)


def default_workers() -> int:
    return os.cpu_count() or 1


def record_fields(cls) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cls))


# -- certification of analytic instances ----------------------------------------

def exact_budget(inst: FamilyInstance, r: float, p: int) -> SmoothnessBudget:
    """Rigorous budgets on ``B(0, r)`` from the family's closed-form bounds."""
    return SmoothnessBudget(max(inst.derivative_bound(k, r) for k in range(p + 1)),
                            inst.derivative_bound(p + 1, r), "exact")


@dataclass
class CertifiedSurrogate:
    patch: PatchSpec
    tt: object
    certificate: object
    tt_bound: float


def certify_instance(inst: FamilyInstance, r: float, p: int, chi: int) -> CertifiedSurrogate:
    """Exact Taylor data at the origin, TT-SVD at ``chi``, certificate with exact budgets."""
    N = inst.N
    patch = PatchSpec((0.0,) * N, r, p, chi)
    A = embed(inst.simplex_derivatives(p), patch).densify()
    tt, rep = tt_svd(A, chi)
    budget = exact_budget(inst, r, p)
    cert = build_certificate(truncation_bound(budget, r, N, p), frobenius_norm(A - tt.densify()), N,
                             lambda_star(budget, r, N, p), inst.derivative_bound(0, r), budget.provenance)
    return CertifiedSurrogate(patch, tt, cert, rep.bound)


def certify_oracle(g: BlackBox, center, r: float, p: int, chi: int,
                   budget: SmoothnessBudget | None = None, y_max: float | None = None) -> CertifiedSurrogate:
    """Finite-difference Taylor data at ``center``; estimated budget unless one is given."""
    center = np.asarray(center, dtype=np.float64)
    N = len(center)
    patch = PatchSpec(tuple(center), r, p, chi)
    A = embed(fd_derivatives(g, center, p, default_step(r)), patch).densify()
    tt, rep = tt_svd(A, chi)
    budget = budget or estimate_budget(g, patch)
    if y_max is None:
        y_max = g.g_max if g.g_max is not None else budget.C_le_p
    cert = build_certificate(truncation_bound(budget, r, N, p), frobenius_norm(A - tt.densify()), N,
                             lambda_star(budget, r, N, p), y_max, budget.provenance)
    return CertifiedSurrogate(patch, tt, cert, rep.bound)

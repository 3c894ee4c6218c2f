"""``ltts`` command line: rank-scan, certify, validate, eval.

Settings come from built-in defaults, then an optional ``--config`` JSON
file, then flags (flags win).  The resolved settings are written to
``<out>/run.json`` before any work starts.

Exit codes: 0 success, 1 configuration error, 2 quality gate failed under
``--strict``, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .certificate import bounds_to_json, stat_bounds
from .derivatives import SmoothnessBudget
from .experiments import (DEFAULT_CONFIGS, DEFAULT_EPS, RANK_COLUMNS, VALIDATION_COLUMNS, aggregate,
                          build_tasks, certify_instance, certify_oracle, default_centers, exact_budget,
                          ltts_validate, make_instance, quantum_oracle, rank_scan, resolve_families,
                          substream, to_csv, to_json, validation_summary, write_text)
from .derivatives import BlackBox
from .families import KINDS
from .features import PatchSpec, in_patch
from .quantum import Y_MAX_DEFAULT
from .tt import load_tt, save_tt, tt_eval_batch

EXIT_OK, EXIT_CONFIG, EXIT_GATE, EXIT_RUNTIME = 0, 1, 2, 3
PRIMARY_CENTER = "interior"


class ConfigError(ValueError):
    def __init__(self, field: str, msg: str):
        super().__init__(f"config field '{field}': {msg}")
        self.field = field


DEFAULTS = {
    "rank-scan": {"families": list(KINDS), "configs": [list(c) for c in DEFAULT_CONFIGS],
                  "eps": list(DEFAULT_EPS), "chi_max": 25},
    "certify": {"family": "ExpSum", "oracle": "family", "N": 4, "p": 2, "r": [0.1], "chi": [2],
                "center": None, "n": 1000, "delta": 0.05, "eta": 0.1, "save_tt": None},
    "validate": {"oracle": "quantum", "qubits": 6, "model_seed": 2024, "p": 2,
                 "r": [0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0], "chi": [1, 2, 3, 4, 5],
                 "n_train": 600, "n_test": 2000, "shots": None, "noise": 0.0, "timing_reps": 0},
    "eval": {"model": None, "points": None, "predictions": "predictions.csv"},
}
COMMON = {"seed": 0, "threads": None, "strict": False}


# -- parsing ---------------------------------------------------------------------

def _floats(s: str) -> list[float]:
    return [float(v) for v in s.replace(";", ",").split(",") if v.strip()]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.replace(";", ",").split(",") if v.strip()]


def _config_pair(s: str) -> list[int]:
    parts = s.lower().replace("x", ",").split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected N,P or NxP, got {s!r}")
    return [int(parts[0]), int(parts[1])]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ltts", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"ltts {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        S = argparse.SUPPRESS
        p.add_argument("--config", default=None, help="JSON file of settings (flags override it)")
        p.add_argument("--out", default="ltts_out", help="output directory")
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("--threads", type=int, default=S)
        p.add_argument("--strict", action="store_true", default=S)
        return p

    S = argparse.SUPPRESS
    rs = common(sub.add_parser("rank-scan", help="simplex vs box TT-rank scan"))
    rs.add_argument("--families", type=lambda s: s.split(","), default=S,
                    help="comma list of kinds or groups (separable, poly, quadratic, trig+gauss)")
    rs.add_argument("--configs", type=_config_pair, nargs="+", default=S, help="N,P pairs")
    rs.add_argument("--eps", type=_floats, default=S)
    rs.add_argument("--chi-max", dest="chi_max", type=int, default=S)

    ce = common(sub.add_parser("certify", help="build, compress and certify a surrogate"))
    ce.add_argument("--oracle", choices=("family", "quantum"), default=S)
    ce.add_argument("--family", default=S)
    ce.add_argument("--N", type=int, default=S)
    ce.add_argument("--p", type=int, default=S)
    ce.add_argument("--r", type=_floats, default=S)
    ce.add_argument("--chi", type=_ints, default=S)
    ce.add_argument("--center", type=_floats, default=S)
    ce.add_argument("--n", type=int, default=S, help="sample size for the risk bound")
    ce.add_argument("--delta", type=float, default=S)
    ce.add_argument("--eta", type=float, default=S)
    ce.add_argument("--save-tt", dest="save_tt", default=S, help="file name for the last surrogate")

    va = common(sub.add_parser("validate", help="end-to-end surrogate validation"))
    va.add_argument("--oracle", default=S, help="'quantum' or an analytic family kind")
    va.add_argument("--r", type=_floats, default=S)
    va.add_argument("--chi", type=_ints, default=S)
    va.add_argument("--n-train", dest="n_train", type=int, default=S)
    va.add_argument("--n-test", dest="n_test", type=int, default=S)
    va.add_argument("--shots", type=int, default=S)
    va.add_argument("--noise", type=float, default=S, help="uniform label noise half-width")
    va.add_argument("--timing-reps", dest="timing_reps", type=int, default=S)

    ev = common(sub.add_parser("eval", help="evaluate a saved surrogate on CSV points"))
    ev.add_argument("--model", default=S)
    ev.add_argument("--points", default=S)
    ev.add_argument("--predictions", default=S)
    return ap


def resolve(command: str, args: argparse.Namespace) -> dict:
    cfg = {**COMMON, **DEFAULTS[command]}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config", "top level must be an object")
        for k, v in file_cfg.items():
            if k not in cfg:
                raise ConfigError(k, "unknown setting")
            cfg[k] = v
    for k, v in vars(args).items():
        if k in cfg:
            cfg[k] = v
    cfg["threads"] = cfg["threads"] or os.cpu_count() or 1
    _check(command, cfg)
    return cfg


def _check(command: str, cfg: dict) -> None:
    def need(field, ok, msg):
        if not ok:
            raise ConfigError(field, msg)

    need("seed", isinstance(cfg["seed"], int) and cfg["seed"] >= 0, "must be a nonnegative integer")
    need("threads", int(cfg["threads"]) >= 1, "must be >= 1")
    if command == "rank-scan":
        try:
            cfg["families"] = list(resolve_families(cfg["families"]))
        except ValueError as exc:
            raise ConfigError("families", str(exc)) from None
        need("configs", all(len(c) == 2 and c[0] >= 1 and c[1] >= 0 for c in cfg["configs"]),
             "each entry must be an (N, p) pair")
        need("eps", len(cfg["eps"]) > 0 and all(0 < e < 1 for e in cfg["eps"]), "values must lie in (0, 1)")
        need("chi_max", cfg["chi_max"] >= 1, "must be >= 1")
    elif command == "certify":
        need("oracle", cfg["oracle"] in ("family", "quantum"), "must be 'family' or 'quantum'")
        need("family", cfg["family"] in KINDS, f"must be one of {', '.join(KINDS)}")
        need("r", len(cfg["r"]) > 0 and all(r > 0 for r in cfg["r"]), "radii must be positive")
        need("chi", len(cfg["chi"]) > 0 and all(c >= 1 for c in cfg["chi"]), "ranks must be >= 1")
        need("N", cfg["N"] >= 1, "must be >= 1")
        need("p", 0 <= cfg["p"] <= (2 if cfg["oracle"] == "quantum" else 8), "unsupported degree")
        need("delta", 0 < cfg["delta"] < 1, "must lie in (0, 1)")
        need("eta", cfg["eta"] > 0, "must be positive")
        need("n", cfg["n"] >= 1, "must be >= 1")
    elif command == "validate":
        need("oracle", cfg["oracle"] == "quantum" or cfg["oracle"] in KINDS,
             f"must be 'quantum' or one of {', '.join(KINDS)}")
        need("r", len(cfg["r"]) > 0 and all(r > 0 for r in cfg["r"]), "radii must be positive")
        need("chi", len(cfg["chi"]) > 0 and all(c >= 1 for c in cfg["chi"]), "ranks must be >= 1")
        need("p", cfg["p"] in (1, 2), "finite differences support p in {1, 2}")
        need("n_train", cfg["n_train"] >= 1, "must be >= 1")
        need("n_test", cfg["n_test"] >= 1, "must be >= 1")
        need("shots", cfg["shots"] is None or cfg["shots"] >= 1, "must be >= 1")
        need("noise", cfg["noise"] >= 0, "must be nonnegative")
    elif command == "eval":
        need("model", bool(cfg["model"]) and Path(cfg["model"]).is_file(), "surrogate file not found")
        need("points", bool(cfg["points"]) and Path(cfg["points"]).is_file(), "points file not found")


def _input_hash(cfg: dict, files=()) -> str:
    h = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode())
    for f in files:
        if f:
            h.update(Path(f).read_bytes())
    return h.hexdigest()


def write_manifest(out: Path, command: str, cfg: dict, files=()) -> None:
    manifest = {"command": command, "version": __version__, "seed": cfg["seed"],
                "config": cfg, "input_hash": _input_hash(cfg, files)}
    write_text(out / "run.json", json.dumps(manifest, indent=1, sort_keys=True, default=str))


# -- subcommands -----------------------------------------------------------------

def cmd_rank_scan(cfg: dict, out: Path) -> int:
    tasks = build_tasks(cfg["families"], [tuple(c) for c in cfg["configs"]], cfg["eps"],
                        cfg["chi_max"], cfg["seed"])
    records = rank_scan(tasks, workers=cfg["threads"])
    summary = aggregate(records)
    write_text(out / "rank_scan.csv", to_csv(records, RANK_COLUMNS))
    write_text(out / "rank_scan_summary.json", to_json({"records": len(records), "buckets": summary}))
    unreached = sum(not (r.reached_box and r.reached_delta) for r in records)
    print(f"{len(records)} records, {unreached} unreached")
    print(f"{'bucket':<15}{'eps':>8} {'criterion':<14}{'n':>4}  {'median rho [IQR]':<22}{'box/delta':>10}")
    for row in summary:
        rho = (f"{row['median_rho']:.2f} [{row['q25_rho']:.2f}, {row['q75_rho']:.2f}]"
               if row["median_rho"] is not None else "n/a")
        print(f"{row['bucket']:<15}{row['epsilon']:>8.0e} {row['criterion']:<14}{row['n']:>4}  {rho:<22}"
              f"{row['median_chi_box']:>5g}/{row['median_chi_delta']:g}")
    return EXIT_GATE if cfg["strict"] and unreached else EXIT_OK


def cmd_certify(cfg: dict, out: Path) -> int:
    results, last = [], None
    if cfg["oracle"] == "quantum":
        g, model = quantum_oracle()
        N = model.q
        center = cfg["center"] or [np.pi / 2] * N
        if len(center) != N:
            raise ConfigError("center", f"needs {N} coordinates")
        budget = SmoothnessBudget(model.derivative_bound(), model.derivative_bound(), "exact")
    else:
        inst = make_instance(cfg["family"], cfg["N"], cfg["p"], substream(cfg["seed"], "certify", cfg["family"]),
                             deterministic=cfg["seed"] == 0 and cfg["family"] in ("ExpSum", "ProductCos"))
        N = cfg["N"]
    hdr = (f"{'r':>8}{'chi':>5}{'E_taylor':>12}{'E_tt':>12}{'K^N':>9}{'E_det':>12}{'Lambda':>11}"
           f"{'M':>11}{'d_hyp':>10}{'d_loss':>11}{'dev':>11}{'risk':>11}{'n_req':>16}")
    print(hdr)
    for r in cfg["r"]:
        for chi in cfg["chi"]:
            if cfg["oracle"] == "quantum":
                cs = certify_oracle(g, center, r, cfg["p"], chi, budget, Y_MAX_DEFAULT)
            else:
                cs = certify_instance(inst, r, cfg["p"], chi)
            cert = cs.certificate
            st = stat_bounds(cert, N, cfg["p"] + 1, chi, cfg["n"], cfg["delta"], cfg["eta"])
            print(f"{r:>8.3g}{chi:>5}{cert.e_taylor:>12.4e}{cert.e_tt_raw:>12.4e}{cert.kN:>9.3f}"
                  f"{cert.e_det:>12.4e}{cert.lam:>11.3e}{cert.m_bound:>11.3e}{st.d_hyp:>10.1f}"
                  f"{st.d_loss:>11.1f}{st.delta_n:>11.3e}{st.risk_bound:>11.3e}{st.n_required:>16d}"
                  f"{cert.label()}")
            results.append({"r": r, "chi": chi, **json.loads(bounds_to_json(cert, st))})
            last = cs
    write_text(out / "certify.json", to_json({"results": results}))
    if cfg["save_tt"]:
        save_tt(last.tt, out / cfg["save_tt"], extra={"patch": last.patch.to_dict(),
                                                     "certificate": last.certificate.to_dict()})
    return EXIT_OK


def cmd_validate(cfg: dict, out: Path) -> int:
    seed = cfg["seed"]
    if cfg["oracle"] == "quantum":
        from .quantum import QcnnModel
        g, model = quantum_oracle(QcnnModel(cfg["qubits"], cfg["model_seed"]))
        centers = default_centers(g, model.q, seed)
        exact = SmoothnessBudget(model.derivative_bound(), model.derivative_bound(), "exact")
        budget_fn = lambda c, r: exact
        single = model.evaluate
        y_max = Y_MAX_DEFAULT
    else:
        inst = make_instance(cfg["oracle"], 6, cfg["p"],
                             substream(seed, "validate-family", cfg["oracle"]))
        g = BlackBox(inst.evaluate, inst.evaluate)
        centers = {"origin": np.zeros(inst.N)}
        budget_fn = lambda c, r: exact_budget(inst, r, cfg["p"]) if not np.any(c) else None
        single = inst.evaluate
        y_max = inst.derivative_bound(0, max(cfg["r"])) + cfg["noise"]
    records = ltts_validate(g, centers, cfg["r"], cfg["chi"], cfg["p"], cfg["n_train"], cfg["n_test"],
                            seed, budget_fn, y_max=y_max, sigma=cfg["noise"], shots=cfg["shots"],
                            timing_reps=cfg["timing_reps"], single_eval=single)
    write_text(out / "validation.csv", to_csv(records, VALIDATION_COLUMNS))
    primary = PRIMARY_CENTER if PRIMARY_CENTER in centers else next(iter(centers))
    r_ref = min(cfg["r"], key=lambda r: abs(r - 0.1))
    table2 = [rec for rec in records if rec.center == primary and rec.r == r_ref]
    write_text(out / "table2.csv", to_csv(table2, ("chi", "e_det", "cert_rmse", "erm_rmse", "te_ratio")))
    summary = {"primary_center": primary, "r_ref": r_ref,
               "centers": {k: [float(x) for x in v] for k, v in centers.items()},
               "table2": [{"chi": x.chi, "e_det": x.e_det, "cert_rmse": x.cert_rmse,
                           "erm_rmse": x.erm_rmse, "te_ratio": x.te_ratio} for x in table2],
               "by_r_chi": validation_summary(records)}
    write_text(out / "validation_summary.json", to_json(summary))
    print(f"primary center '{primary}' at r={r_ref:g}")
    print(f"{'chi':>4}{'E_det':>12}{'cert_RMSE':>12}{'ERM_RMSE':>12}{'te_ratio':>10}")
    for x in table2:
        print(f"{x.chi:>4}{x.e_det:>12.3e}{x.cert_rmse:>12.3e}{x.erm_rmse:>12.3e}{x.te_ratio:>10.2f}")
    gate_ok = all(x.cert_rmse <= x.e_det for x in records if x.provenance == "exact")
    gate_ok &= all(x.te_ratio <= 1.0 for x in table2 if x.chi >= 2)
    return EXIT_GATE if cfg["strict"] and not gate_ok else EXIT_OK


def cmd_eval(cfg: dict, out: Path) -> int:
    tt, meta = load_tt(cfg["model"])
    if "patch" not in meta:
        raise ConfigError("model", "surrogate file carries no patch description")
    patch = PatchSpec.from_dict(meta["patch"])
    with open(cfg["points"]) as fh:
        first = fh.readline()
    skip = 0 if all(_is_number(t) for t in first.strip().split(",")) else 1
    X = np.loadtxt(cfg["points"], delimiter=",", skiprows=skip, ndmin=2)
    if X.shape[1] != patch.N:
        raise ConfigError("points", f"expected {patch.N} columns, found {X.shape[1]}")
    inside = in_patch(X, patch)
    pred = np.full(len(X), np.nan)
    if inside.any():
        xi = np.clip((X[inside] - patch.center) / patch.r, -1.0, 1.0)
        pred[inside] = tt_eval_batch(tt, xi)
    lines = ["row,prediction,in_patch"]
    flag = np.where(inside, "1", "0")
    vals = np.char.mod("%.17g", pred)
    vals[~inside] = ""
    lines += [f"{i},{v},{f}" for i, (v, f) in enumerate(zip(vals.tolist(), flag.tolist()))]
    write_text(out / cfg["predictions"], "\n".join(lines) + "\n")
    n_out = int((~inside).sum())
    print(f"{len(X)} points, {n_out} outside the patch")
    return EXIT_GATE if cfg["strict"] and n_out else EXIT_OK


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


COMMANDS = {"rank-scan": cmd_rank_scan, "certify": cmd_certify, "validate": cmd_validate, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = resolve(args.command, args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = [cfg.get("model"), cfg.get("points")] if args.command == "eval" else []
        write_manifest(out, args.command, cfg, files)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

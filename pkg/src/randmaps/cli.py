"""Command-line runner: ``randmaps <subcommand> --config cfg.json [--seed S] [--out DIR]``.

Every subcommand calls one module operation family and writes
``<out>/<subcommand>/<config-stem>-s<seed>/{data.csv, summary.json, manifest.json}``.
Timings live only in the manifest, so CSV and summary content is a pure
function of the config and the seed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import resolve_backend, set_threads
from .config import config_hash, load_config, shipped_config
from .errors import ConfigError, RandMapsError

log = logging.getLogger("randmaps")

SUBCOMMANDS = ("moments", "stationary", "memory-loss", "coupling", "rde-tail", "correlation",
               "covariance", "clt", "coboundary", "multi-corr", "accept")


# helpers -----------------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _ensemble(cfg):
    from .ensemble import Ensemble

    return Ensemble.from_config(cfg["ensemble"])


def _observable(cfg):
    from .density import Observable

    f = Observable.from_config(cfg["observable"])
    if cfg.get("direction") is not None:
        v = np.asarray(cfg["direction"], dtype=np.float64)
        if v.size != f.dim:
            raise ConfigError(f"direction has {v.size} entries, observable has {f.dim} components")
        f = f.project(v)
    return f


def _constants(e, cfg, K=None):
    from .coupling import CouplingConstants

    K = cfg["K"] if K is None else K
    return CouplingConstants.for_ensemble(e, K=None if K == "auto" else float(K),
                                          alpha=cfg["alpha"], K_dprime=cfg["K_dprime"])


def _phi(e, cfg):
    from .transfer import compute_stationary

    st = cfg["stationary"]
    return compute_stationary(e, tol=st["tol"], max_iter=st["max_iter"], n_points=cfg["grid"]).phi


# subcommands --------------------------------------------------------------------------------
# each returns (header, rows, summary, passed) and may write extra files into ``out``


def cmd_moments(cfg, out):
    from .ensemble import check_standing_assumption
    from .errors import InfiniteMoment
    from .recursions import exact_first_moment_R, exact_second_moment_R, sup_first_moment_R

    e = _ensemble(cfg)
    m = cfg["moments"]
    rep = check_standing_assumption(e, alpha=cfg["alpha"], method=m["method"], samples=m["samples"],
                                    seed=cfg["seed"], raise_on_fail=False)
    rows, limit = [], None
    try:
        sup1 = sup_first_moment_R(e)
    except InfiniteMoment:
        sup1 = float("inf")
    for n in range(0, 21):
        try:
            v2, limit = exact_second_moment_R(e, n)
        except InfiniteMoment:
            v2 = float("inf")
        rows.append((n, exact_first_moment_R(e, n), v2))
    summary = dict(rep.to_dict(), sup_E_R=sup1, E_R2_limit=limit)
    return ["n", "E_R", "E_R2"], rows, summary, rep.passed


def cmd_stationary(cfg, out):
    from .transfer import compute_stationary

    st = cfg["stationary"]
    res = compute_stationary(_ensemble(cfg), tol=st["tol"], max_iter=st["max_iter"], n_points=cfg["grid"])
    rows = list(zip(res.phi.x, res.phi.values))
    return ["x", "phi"], rows, res.to_dict(), bool(res.lower_bound_ok)


def cmd_memory_loss(cfg, out):
    from .coupling import verify_memory_loss
    from .density import random_trig_density, regularize
    from .ensemble import sample_sequence

    e = _ensemble(cfg)
    consts = _constants(e, cfg)
    ml = cfg["memory_loss"]
    seed, n = cfg["seed"], cfg["grid"]
    rows, viol, per = [], 0, []
    for s in range(ml["sequences"]):
        om = sample_sequence(e, ml["horizon"], seed, s)
        p1, _ = regularize(random_trig_density(n, seed, 10_000 + 2 * s, ml["modes"]), consts.alpha)
        p2, _ = regularize(random_trig_density(n, seed, 10_001 + 2 * s, ml["modes"]), consts.alpha)
        rep = verify_memory_loss(om, p1, p2, consts, ml["horizon"])
        viol += rep.violations
        per.append(rep.to_dict())
        rows += [(s, k, rep.distance[k], rep.bound[k], int(rep.N[k])) for k in range(ml["horizon"] + 1)]
    summary = {"constants": consts.to_dict(), "violations": viol, "sequences": per}
    return ["sequence", "n", "distance", "bound", "N"], rows, summary, viol == 0


def cmd_coupling(cfg, out):
    from .coupling import coupling_count_tail

    e = _ensemble(cfg)
    consts = _constants(e, cfg)
    c = cfg["coupling"]
    tail = coupling_count_tail(e, consts, c["horizon"], c["sequences"], cfg["seed"], c["fraction"])
    rows = [(int(n), float(tail.p_const[n])) for n in tail.n]
    _write_rows(out / "visible_tail.csv", ["n", "j", "p"],
                [(int(n), j + 1, float(p)) for j, (n, p) in enumerate(zip(tail.n_jumps, tail.p_visible))])
    summary = {"constants": consts.to_dict(), "tail": tail.to_dict()}
    ok = bool(np.isfinite(tail.slope) and tail.slope < 0)
    return ["n", "p_rate_from_constants"], rows, summary, ok


def cmd_rde_tail(cfg, out):
    from .coupling import rde_simulate

    r = cfg["rde"]
    if "atoms" in r:
        law = (r["atoms"]["weights"], r["atoms"]["A"], r["atoms"]["B"])
        if r["K"] == "auto":
            raise ConfigError("config error at rde/K: explicit atoms need a numeric K")
        K = float(r["K"])
    else:
        law = _ensemble(cfg)
        K = _constants(law, cfg, r["K"]).K
    ell = float(r.get("ell", 2.0 * K))
    rep = rde_simulate(law, ell, K, r["n_max"], r["samples"], cfg["seed"])
    rows = list(zip(rep.n.tolist(), rep.survival, rep.bound, rep.band_lo, rep.band_hi))
    return ["n", "empirical", "bound", "band_lo", "band_hi"], rows, rep.to_dict(), not rep.violated


def cmd_correlation(cfg, out):
    from .stats import correlation_mc, correlation_operator

    e = _ensemble(cfg)
    phi = _phi(e, cfg)
    f = _observable(cfg)
    c = cfg["correlation"]
    op = correlation_operator(e, phi, f, f, c["n_max"])
    mc = correlation_mc(e, phi, f, f, c["n_max"], c["samples"], cfg["seed"])
    rows = list(zip(op.lags.tolist(), op.values, mc.values, mc.se))
    z = np.abs(mc.values - op.values) / np.where(mc.se > 0, mc.se, np.inf)
    summary = {"operator": op.to_dict(), "mc": mc.to_dict(), "max_abs_z": float(z.max())}
    return ["lag", "operator", "mc", "mc_se"], rows, summary, None


def cmd_covariance(cfg, out):
    from .stats import covariance_batch_means, covariance_series

    e = _ensemble(cfg)
    phi = _phi(e, cfg)
    f = _observable(cfg)
    c = cfg["covariance"]
    ser = covariance_series(e, phi, f)
    bm = covariance_batch_means(e, phi, f, c["batch_length"], c["batches"], cfg["seed"])
    rows = []
    d = ser.sigma2.shape[0]
    for i in range(d):
        for j in range(d):
            rows.append((i, j, ser.sigma2[i, j], bm.sigma2[i, j], bm.se[i, j]))
    summary = {"series": ser.to_dict(), "batch_means": bm.to_dict()}
    ok = bool(np.all(np.abs(ser.sigma2 - bm.sigma2) <= 4 * bm.se + 1e-12))
    return ["i", "j", "series", "batch_means", "batch_se"], rows, summary, ok


def cmd_clt(cfg, out):
    from .stats import clt_test, covariance_series

    e = _ensemble(cfg)
    phi = _phi(e, cfg)
    f = _observable(cfg)
    c = cfg["clt"]
    sigma2 = float(covariance_series(e, phi, f).sigma2[0, 0])
    rows, reps = [], []
    for r in range(c["replications"]):
        rep = clt_test(e, phi, f, None, c["n"], c["samples"], cfg["seed"] + r, sigma2=sigma2)
        reps.append(rep.to_dict())
        rows.append((r, cfg["seed"] + r, rep.ks_stat, rep.ks_pvalue, int(bool(rep.ks_pass)),
                     rep.ad_stat, int(bool(rep.ad_pass))))
    summary = {"sigma2": sigma2, "replications": reps, "ks_passes": sum(r[4] for r in rows)}
    return (["replication", "seed", "ks_stat", "ks_pvalue", "ks_pass", "ad_stat", "ad_pass"], rows,
            summary, None)


def cmd_coboundary(cfg, out):
    from .stats import coboundary_residual, covariance_series

    e = _ensemble(cfg)
    phi = _phi(e, cfg)
    f = _observable(cfg)
    c = cfg["coboundary"]
    res = coboundary_residual(e, phi, f, m_max=c["m_max"], n_maps=c["n_maps"], seed=cfg["seed"])
    sigma2 = float(covariance_series(e, phi, f).sigma2[0, 0])
    x = np.arange(phi.n_points) / phi.n_points
    rows = list(zip(x, res.g))
    summary = dict(res.to_dict(), sigma2=sigma2)
    return ["x", "g"], rows, summary, None


def cmd_multi_corr(cfg, out):
    from .stats import multiple_correlation_check

    e = _ensemble(cfg)
    phi = _phi(e, cfg)
    f = _observable(cfg)
    c = cfg["multi_corr"]
    rep = multiple_correlation_check(e, phi, [f], [c["t"]], c["m"], c["k"], c["n_max"], c["samples"],
                                     cfg["seed"], eps=c["eps"])
    rows = [(int(n), abs(d), s, abs(o), int(g))
            for n, d, s, o, g in zip(rep.lags, rep.diff, rep.se, rep.operator_diff, rep.significant)]
    ok = bool(np.isfinite(rep.slope) and rep.slope < 0)
    return ["lag", "abs_diff", "se", "operator_abs_diff", "significant"], rows, rep.to_dict(), ok


COMMANDS = {
    "moments": cmd_moments,
    "stationary": cmd_stationary,
    "memory-loss": cmd_memory_loss,
    "coupling": cmd_coupling,
    "rde-tail": cmd_rde_tail,
    "correlation": cmd_correlation,
    "covariance": cmd_covariance,
    "clt": cmd_clt,
    "coboundary": cmd_coboundary,
    "multi-corr": cmd_multi_corr,
}


# manifests ---------------------------------------------------------------------------------

def _manifest(out, sub, cfg, timings, passed, failures):
    files = {p.name: _sha256(p) for p in sorted(out.iterdir())
             if p.is_file() and p.name != "manifest.json"}
    doc = {"subcommand": sub, "config_name": cfg.get("name"), "config_hash": config_hash(cfg),
           "seed": cfg.get("seed"), "version": __version__, "backend": resolve_backend(),
           "timings": timings, "files": files, "passed": passed, "failures": failures}
    _write_json(out / "manifest.json", doc)
    return doc


def run(sub, cfg, out_root, stem):
    """Execute one subcommand; returns ``(exit_code, run_dir)``."""
    out = Path(out_root) / sub / f"{stem}-s{cfg['seed']}"
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    header, rows, summary, passed = COMMANDS[sub](cfg, out)
    elapsed = time.perf_counter() - t0
    _write_rows(out / "data.csv", header, rows)
    _write_json(out / "summary.json", {"config": cfg, "result": summary, "passed": passed})
    failures = [] if passed in (True, None) else [sub]
    _manifest(out, sub, cfg, {sub: elapsed}, passed, failures)
    return 0, out


def run_accept(cfg, out_root, stem, only=None, determinism=True):
    from .acceptance import run_suite

    out = Path(out_root) / "accept" / f"{stem}-s{cfg['seed']}"
    out.mkdir(parents=True, exist_ok=True)
    results = run_suite(out, cfg["seed"], only=only, determinism=determinism, echo=print)
    _write_rows(out / "data.csv", ["id", "name", "passed", "metric"],
                [(r.id, r.name, int(r.passed), r.metric) for r in results])
    _write_json(out / "summary.json", {"seed": cfg["seed"],
                                       "criteria": [dict(r.to_dict(), runtime=None) for r in results]})
    failures = [{"id": r.id, "name": r.name, "metric": r.metric} for r in results if not r.passed]
    over = [r.id for r in results if not r.within_budget]
    timings = {f"criterion_{r.id}": r.runtime for r in results}
    doc = _manifest(out, "accept", cfg, timings, not failures, failures)
    doc["over_budget"] = over
    _write_json(out / "manifest.json", doc)
    if over:
        log.warning("criteria over their runtime budget: %s", over)
    return (1 if failures else 0), out


# report ------------------------------------------------------------------------------------

def report(root):
    """Aggregate every manifest under ``root``; failures first. Returns the rows."""
    root = Path(root)
    rows = []
    for mpath in sorted(root.rglob("manifest.json")):
        doc = json.loads(mpath.read_text())
        status = {True: "pass", False: "FAIL", None: "n/a"}[doc.get("passed")]
        fails = doc.get("failures") or []
        detail = "; ".join(f if isinstance(f, str) else f"{f['id']} {f['name']}" for f in fails)
        rows.append((status, doc.get("subcommand"), str(mpath.parent.relative_to(root)), detail))
    rows.sort(key=lambda r: (r[0] != "FAIL", r[1] or "", r[2]))
    if rows:
        _write_rows(root / "report.csv", ["status", "subcommand", "run", "failures"], rows)
    return rows


# entry point -------------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="randmaps", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="experiment config (JSON); 'accept' defaults to the shipped suite")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", default="runs", help="output root (default: runs)")
        sp.add_argument("--grid", type=int, help="override the grid size N")
        sp.add_argument("--threads", type=int, help="numba worker threads")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, value parsed as JSON (repeatable)")
        if name == "accept":
            sp.add_argument("--only", type=int, action="append", metavar="ID",
                            help="run only these criteria (repeatable)")
            sp.add_argument("--no-determinism", action="store_true",
                            help="skip the rerun that checks byte-identical CSVs")
    rp = sub.add_parser("report")
    rp.add_argument("dir", help="directory holding run manifests")
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "report":
        rows = report(args.dir)
        if not rows:
            print("no manifests found")
        for status, sub, name, detail in rows:
            print(f"{status:4s}  {sub:12s} {name}" + (f"  [{detail}]" if detail else ""))
        return 0
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.grid is not None:
        overrides.append(f"grid={args.grid}")
    try:
        path = args.config or (shipped_config("mix_a") if args.command == "accept" else None)
        if path is None:
            raise ConfigError(f"'{args.command}' needs --config")
        cfg = load_config(path, overrides)
        stem = Path(path).stem if args.config else "shipped"
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    set_threads(args.threads)
    try:
        if args.command == "accept":
            code, out = run_accept(cfg, args.out, stem, only=set(args.only) if args.only else None,
                                   determinism=not args.no_determinism)
        else:
            code, out = run(args.command, cfg, args.out, stem)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RandMapsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

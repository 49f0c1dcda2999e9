"""Desk-scale acceptance suite.

Each criterion writes its curves as CSV into the run directory and
returns a :class:`CriterionResult`. CSV content never includes timings,
so two runs with the same seed must produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import shutil
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import kernels
from .coupling import CouplingConstants, mc_second_moment_R, rde_simulate, verify_memory_loss
from .density import (DensityGrid, Observable, bin_masses, random_trig_density, regularize,
                      sample_from_density)
from .ensemble import doubling, mix_a, sample_sequence
from .recursions import brute_force_second_moment_R, exact_second_moment_R
from .rng import Streams
from .stats import (clt_test, coboundary_residual, correlation_operator, covariance_batch_means,
                    covariance_series, multiple_correlation_check)
from .transfer import (annealed_transfer_apply, compute_stationary, koopman_apply, quenched_push,
                       tilted_quenched_push, transfer_apply, verify_holder_propagation)

GRID = 4096


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    metric: str
    runtime: float = 0.0
    budget: float = float("inf")
    details: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def within_budget(self):
        return self.runtime <= self.budget

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.id:2d} {self.name}: {self.metric} ({self.runtime:.1f}s / {self.budget:g}s)"

    def to_dict(self):
        return {"id": self.id, "name": self.name, "passed": self.passed, "metric": self.metric,
                "runtime": self.runtime, "budget": self.budget, "details": self.details,
                "files": self.files}


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _f(x):
    return f"{x:.6g}"


# 1 ----------------------------------------------------------------------------------------

TWO_ATOM = ([0.5, 0.5], [2.0, 4.0], [1.0, 0.0])


def criterion_moments(out, seed):
    w, lam, dlt = TWO_ATOM
    v2, _ = exact_second_moment_R(TWO_ATOM, 2)
    target = float(Fraction(53, 64))
    rel2 = abs(v2 - target) / target
    rows, brute_ok, mc_ok = [], True, True
    for n in range(1, 7):
        ex, _ = exact_second_moment_R(TWO_ATOM, n)
        bf = brute_force_second_moment_R(w, lam, dlt, n)
        mc, se = mc_second_moment_R(TWO_ATOM, n, 100_000, seed)
        brute_ok &= abs(ex - bf) <= 1e-12 * abs(bf)
        mc_ok &= abs(mc - ex) <= 4 * se
        rows.append((n, ex, bf, mc, se, (mc - ex) / se))
    _write_csv(out / "c01_second_moment.csv", ["n", "exact", "brute_force", "mc", "mc_se", "z"], rows)
    ok = bool(rel2 <= 1e-12 and brute_ok and mc_ok)
    zmax = max(abs(r[5]) for r in rows)
    return CriterionResult(1, "exact second moment of R_n", ok,
                           f"E[R_2^2]={v2!r} rel.err {rel2:.1e}, brute ok={brute_ok}, mc max|z|={zmax:.2f}",
                           budget=10, details={"value_n2": v2, "rel_err": rel2, "brute_ok": bool(brute_ok),
                                               "mc_ok": bool(mc_ok), "max_abs_z": zmax},
                           files=["c01_second_moment.csv"])


# 2 ----------------------------------------------------------------------------------------

RDE_LAW = ([0.5, 0.5], [0.25, 0.75], [0.0, 2.0])


def criterion_rde(out, seed):
    rep = rde_simulate(RDE_LAW, ell=8.0, K=4.0, n_max=60, samples=100_000, seed=seed)
    rep.to_csv(out / "c02_rde_tail.csv")
    nviol = int(rep.violations.sum())
    return CriterionResult(2, "RDE first-passage tail bound", not rep.violated,
                           f"violations {nviol}/61, max empirical/bound {rep.max_ratio:.3f}",
                           budget=30, details=rep.to_dict(), files=["c02_rde_tail.csv"])


# 3 ----------------------------------------------------------------------------------------

def criterion_memory_loss(out, seed, sequences=100, horizon=50):
    e = mix_a()
    consts = CouplingConstants.for_ensemble(e)
    rows, total_viol, couplings = [], 0, []
    for s in range(sequences):
        om = sample_sequence(e, horizon, seed, s)
        psi1, _ = regularize(random_trig_density(GRID, seed, 10_000 + 2 * s), consts.alpha)
        psi2, _ = regularize(random_trig_density(GRID, seed, 10_001 + 2 * s), consts.alpha)
        rep = verify_memory_loss(om, psi1, psi2, consts, horizon)
        total_viol += rep.violations
        couplings.append(int(rep.N[-1]))
        for n in range(horizon + 1):
            rows.append((s, n, rep.distance[n], rep.bound[n], int(rep.N[n])))
    _write_csv(out / "c03_memory_loss.csv", ["sequence", "n", "distance", "bound", "N"], rows)
    return CriterionResult(3, "pathwise memory loss", total_viol == 0,
                           f"violations {total_viol} over {sequences} sequences, "
                           f"couplings by n={horizon}: {min(couplings)}..{max(couplings)}",
                           budget=300, details={"violations": total_viol, "kappa": consts.kappa,
                                                "K": consts.K, "couplings": couplings},
                           files=["c03_memory_loss.csv"])


# 4 ----------------------------------------------------------------------------------------

def criterion_stationary(out, seed, chains=1000, steps=10_000, nbins=64):
    sd = compute_stationary(doubling(), tol=1e-13, n_points=GRID)
    e = mix_a()
    sm = compute_stationary(e, tol=1e-10, n_points=GRID)
    x0 = sample_from_density(sm.phi, chains, seed, stream=0)
    keys = Streams(seed).keys(chains, offset=1)
    counts = kernels.occupation_counts(e.kernel_law, x0, keys, steps, nbins)
    freq = counts / steps
    emp = freq.mean(axis=0)
    se = freq.std(axis=0, ddof=1) / np.sqrt(chains)
    mass = bin_masses(sm.phi, nbins)
    z = (emp - mass) / se
    hist_ok = bool(np.all(np.abs(z) <= 3.0))
    _write_csv(out / "c04_histogram.csv", ["bin", "phi_mass", "empirical", "se", "z"],
               [(b, mass[b], emp[b], se[b], z[b]) for b in range(nbins)])
    sm.phi.to_csv(out / "c04_phi_mix_a.csv")
    ok = bool(sd.residual < 1e-12 and np.max(np.abs(sd.phi.values - 1.0)) < 1e-12
              and sm.residual < 1e-8 and sm.inf_phi > 0 and sm.lower_bound_ok and hist_ok)
    return CriterionResult(
        4, "stationary density", ok,
        f"doubling res {sd.residual:.1e}; mix-A res {sm.residual:.1e}, inf phi {sm.inf_phi:.4f} "
        f">= {sm.lower_bound:.4f}, histogram max|z| {np.max(np.abs(z)):.2f} on {nbins} bins",
        budget=120,
        details={"doubling": sd.to_dict(), "mix_a": sm.to_dict(), "hist_max_abs_z": float(np.max(np.abs(z))),
                 "hist_bins_over_3se": int(np.sum(np.abs(z) > 3)), "steps_total": chains * steps},
        files=["c04_histogram.csv", "c04_phi_mix_a.csv"])


# 5 ----------------------------------------------------------------------------------------

def _random_trig_grid(n, seed, stream, modes=8):
    u = Streams(seed).uniforms(stream, 2 * modes + 1) * 2.0 - 1.0
    x = np.arange(n) / n
    k = np.arange(1, modes + 1)
    ang = 2.0 * np.pi * x[:, None] * k
    return u[0] + np.cos(ang) @ u[1:modes + 1] + np.sin(ang) @ u[modes + 1:]


def criterion_correlation(out, seed, pairs=50):
    e = doubling()
    f = Observable.cosines({1: 1.0, 2: 1.0})
    curve = correlation_operator(e, np.ones(GRID), f, f, 10)
    expected = np.zeros(11)
    expected[0], expected[1] = 1.0, 0.5
    curve_err = float(np.max(np.abs(curve.values - expected)))
    curve.to_csv(out / "c05_correlation.csv")
    rows, worst = [], 0.0
    for name, ens in (("doubling", e), ("mix-A", mix_a())):
        for p in range(pairs):
            g = _random_trig_grid(GRID, seed, 20_000 + 2 * p)
            h = _random_trig_grid(GRID, seed, 20_001 + 2 * p)
            lhs = float(np.mean(g * koopman_apply(ens, h)))
            rhs = float(np.mean(annealed_transfer_apply(ens, g) * h))
            worst = max(worst, abs(lhs - rhs))
            rows.append((name, p, lhs, rhs, lhs - rhs))
    _write_csv(out / "c05_duality.csv", ["ensemble", "pair", "g_Qf", "Pg_f", "diff"], rows)
    ok = curve_err <= 1e-6 and worst <= 1e-8
    return CriterionResult(5, "correlation exactness and duality", ok,
                           f"curve max err {curve_err:.1e}, duality max diff {worst:.1e}",
                           budget=30, details={"curve_err": curve_err, "duality_max": worst},
                           files=["c05_correlation.csv", "c05_duality.csv"])


# 6 ----------------------------------------------------------------------------------------

def criterion_covariance(out, seed):
    e = doubling()
    phi = np.ones(GRID)
    f = Observable.cosines({1: 1.0})
    ser = covariance_series(e, phi, f)
    s_ser = float(ser.sigma2[0, 0])
    bm = covariance_batch_means(e, phi, f, 2048, 4096, seed)
    s_bm, se_bm = float(bm.sigma2[0, 0]), float(bm.se[0, 0])
    fc = Observable.cosines({1: 1.0, 2: -1.0})
    s_cob = float(covariance_series(e, phi, fc).sigma2[0, 0])
    cob = coboundary_residual(e, phi, fc)
    x = np.arange(GRID) / GRID
    diff = cob.g - np.cos(2 * np.pi * x)
    g_err = float(np.max(np.abs(diff - diff.mean())))
    _write_csv(out / "c06_covariance.csv", ["quantity", "value", "se"],
               [("series", s_ser, 0.0), ("batch_means", s_bm, se_bm),
                ("coboundary_series", s_cob, 0.0), ("coboundary_residual", cob.residual, 0.0),
                ("cobounding_error", g_err, 0.0)])
    ok = (abs(s_ser - 0.5) <= 1e-8 and abs(s_bm - 0.5) <= 4 * se_bm and s_cob < 1e-3
          and cob.residual < 1e-4 and g_err < 1e-4)
    return CriterionResult(6, "limit covariance and coboundary", bool(ok),
                           f"series {s_ser:.10f}, batch means {s_bm:.4f}+-{se_bm:.4f}, "
                           f"coboundary Sigma^2 {s_cob:.1e}, residual {cob.residual:.1e}",
                           budget=120, details={"series": s_ser, "batch_means": s_bm, "batch_se": se_bm,
                                                "coboundary_sigma2": s_cob, "residual": cob.residual,
                                                "g_err": g_err},
                           files=["c06_covariance.csv"])


# 7 ----------------------------------------------------------------------------------------

def criterion_clt(out, seed, replications=40, n=4096, samples=10_000):
    e = doubling()
    f = Observable.cosines({1: 1.0})
    rows, passes = [], 0
    for r in range(replications):
        s = seed + r
        rep = clt_test(e, np.ones(GRID), f, None, n, samples, s, sigma2=0.5)
        passes += bool(rep.ks_pass)
        rows.append((r, s, rep.ks_stat, rep.ks_pvalue, int(rep.ks_pass), rep.ad_stat, int(rep.ad_pass)))
    _write_csv(out / "c07_clt.csv", ["replication", "seed", "ks_stat", "ks_pvalue", "ks_pass",
                                     "ad_stat", "ad_pass"], rows)
    ad_passes = sum(r[6] for r in rows)
    return CriterionResult(7, "central limit theorem", passes >= 38,
                           f"KS passes {passes}/{replications} (AD {ad_passes}/{replications})",
                           budget=300, details={"ks_passes": passes, "ad_passes": ad_passes},
                           files=["c07_clt.csv"])


# 8 ----------------------------------------------------------------------------------------

def criterion_holder(out, seed, sequences=100, n=10, alpha=0.5):
    e = mix_a()
    ones = DensityGrid.uniform(GRID)
    rows, ok, sup_ok, margin = [], True, True, np.inf
    for s in range(sequences):
        om = sample_sequence(e, n, seed, s)
        rep = verify_holder_propagation(om, n, ones, alpha, tol=1e-3)
        ok &= rep.ok
        sup_ok &= rep.sup_ok
        margin = min(margin, float(np.min(rep.rhs - rep.lhs)), float(np.min(rep.sup_bound - rep.sup)))
        for k in range(n):
            rows.append((s, k + 1, rep.lhs[k], rep.rhs[k], rep.sup[k], rep.sup_bound[k]))
    _write_csv(out / "c08_holder.csv", ["sequence", "n", "log_holder", "bound", "sup", "sup_bound"], rows)
    return CriterionResult(8, "Holder propagation", bool(ok and sup_ok),
                           f"holder ok={bool(ok)}, sup ok={bool(sup_ok)}, min margin {margin:.3g}",
                           budget=120, details={"holder_ok": bool(ok), "sup_ok": bool(sup_ok),
                                                "min_margin": margin},
                           files=["c08_holder.csv"])


# 9 ----------------------------------------------------------------------------------------

def criterion_tilted(out, seed, n_max=8, t=0.3, sequences=5):
    f = Observable.cosines({1: 1.0})
    h = DensityGrid.from_function(lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x), GRID)
    rows, worst, exact, t0_gap = [], 0.0, True, 0.0
    cases = [("doubling", sample_sequence(doubling(), n_max, seed, 0))]
    cases += [("mix-A", sample_sequence(mix_a(), n_max, seed, s)) for s in range(sequences)]
    for ci, (name, om) in enumerate(cases):
        for n in range(1, n_max + 1):
            res = tilted_quenched_push(om, [(t, f)] * n, h, return_both=True)
            worst = max(worst, res.max_diff)
            zero = tilted_quenched_push(om, [(0.0, f)] * n, h)
            plain = h.values.copy()
            for k in range(n):
                plain = transfer_apply(om.map(k), plain)
            exact &= bool(np.array_equal(zero.real, plain)) and not np.any(zero.imag)
            t0_gap = max(t0_gap, float(np.max(np.abs(zero.real - quenched_push(om, h, n).values))))
            rows.append((name, ci, n, res.max_diff))
    _write_csv(out / "c09_tilted.csv", ["ensemble", "case", "n", "max_diff"], rows)
    ok = worst <= 1e-6 and exact and t0_gap <= 1e-10
    return CriterionResult(9, "tilted transfer identity", bool(ok),
                           f"max left/right diff {worst:.1e}, t=0 bitwise={exact}, "
                           f"t=0 vs renormalised push {t0_gap:.1e}",
                           budget=60, details={"max_diff": worst, "t0_exact": exact, "t0_gap": t0_gap},
                           files=["c09_tilted.csv"])


# 10 ---------------------------------------------------------------------------------------

def criterion_multicorr(out, seed):
    e = mix_a()
    phi = compute_stationary(e, n_points=GRID).phi
    f = Observable.cosines({1: 1.0})
    rep = multiple_correlation_check(e, phi, [f], [0.1], 2, 2, 30, 1_000_000, seed)
    zero = multiple_correlation_check(e, phi, [f], [0.0], 2, 2, 30, 10_000, seed)
    rows = [(int(n), abs(d), s, abs(o), int(g))
            for n, d, s, o, g in zip(rep.lags, rep.diff, rep.se, rep.operator_diff, rep.significant)]
    _write_csv(out / "c10_multicorr.csv", ["lag", "abs_diff", "se", "operator_abs_diff", "significant"], rows)
    ok = bool(np.isfinite(rep.slope) and rep.slope < 0 and rep.r2 > 0.8 and zero.zero_at_t0)
    return CriterionResult(10, "multiple-correlation decay", ok,
                           f"slope {rep.slope:.3f}, R^2 {rep.r2:.3f} on {int(rep.significant.sum())} "
                           f"significant lags, t=0 zero={zero.zero_at_t0}",
                           budget=300, details=dict(rep.to_dict(), zero_at_t0=zero.zero_at_t0),
                           files=["c10_multicorr.csv"])


CRITERIA = {
    1: criterion_moments,
    2: criterion_rde,
    3: criterion_memory_loss,
    4: criterion_stationary,
    5: criterion_correlation,
    6: criterion_covariance,
    7: criterion_clt,
    8: criterion_holder,
    9: criterion_tilted,
    10: criterion_multicorr,
}


def run_criteria(out, seed=1, only=None, echo=None):
    """Run criteria 1..10 (or ``only``) into ``out``; returns the results."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for cid, fn in CRITERIA.items():
        if only and cid not in only:
            continue
        t0 = time.perf_counter()
        res = fn(out, seed)
        res.runtime = time.perf_counter() - t0
        results.append(res)
        if echo:
            echo(res.line())
    return results


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def criterion_determinism(out, seed, only=None, echo=None):
    """Rerun the criteria into a scratch directory and compare every CSV byte for byte."""
    scratch = Path(out) / "_rerun"
    if scratch.exists():
        shutil.rmtree(scratch)
    t0 = time.perf_counter()
    rerun = run_criteria(scratch, seed, only)
    rows, same = [], True
    for p in sorted(Path(out).glob("c*.csv")):
        q = scratch / p.name
        a, b = _sha(p), _sha(q) if q.exists() else ""
        same &= a == b
        rows.append((p.name, a, b, int(a == b)))
    shutil.rmtree(scratch)
    _write_csv(Path(out) / "c11_determinism.csv", ["file", "sha256_first", "sha256_rerun", "equal"], rows)
    res = CriterionResult(11, "determinism of the accept suite", bool(same and rows),
                          f"{sum(r[3] for r in rows)}/{len(rows)} CSV files byte-identical",
                          runtime=time.perf_counter() - t0, budget=sum(r.budget for r in rerun),
                          details={"files": len(rows)},
                          files=["c11_determinism.csv"])
    if echo:
        echo(res.line())
    return res


def run_suite(out, seed=1, only=None, determinism=True, echo=None):
    """Full suite: criteria 1..10, then the determinism rerun (criterion 11)."""
    results = run_criteria(out, seed, only, echo)
    if determinism and (not only or 11 in only):
        results.append(criterion_determinism(out, seed, only, echo))
    return results

"""Correlations, limit covariance, CLT checks and the coboundary detector.

Observables are :class:`~randmaps.density.Observable` instances (exact
evaluation along trajectories) or, for the operator estimators, grid
functions of shape ``(N,)`` or ``(d, N)``. Expectations against the
stationary law use the computed density ``phi``.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .density import DensityGrid, Observable, integrate, sample_from_density
from .errors import DegenerateDirection, SeriesDiverged, TailNotConverged
from .rng import Streams
from .transfer import annealed_transfer_apply, koopman_apply, koopman_apply_map

log = logging.getLogger(__name__)

Z99 = float(stats.norm.ppf(0.995))
TAIL_TOL = 1e-9
MIN_SAMPLES = 100


def _phi(phi):
    return phi.values if isinstance(phi, DensityGrid) else np.asarray(phi, dtype=np.float64)


def _grid(f, n):
    """Grid values with shape ``(d, n)``."""
    if isinstance(f, Observable):
        return f.grid(n)
    v = np.asarray(f)
    return v[None, :] if v.ndim == 1 else v


def _scalar_obs(f):
    if not isinstance(f, Observable):
        raise TypeError("trajectory estimators need an Observable (exact evaluation off the grid)")
    return f


def _mean(f_grid, pv):
    return integrate(f_grid * pv)


def _starts(e, phi, samples, seed):
    """Stationary initial points (stream 0) and per-trajectory keys (streams 1..)."""
    x0 = sample_from_density(phi, samples, seed, stream=0)
    keys = Streams(seed).keys(samples, offset=1)
    return x0, keys


# correlations --------------------------------------------------------------------

@dataclass
class CorrelationCurve:
    lags: np.ndarray
    values: np.ndarray
    estimator: str
    se: np.ndarray = None

    def to_csv(self, path):
        se = self.se if self.se is not None else np.zeros(len(self.lags))
        cplx = np.iscomplexobj(self.values)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag", "value", "imag", "se"] if cplx else ["lag", "value", "se"])
            for n, v, s in zip(self.lags, self.values, se):
                row = [int(n), repr(float(np.real(v)))]
                if cplx:
                    row.append(repr(float(np.imag(v))))
                w.writerow(row + [repr(float(s))])

    def to_dict(self):
        vals = self.values
        out = {"estimator": self.estimator, "lags": self.lags.tolist(),
               "values": np.real(vals).tolist()}
        if np.iscomplexobj(vals):
            out["imag"] = np.imag(vals).tolist()
        if self.se is not None:
            out["se"] = self.se.tolist()
        return out


def correlation_operator(e, phi, f, g, n_max, route="transfer"):
    """``C_n = int f Q^n g phi dm - int f phi dm int g phi dm`` for ``n <= n_max``.

    ``route="transfer"`` evaluates the dual form ``int P^n(f phi) g dm``;
    ``route="koopman"`` iterates ``Q`` on ``g``. Koopman iterates of an
    expanding map gain frequency at every step and alias on the grid after
    ``log2 N`` doublings, so the transfer route is the default.
    """
    pv = _phi(phi)
    n = pv.size
    fv = _grid(f, n)[0].astype(np.float64)
    gv = _grid(g, n)[0].astype(np.float64)
    mean_f, mean_g = _mean(fv, pv), _mean(gv, pv)
    vals = np.empty(n_max + 1)
    if route == "transfer":
        h = fv * pv
        for k in range(n_max + 1):
            vals[k] = integrate(h * gv) - mean_f * mean_g
            if k < n_max:
                h = annealed_transfer_apply(e, h)
    elif route == "koopman":
        h = gv
        for k in range(n_max + 1):
            vals[k] = integrate(fv * h * pv) - mean_f * mean_g
            if k < n_max:
                h = koopman_apply(e, h)
    else:
        raise ValueError(f"unknown route {route!r}")
    return CorrelationCurve(np.arange(n_max + 1), vals, "operator")


def correlation_mc(e, phi, f, g, n_max, samples, seed, backend=None):
    """Trajectory estimate of ``E f(X_0) g(X_n) - E f(X_0) E g(X_n)`` from stationary starts."""
    f, g = _scalar_obs(f), _scalar_obs(g)
    x0, keys = _starts(e, phi, samples, seed)
    width = max(f.cos_coef.shape[1], g.cos_coef.shape[1])
    cos = np.vstack([_pad(f.cos_coef[:1], width), _pad(g.cos_coef[:1], width)])
    sin = np.vstack([_pad(f.sin_coef[:1], width), _pad(g.sin_coef[:1], width)])
    vals = kernels.orbit_values(e.kernel_law, x0, keys, n_max, cos, sin, backend)
    f0 = vals[:, 0, 0]
    gn = vals[:, :, 1]
    fc = f0 - f0.mean()
    gc = gn - gn.mean(axis=0)
    prod = fc[:, None] * gc
    est = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / np.sqrt(samples)
    return CorrelationCurve(np.arange(n_max + 1), est, "mc", se)


def _pad(a, width):
    out = np.zeros((a.shape[0], width))
    out[:, : a.shape[1]] = a
    return out


# covariance ------------------------------------------------------------------------

@dataclass
class CovarianceEstimate:
    sigma2: np.ndarray
    method: str
    truncation: int
    se: np.ndarray = None
    centering: np.ndarray = None
    terms: list = field(default_factory=list, repr=False)

    @property
    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(0.5 * (self.sigma2 + self.sigma2.T)).min())

    def to_dict(self):
        out = {"method": self.method, "sigma2": self.sigma2.tolist(),
               "truncation": self.truncation, "min_eigenvalue": self.min_eigenvalue}
        if self.se is not None:
            out["se"] = self.se.tolist()
        if self.centering is not None:
            out["centering"] = self.centering.tolist()
        return out


def covariance_series(e, phi, f, m_max=2000, tail_tol=TAIL_TOL, route="transfer"):
    """``Sigma^2 = int f f^T dmu + sum_{m>=1} int (f (Q^m f)^T + Q^m f f^T) dmu``.

    ``f`` is centred against ``phi`` first. Summation stops once three
    consecutive terms have max-norm below ``tail_tol``. The terms are
    evaluated as ``int P^m(f_i phi) f_j dm`` unless ``route="koopman"``
    (see :func:`correlation_operator`).

    Raises
    ------
    TailNotConverged
        If ``m_max`` terms do not reach the tolerance.
    """
    pv = _phi(phi)
    fv = _grid(f, pv.size).astype(np.float64)
    means = _mean(fv, pv)
    fv = fv - means[:, None]
    wf = fv * pv
    sigma = (wf @ fv.T) / pv.size
    if route not in ("transfer", "koopman"):
        raise ValueError(f"unknown route {route!r}")
    h = wf.copy() if route == "transfer" else fv.copy()
    small, norms = 0, []
    m = 0
    for m in range(1, m_max + 1):
        if route == "transfer":
            h = np.vstack([annealed_transfer_apply(e, row) for row in h])
            c = (h @ fv.T) / pv.size
        else:
            h = np.vstack([koopman_apply(e, row) for row in h])
            c = (wf @ h.T) / pv.size
        term = c + c.T
        sigma += term
        nrm = float(np.max(np.abs(term)))
        norms.append(nrm)
        small = small + 1 if nrm < tail_tol else 0
        if small >= 3:
            break
    else:
        last = norms[-5:]
        trend = "not decreasing" if any(b > a for a, b in zip(last, last[1:])) else "decreasing too slowly"
        raise TailNotConverged(f"series terms {trend}: last norm {norms[-1]:.3g} after {m_max} lags")
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceEstimate(sigma, "series", m, centering=means, terms=norms)


def _birkhoff(e, phi, f, checkpoints, samples, seed, backend):
    x0, keys = _starts(e, phi, samples, seed)
    return kernels.birkhoff_sums(e.kernel_law, x0, keys, checkpoints, f.cos_coef, f.sin_coef, backend)


def covariance_batch_means(e, phi, f, n, batches, seed, backend=None):
    """Empirical ``E[(S_n - n m)(S_n - n m)^T] / n`` over independent stationary starts.

    ``m = int f phi dm``; entry standard errors come from the batch spread.
    """
    f = _scalar_obs(f) if not isinstance(f, Observable) else f
    pv = _phi(phi)
    means = _mean(f.grid(pv.size), pv)
    S = _birkhoff(e, phi, f, [n], batches, seed, backend)[:, 0, :]
    Y = (S - n * means) / np.sqrt(n)
    outer = Y[:, :, None] * Y[:, None, :]
    sigma = outer.mean(axis=0)
    se = outer.std(axis=0, ddof=1) / np.sqrt(batches)
    return CovarianceEstimate(0.5 * (sigma + sigma.T), "batch_means", n, se=se, centering=means)


# variance growth ---------------------------------------------------------------------------

@dataclass
class VarianceGrowthReport:
    n: np.ndarray
    second_moment: np.ndarray
    residual: np.ndarray
    se: np.ndarray
    slope: float
    slope_se: float
    sigma2_v: float
    no_trend: bool

    def to_dict(self):
        return {"n": self.n.tolist(), "second_moment": self.second_moment.tolist(),
                "residual": self.residual.tolist(), "se": self.se.tolist(), "slope": self.slope,
                "slope_se": self.slope_se, "sigma2_v": self.sigma2_v, "no_trend": self.no_trend}


def variance_growth_check(e, phi, f, v, n_list, samples=4096, seed=0, sigma2=None, backend=None):
    """Test that ``E S_n(f_v)^2 - n v^T Sigma^2 v`` has no linear trend in ``n``.

    The slope is a fixed linear combination of the per-``n`` residuals, so
    it is computed per trajectory and its standard error taken across
    trajectories; "no trend" means ``|slope| <= z_0.995 * se``.
    """
    fv = f.project(v) if np.ndim(v) else f
    if sigma2 is None:
        sigma2 = covariance_series(e, phi, fv).sigma2[0, 0]
    n = np.asarray(sorted(n_list), dtype=np.int64)
    pv = _phi(phi)
    mean = _mean(fv.grid(pv.size), pv)[0]
    S = _birkhoff(e, phi, fv, n, samples, seed, backend)[:, :, 0] - n * mean
    per = S * S - n * sigma2
    resid = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / np.sqrt(samples)
    x = n - n.mean()
    c = x / np.sum(x * x)
    slopes = per @ c
    slope = float(slopes.mean())
    slope_se = float(slopes.std(ddof=1) / np.sqrt(samples))
    ok = abs(slope) <= Z99 * slope_se if slope_se > 0 else abs(slope) <= 1e-12
    return VarianceGrowthReport(n, (S * S).mean(axis=0), resid, se, slope, slope_se,
                                float(sigma2), bool(ok))


# CLT -------------------------------------------------------------------------------------------

@dataclass
class CLTReport:
    n: int
    samples: int
    sigma2_v: float
    ks_stat: float = np.nan
    ks_pvalue: float = np.nan
    ad_stat: float = np.nan
    ad_critical: float = np.nan
    ks_pass: bool = None
    ad_pass: bool = None
    passed: bool = None
    warning: str = None

    def to_dict(self):
        return dict(self.__dict__)


def clt_test(e, phi, f, v, n, samples, seed, sigma2=None, level=0.01, backend=None):
    """KS and Anderson-Darling tests of ``v^T S_n / sqrt(n v^T Sigma^2 v)`` against N(0,1).

    Raises
    ------
    DegenerateDirection
        If ``v^T Sigma^2 v < 1e-6``.
    """
    fv = f.project(v) if np.ndim(v) else f
    if sigma2 is None:
        sigma2 = covariance_series(e, phi, fv).sigma2[0, 0]
    sigma2 = float(sigma2)
    if sigma2 < 1e-6:
        raise DegenerateDirection(f"v^T Sigma^2 v = {sigma2:.3g}; check coboundary_residual")
    rep = CLTReport(n, samples, sigma2)
    if samples < MIN_SAMPLES:
        rep.warning = f"only {samples} samples: too little power for a verdict"
        return rep
    pv = _phi(phi)
    mean = _mean(fv.grid(pv.size), pv)[0]
    S = _birkhoff(e, phi, fv, [n], samples, seed, backend)[:, 0, 0]
    z = (S - n * mean) / np.sqrt(n * sigma2)
    ks = stats.kstest(z, "norm")
    ad = stats.anderson(z, "norm")
    lvl = list(ad.significance_level).index(1.0 if level == 0.01 else level * 100)
    rep.ks_stat, rep.ks_pvalue = float(ks.statistic), float(ks.pvalue)
    rep.ad_stat, rep.ad_critical = float(ad.statistic), float(ad.critical_values[lvl])
    rep.ks_pass = rep.ks_pvalue > level
    rep.ad_pass = rep.ad_stat < rep.ad_critical
    rep.passed = bool(rep.ks_pass and rep.ad_pass)
    return rep


# coboundary detector -------------------------------------------------------------------------

@dataclass
class CoboundaryResult:
    g: np.ndarray
    residual: float
    q_residual: float
    terms: int
    coverage: str
    norms: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"residual": self.residual, "q_residual": self.q_residual, "terms": self.terms,
                "coverage": self.coverage}


def coboundary_residual(e, phi, f_v, m_max=64, n_maps=100, seed=0, term_tol=1e-14):
    """Candidate ``g = sum_{m<=m_max} Q^m f_v`` and the residual of ``f_v = g - g o T``.

    ``residual`` is the max over maps and grid points of
    ``|f_v - g + g o T_omega|`` (all atoms of a finite law, ``n_maps``
    sampled maps of a family); ``q_residual`` is ``max |f_v - g + Q g|``,
    which vanishes for any solution of the averaged equation.

    Raises
    ------
    SeriesDiverged
        If the term norms increase strictly over the last 5 terms.
    """
    pv = _phi(phi)
    fv = _grid(f_v, pv.size)[0].astype(np.float64)
    fv = fv - _mean(fv, pv)
    g = fv.copy()
    h = fv.copy()
    norms = [float(np.max(np.abs(h)))]
    m = 0
    for m in range(1, m_max + 1):
        h = koopman_apply(e, h)
        g += h
        norms.append(float(np.max(np.abs(h))))
        last = norms[-6:]
        if len(last) == 6 and all(b > a for a, b in zip(last, last[1:])):
            raise SeriesDiverged(f"Neumann series terms grow: {last}")
        if norms[-1] < term_tol:
            break
    q_res = float(np.max(np.abs(fv - g + koopman_apply(e, g))))
    if e.is_finite:
        maps = list(e.maps)
        coverage = f"all {len(maps)} atoms"
    else:
        from .ensemble import sample_sequence
        om = sample_sequence(e, n_maps, seed)
        maps = om.maps()
        coverage = f"{n_maps} sampled maps"
    res = max(float(np.max(np.abs(fv - g + koopman_apply_map(mm, g)))) for mm in maps)
    return CoboundaryResult(g, res, q_res, m, coverage, norms)


# multiple correlations -----------------------------------------------------------------------

@dataclass
class MultiCorrReport:
    lags: np.ndarray
    diff: np.ndarray
    se: np.ndarray
    operator_diff: np.ndarray
    significant: np.ndarray
    slope: float
    r2: float
    operator_slope: float
    operator_r2: float
    zero_at_t0: bool
    samples: int

    def to_dict(self):
        return {"slope": self.slope, "r2": self.r2, "operator_slope": self.operator_slope,
                "operator_r2": self.operator_r2, "zero_at_t0": self.zero_at_t0,
                "significant_lags": self.lags[self.significant].tolist(), "samples": self.samples,
                "abs_diff": np.abs(self.diff).tolist(), "se": self.se.tolist(),
                "operator_abs_diff": np.abs(self.operator_diff).tolist()}

    def curve(self):
        return CorrelationCurve(self.lags, self.diff, "mc", self.se)


def _broadcast(lst, size, name):
    lst = list(lst)
    if len(lst) == 1:
        lst = lst * size
    if len(lst) != size:
        raise ValueError(f"{name} needs 1 or {size} entries")
    return lst


def _loglin(lags, mod):
    mask = mod > 0
    if mask.sum() < 3:
        return np.nan, np.nan
    res = stats.linregress(lags[mask], np.log(mod[mask]))
    return float(res.slope), float(res.rvalue ** 2)


def multiple_correlation_operator(e, phi, f_list, t_list, m, k, n_max):
    """Exact ``E[F G_n] - E[F] E[G_n]`` by pushing tilted densities forward.

    ``F = prod_{j<m} g_j(X_j)`` and ``G_n = prod_{j<k} g_{m+j}(X_{m+n+j})``
    with ``g_j = exp(i t_j f_j)``. Uses
    ``E[prod_j g_j(X_j)] = int g_J P(... g_1 P(g_0 phi)) dm``.
    """
    pv = _phi(phi)
    N = pv.size
    gs = [np.exp(1j * t * _grid(f, N)[0]) for f, t in zip(f_list, t_list)]

    def chain(w, factors):
        for j, g in enumerate(factors):
            w = g * (annealed_transfer_apply(e, w) if j else w)
        return w

    wf = chain(pv.astype(np.complex128), gs[:m]) if m else pv.astype(np.complex128)
    e_f = integrate(wf)
    e_g = integrate(chain(pv.astype(np.complex128), gs[m:]))
    out = np.empty(n_max + 1, dtype=np.complex128)
    w = annealed_transfer_apply(e, wf) if m else wf
    for n in range(n_max + 1):
        tail = gs[m] * w
        for g in gs[m + 1:]:
            tail = g * annealed_transfer_apply(e, tail)
        out[n] = integrate(tail) - e_f * e_g
        w = annealed_transfer_apply(e, w)
    return out


def multiple_correlation_check(e, phi, f_list, t_list, m, k, n_max, samples, seed,
                               eps=0.2, H=None, alpha=1.0, chunk=100_000, backend=None):
    """Monte Carlo multiple correlations ``E[F G_n] - E[F] E[G_n]`` and an envelope fit.

    ``f_list``/``t_list`` have ``m + k`` entries (or one, broadcast). Lags
    with ``|diff| > 3 SE`` are fitted by ``log|diff| ~ a + b n``; the exact
    operator curve is returned alongside as a cross-check.
    """
    size = m + k
    f_list = [_scalar_obs(f) for f in _broadcast(f_list, size, "f_list")]
    t_list = [float(t) for t in _broadcast(t_list, size, "t_list")]
    if max(abs(t) for t in t_list) > eps:
        raise ValueError(f"|t| must not exceed eps = {eps}")
    if H is not None:
        hol = max(float(np.max(f.holder_const(alpha=alpha))) for f in f_list)
        if hol > H:
            raise ValueError(f"Holder constant {hol:.4g} exceeds H = {H}")
    width = max(f.cos_coef.shape[1] for f in f_list)
    cos = np.vstack([_pad(f.cos_coef[:1], width) for f in f_list])
    sin = np.vstack([_pad(f.sin_coef[:1], width) for f in f_list])
    t = np.asarray(t_list)
    nsteps = m + n_max + k
    acc_f = 0j
    acc_g = np.zeros(n_max + 1, dtype=np.complex128)
    acc_fg = np.zeros(n_max + 1, dtype=np.complex128)
    sq = np.zeros((3, n_max + 1))
    rows = []
    x0_all = sample_from_density(phi, samples, seed, stream=0)
    keys_all = Streams(seed).keys(samples, offset=1)
    for lo in range(0, samples, chunk):
        hi = min(samples, lo + chunk)
        vals = kernels.orbit_values(e.kernel_law, x0_all[lo:hi], keys_all[lo:hi], nsteps, cos, sin, backend)
        F = np.ones(hi - lo, dtype=np.complex128)
        for j in range(m):
            F *= np.exp(1j * t[j] * vals[:, j, j])
        G = np.ones((hi - lo, n_max + 1), dtype=np.complex128)
        for j in range(k):
            idx = m + j + np.arange(n_max + 1)
            G *= np.exp(1j * t[m + j] * vals[:, idx, m + j])
        rows.append((F, G))
        acc_f += F.sum()
        acc_g += G.sum(axis=0)
        acc_fg += (F[:, None] * G).sum(axis=0)
    mean_f = acc_f / samples
    mean_g = acc_g / samples
    diff = acc_fg / samples - mean_f * mean_g
    for F, G in rows:
        infl = (F - mean_f)[:, None] * (G - mean_g)
        dev = infl - diff
        sq[0] += (dev.real ** 2).sum(axis=0)
        sq[1] += (dev.imag ** 2).sum(axis=0)
    se = np.sqrt((sq[0] + sq[1]) / (samples - 1) / samples)
    lags = np.arange(n_max + 1)
    sig = np.abs(diff) > 3 * se
    slope, r2 = _loglin(lags[sig], np.abs(diff[sig])) if sig.sum() >= 3 else (np.nan, np.nan)
    op = multiple_correlation_operator(e, phi, f_list, t_list, m, k, n_max)
    op_mod = np.abs(op)
    use = op_mod > 1e-14
    op_slope, op_r2 = _loglin(lags[use], op_mod[use])
    zero = bool(np.all(diff == 0)) if np.all(t == 0) else None
    return MultiCorrReport(lags, diff, se, op, sig, slope, r2, op_slope, op_r2, zero, samples)

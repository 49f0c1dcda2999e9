"""Coupling times, the dominating random difference equation, and memory loss.

Along a sequence the step coefficients are ``A_n = 1/lam_n`` and
``B_n = Delta_n``. A coupling is possible at step ``n`` (counted from the
previous coupling) once ``S_n^alpha * K_in + R_n <= K``.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .density import DensityGrid, l1_distance, log_holder
from .errors import ClassViolation, FitDegenerate, HorizonExceeded, InvalidThreshold
from .recursions import (brute_force_second_moment_R, exact_first_moment_R,  # noqa: F401
                         exact_second_moment_R, sr_direct, sr_recursion, sup_first_moment_R)
from .rng import Streams, uniforms
from .transfer import annealed_transfer_apply, compute_stationary, iter_push

CLASS_SLACK = 1.01
# log-spread below which fitted values count as constant (quadrature noise level)
FLAT_LOG_SPREAD = 1e-3
# per-step L1 increase tolerated as interpolation error in the contraction check
CONTRACTION_TOL = 1e-6
WILSON_Z99 = float(stats.norm.ppf(0.995))


def ab_law(e):
    """``(weights, A, B)`` atoms of the step coefficients of an ensemble.

    Finite laws are exact; a continuous family uses its quadrature nodes.
    """
    w, maps = e.quadrature
    return (np.asarray(w, dtype=np.float64),
            np.array([1.0 / m.lam for m in maps]),
            np.array([m.delta for m in maps]))


def minimal_threshold(mean_a, mean_b):
    """Infimum of admissible ``K``: ``<B>/(1-<A>) + 1``."""
    if mean_a >= 1.0:
        return np.inf
    return mean_b / (1.0 - mean_a) + 1.0


@dataclass(frozen=True)
class CouplingConstants:
    """Threshold ``K`` and the constants derived from it.

    ``kappa = exp(-K)/2`` is the fraction coupled per event, ``K_prime =
    exp(4K)`` the class of remainder densities, ``K_dprime`` the class of
    the initial densities.
    """

    K: float
    alpha: float
    K_dprime: float
    mean_A: float
    mean_B: float
    validate: bool = True

    def __post_init__(self):
        kmin = minimal_threshold(self.mean_A, self.mean_B)
        if self.validate and not self.K > kmin:
            raise InvalidThreshold(f"K = {self.K:.6g} must exceed {kmin:.6g}", kmin)
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    @classmethod
    def for_ensemble(cls, e, K=None, alpha=0.5, K_dprime=1.0, validate=True):
        w, a, b = ab_law(e)
        return cls.from_moments(float(w @ a), float(w @ b), K, alpha, K_dprime, validate)

    @classmethod
    def from_moments(cls, mean_A, mean_B, K=None, alpha=0.5, K_dprime=1.0, validate=True):
        """``validate=False`` skips the threshold check; such constants are
        fine for coupling schedules but void the tail bound (``q >= 1``)."""
        if K is None:
            K = minimal_threshold(mean_A, mean_B) + 1.0
        return cls(float(K), float(alpha), float(K_dprime), float(mean_A), float(mean_B), validate)

    @property
    def kappa(self):
        return 0.5 * np.exp(-self.K)

    @property
    def K_prime(self):
        return np.exp(4.0 * self.K)

    @property
    def q(self):
        return self.mean_A + self.mean_B / (self.K - 1.0)

    @property
    def beta(self):
        return (self.K - 1.0) / (2.0 * self.K)

    @property
    def t(self):
        """Rate with ``K_prime^t = q^-beta``."""
        return -self.beta * np.log(self.q) / (4.0 * self.K)

    @property
    def theta(self):
        return self.q ** self.beta

    @property
    def D(self):
        return self.K_dprime ** (1.0 / self.alpha)

    def to_dict(self):
        return {"K": self.K, "alpha": self.alpha, "K_dprime": self.K_dprime,
                "mean_A": self.mean_A, "mean_B": self.mean_B, "kappa": self.kappa,
                "K_prime": self.K_prime, "q": self.q, "beta": self.beta, "t": self.t,
                "theta": self.theta, "D": self.D}


def coupling_condition(S, R, K_in, alpha, K):
    """``S^alpha * K_in + R <= K``."""
    return S ** alpha * K_in + R <= K


# coupling schedule -------------------------------------------------------------

@dataclass
class CouplingTrace:
    """Coupling bookkeeping along one sequence up to ``horizon``.

    ``S``, ``R`` run from time 0 without resets; ``Z = R + xi S^alpha`` and
    ``L`` (the dominating chain started at ``xi^(1/alpha)``) use ``xi =
    K_dprime``. ``taus``/``n_k`` are the inter-coupling and coupling times,
    ``N[n]`` the number of couplings by time ``n``.
    """

    consts: CouplingConstants
    S: np.ndarray
    R: np.ndarray
    Z: np.ndarray
    L: np.ndarray
    taus: list
    n_k: list
    N: np.ndarray
    xi: float
    complete: bool = True

    @property
    def horizon(self):
        return len(self.N) - 1

    def bound(self):
        return 2.0 * (1.0 - self.consts.kappa) ** self.N

    def dominated(self):
        return bool(np.all(self.Z <= self.L + 1.0 + 1e-12 * (1.0 + self.L)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "S", "R", "Z", "L", "N"])
            for i in range(len(self.N)):
                w.writerow([i, repr(float(self.S[i])), repr(float(self.R[i])),
                            repr(float(self.Z[i])), repr(float(self.L[i])), int(self.N[i])])


def coupling_schedule(omega, consts, horizon, strict=False):
    """Coupling times along ``omega`` up to ``horizon``.

    ``(S, R)`` restart from ``(1, 0)`` at every coupling; the first
    inter-coupling time uses class ``K_dprime``, later ones ``K_prime``.
    If no coupling happens at all, ``HorizonExceeded`` is raised only when
    ``strict`` is set; otherwise the trace is flagged ``complete=False``.
    """
    if horizon > len(omega):
        raise ValueError(f"horizon {horizon} exceeds the sequence length {len(omega)}")
    lam = omega.lambdas()[:horizon]
    dlt = omega.deltas()[:horizon]
    S, R = sr_recursion(lam, dlt)
    a = consts.alpha
    xi = consts.K_dprime
    Z = R + xi * S ** a
    L = np.empty(horizon + 1)
    L[0] = xi ** (1.0 / a)
    for i in range(horizon):
        L[i + 1] = L[i] / lam[i] + dlt[i]

    taus, n_k = [], []
    N = np.zeros(horizon + 1, dtype=np.int64)
    s, r, k_in, last = 1.0, 0.0, consts.K_dprime, 0
    count = 0
    for n in range(horizon + 1):
        if n > 0:
            s /= lam[n - 1]
            r = r / lam[n - 1] + dlt[n - 1]
        if coupling_condition(s, r, k_in, a, consts.K):
            taus.append(n - last)
            n_k.append(n)
            count += 1
            last = n
            s, r, k_in = 1.0, 0.0, consts.K_prime
        N[n] = count
    if not n_k and strict:
        raise HorizonExceeded(f"no coupling within {horizon} steps")
    return CouplingTrace(consts, S, R, Z, L, taus, n_k, N, xi, complete=bool(n_k))


def coupling_counts(e, consts, horizon, samples, seed, stream_offset=0):
    """``N_n`` for ``samples`` independent sequences, shape ``(samples, horizon+1)``.

    Sequence ``s`` uses stream ``stream_offset + s`` with the same counters
    as :func:`~randmaps.ensemble.sample_sequence`, so for a finite law row
    ``s`` equals ``coupling_schedule(sample_sequence(e, horizon, seed, s)).N``.
    """
    w, A, B = ab_law(e)
    cumw = np.cumsum(w)
    cumw[-1] = 1.0
    keys = Streams(seed).keys(samples, stream_offset)
    a = consts.alpha
    s = np.ones(samples)
    r = np.zeros(samples)
    k_in = np.full(samples, consts.K_dprime)
    N = np.zeros((samples, horizon + 1), dtype=np.int64)
    cnt = np.zeros(samples, dtype=np.int64)
    for n in range(horizon + 1):
        if n > 0:
            u = uniforms(keys, np.uint64(2 * (n - 1)))
            j = np.minimum(np.searchsorted(cumw, u, side="right"), len(w) - 1)
            s = s * A[j]
            r = A[j] * r + B[j]
        hit = s ** a * k_in + r <= consts.K
        cnt += hit
        s = np.where(hit, 1.0, s)
        r = np.where(hit, 0.0, r)
        k_in = np.where(hit, consts.K_prime, k_in)
        N[:, n] = cnt
    return N


@dataclass
class CountTail:
    """Empirical ``P(N_n < [u n])`` at the constants' rate and at a visible rate.

    ``n_jumps[j-1]`` is the first ``n`` with ``[u n] = j``; ``p_visible`` is
    evaluated there, where the event is a deviation of a sum of ``j``
    inter-coupling times.
    """

    n: np.ndarray
    t_const: float
    u_visible: float
    p_const: np.ndarray
    n_jumps: np.ndarray
    p_visible: np.ndarray
    slope: float
    D: float
    theta: float

    def to_dict(self):
        return {"t": self.t_const, "u_visible": self.u_visible, "slope": self.slope,
                "D": self.D, "theta": self.theta, "max_p_const": float(self.p_const.max()),
                "n_jumps": self.n_jumps.tolist(), "p_visible": self.p_visible.tolist()}


def coupling_count_tail(e, consts, horizon, samples, seed, fraction=0.9):
    """Decay check of ``P(N_n < [u n])``.

    At ``u = t * alpha`` from the constants the event is empty at desk-scale
    horizons, so the curve is also taken at ``u = fraction * N_horizon /
    horizon`` (the empirical coupling rate), sampled at the jump points of
    ``[u n]``; ``slope`` is the least-squares slope of its logarithm in ``n``.
    """
    N = coupling_counts(e, consts, horizon, samples, seed)
    n = np.arange(horizon + 1)
    p_const = (N < np.floor(consts.t * consts.alpha * n)).mean(axis=0)
    u = fraction * N[:, -1].mean() / max(horizon, 1)
    slope = np.nan
    if u > 0:
        j = np.arange(1, int(u * horizon) + 1)
        nj = np.ceil(j / u - 1e-9).astype(np.int64)
        keep = nj <= horizon
        j, nj = j[keep], nj[keep]
        p_vis = (N[:, nj] < j).mean(axis=0)
        use = p_vis > 0
        if use.sum() >= 3:
            slope = float(np.polyfit(nj[use], np.log(p_vis[use]), 1)[0])
    else:
        nj = np.zeros(0, dtype=np.int64)
        p_vis = np.zeros(0)
    return CountTail(n, consts.t, u, p_const, nj, p_vis, slope, consts.D, consts.theta)


# random difference equation ---------------------------------------------------------

def wilson_interval(k, m, z=WILSON_Z99):
    """Wilson score interval for ``k`` successes out of ``m``."""
    k = np.asarray(k, dtype=np.float64)
    p = k / m
    den = 1.0 + z * z / m
    centre = (p + z * z / (2 * m)) / den
    half = z * np.sqrt(p * (1 - p) / m + z * z / (4 * m * m)) / den
    return centre - half, centre + half


@dataclass
class TailReport:
    """First-passage survival of ``L_n = A_n L_{n-1} + B_n`` below ``K - 1``."""

    ell: float
    K: float
    q: float
    n: np.ndarray
    survival: np.ndarray
    bound: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    samples: int
    times: np.ndarray = field(repr=False)

    @property
    def violations(self):
        """Steps where the survival exceeds the bound by more than the band."""
        half = self.band_hi - self.survival
        return self.survival > self.bound + half

    @property
    def violated(self):
        return bool(np.any(self.violations))

    @property
    def max_ratio(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.bound > 0, self.survival / self.bound, 0.0)
        return float(np.max(r))

    def to_dict(self):
        return {"ell": self.ell, "K": self.K, "q": self.q, "samples": self.samples,
                "n_max": int(self.n[-1]), "max_ratio": self.max_ratio,
                "violations": int(self.violations.sum()), "violated": self.violated,
                "mean_T": float(self.times.mean())}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "empirical", "bound", "band_lo", "band_hi"])
            for row in zip(self.n, self.survival, self.bound, self.band_lo, self.band_hi):
                w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


def rde_simulate(law, ell, K, n_max, samples, seed, backend=None):
    """Simulate first passage times ``T = inf{k: L_k <= K - 1}`` from ``L_0 = ell``.

    ``law`` is an :class:`~randmaps.ensemble.Ensemble` (coefficients
    ``A = 1/lam``, ``B = Delta``) or explicit atoms ``(weights, A, B)``.

    Raises
    ------
    InvalidThreshold
        If ``K <= <B>/(1-<A>) + 1``; carries the minimal admissible ``K``.
    """
    if hasattr(law, "quadrature"):
        w, A, B = ab_law(law)
    else:
        w, A, B = (np.asarray(v, dtype=np.float64) for v in law)
    w = w / w.sum()
    mean_a, mean_b = float(w @ A), float(w @ B)
    kmin = minimal_threshold(mean_a, mean_b)
    if not K > kmin:
        raise InvalidThreshold(f"K = {K:.6g} must exceed <B>/(1-<A>)+1 = {kmin:.6g}", kmin)
    if not ell > K - 1:
        raise ValueError("the starting level must exceed K - 1")
    q = mean_a + mean_b / (K - 1.0)
    keys = Streams(seed).keys(samples)
    T = kernels.first_passage_times(A, B, w, ell, K - 1.0, n_max, keys, backend)
    n = np.arange(n_max + 1)
    counts = np.bincount(np.minimum(T, n_max + 1), minlength=n_max + 2)
    alive = samples - np.cumsum(counts)[: n_max + 1]
    surv = alive / samples
    lo, hi = wilson_interval(alive, samples)
    bound = ell * q ** n / (K - 1.0)
    return TailReport(float(ell), float(K), q, n, surv, bound, lo, hi, samples, T)


# memory loss ------------------------------------------------------------------------------

@dataclass
class MemoryLossReport:
    distance: np.ndarray
    bound: np.ndarray
    tolerance: np.ndarray
    N: np.ndarray
    ok: bool
    monotone: bool

    @property
    def violations(self):
        return int(np.sum(self.distance > self.bound + self.tolerance))

    def to_dict(self):
        return {"ok": self.ok, "monotone": self.monotone, "violations": self.violations,
                "final_distance": float(self.distance[-1]), "final_bound": float(self.bound[-1]),
                "couplings": int(self.N[-1])}


def in_class(psi, K, alpha):
    """Membership in ``H_K`` with 1% slack on the discrete log-Holder estimate."""
    return log_holder(psi, alpha) <= K * CLASS_SLACK


def verify_memory_loss(omega, psi1, psi2, consts, horizon, step_tol=1e-4):
    """Push two densities along the same sequence and compare with ``2(1-kappa)^N_n``.

    Raises
    ------
    ClassViolation
        If either density fails the ``H_{K''}`` membership test.
    """
    g1 = psi1 if isinstance(psi1, DensityGrid) else DensityGrid(psi1)
    g2 = psi2 if isinstance(psi2, DensityGrid) else DensityGrid(psi2)
    for name, g in (("psi1", g1), ("psi2", g2)):
        if not in_class(g, consts.K_dprime, consts.alpha):
            raise ClassViolation(f"{name} has |log psi|_alpha = {log_holder(g, consts.alpha):.4g}"
                                 f" > K'' = {consts.K_dprime:g}; regularize it first")
    trace = coupling_schedule(omega, consts, horizon)
    dist = [l1_distance(g1, g2)]
    for (d1, _), (d2, _) in zip(iter_push(omega, g1, horizon), iter_push(omega, g2, horizon)):
        dist.append(l1_distance(d1, d2))
    dist = np.array(dist)
    bound = trace.bound()
    tol = step_tol * np.arange(horizon + 1)
    ok = bool(np.all(dist <= bound + tol))
    monotone = bool(np.all(np.diff(dist) <= CONTRACTION_TOL))
    return MemoryLossReport(dist, bound, tol, trace.N, ok, monotone)


# decay rates -------------------------------------------------------------------------------

@dataclass
class DecayFit:
    theta: float
    slope: float
    r2: float
    norms: np.ndarray
    used: np.ndarray
    quenched_theta: float = np.nan
    quenched_r2: float = np.nan
    quenched_norms: np.ndarray = None

    def to_dict(self):
        return {"theta": self.theta, "slope": self.slope, "r2": self.r2,
                "quenched_theta": self.quenched_theta, "quenched_r2": self.quenched_r2,
                "norms": self.norms.tolist()}


def fit_log_rate(values, floor=1e-10):
    """Least-squares slope of ``log values`` against the index where ``values > floor``.

    Returns ``(slope, r2, mask)``.

    Raises
    ------
    FitDegenerate
        With fewer than 4 usable points, or when their logs spread by less
        than ``FLAT_LOG_SPREAD``.
    """
    v = np.asarray(values, dtype=np.float64)
    mask = v > floor
    if mask.sum() < 4:
        raise FitDegenerate(f"only {int(mask.sum())} values above {floor:g}", v)
    n = np.nonzero(mask)[0].astype(np.float64)
    y = np.log(v[mask])
    if np.ptp(y) < FLAT_LOG_SPREAD:
        raise FitDegenerate("usable values are constant; no rate to fit", v)
    res = stats.linregress(n, y)
    return float(res.slope), float(res.rvalue ** 2), mask


def measure_decay_rates(e, psi, horizon, phi=None, samples=0, seed=0):
    """Fit ``||P^n psi - phi||_1 ~ theta^n``; optionally the quenched analogue.

    The quenched curve averages ``||L^n psi - L^n phi||_1`` over ``samples``
    sequences.
    """
    g = psi if isinstance(psi, DensityGrid) else DensityGrid(psi)
    if phi is None:
        phi = compute_stationary(e, n_points=g.n_points).phi
    v = g.values.copy()
    norms = [l1_distance(v, phi)]
    for _ in range(horizon):
        v = annealed_transfer_apply(e, v)
        norms.append(l1_distance(v, phi))
    norms = np.array(norms)
    slope, r2, mask = fit_log_rate(norms)
    fit = DecayFit(float(np.exp(slope)), slope, r2, norms, mask)
    if samples:
        from .ensemble import sample_sequence
        acc = np.zeros(horizon + 1)
        for s in range(samples):
            om = sample_sequence(e, horizon, seed, s)
            d = [l1_distance(g, phi)]
            for (a, _), (b, _) in zip(iter_push(om, g, horizon), iter_push(om, phi, horizon)):
                d.append(l1_distance(a, b))
            acc += np.array(d)
        qn = acc / samples
        try:
            qs, qr2, _ = fit_log_rate(qn)
            fit.quenched_theta, fit.quenched_r2 = float(np.exp(qs)), qr2
        except FitDegenerate:
            pass
        fit.quenched_norms = qn
    return fit


# second moment by simulation ------------------------------------------------------------------

def mc_second_moment_R(e_or_atoms, n, samples, seed):
    """Monte Carlo ``E[R_n^2]`` with its standard error.

    Accepts an ensemble or raw atoms ``(weights, lam, delta)``.
    """
    if hasattr(e_or_atoms, "quadrature"):
        w, A, B = ab_law(e_or_atoms)
    else:
        w, lam, B = (np.asarray(v, dtype=np.float64) for v in e_or_atoms)
        A = 1.0 / lam
    cumw = np.cumsum(w / np.sum(w))
    cumw[-1] = 1.0
    keys = Streams(seed).keys(samples)
    R = np.zeros(samples)
    for i in range(n):
        j = np.minimum(np.searchsorted(cumw, uniforms(keys, np.uint64(2 * i)), side="right"), len(w) - 1)
        R = A[j] * R + B[j]
    r2 = R * R
    return float(r2.mean()), float(r2.std(ddof=1) / np.sqrt(samples))

"""Transfer, Markov and normalized operators on the grid.

Each map gets two sparse ``N x N`` matrices, built once and cached:

* the transfer matrix ``L``: ``(L v)_j = sum_y v(y) / T'(y)`` over the
  preimages ``y`` of ``x_j``, with ``v(y)`` interpolated by Catmull-Rom;
* the Koopman matrix ``K``: ``(K f)_j = f(T x_j)``, interpolated likewise.

Averaging over the ensemble (exact weights or quadrature nodes) gives the
annealed operator ``P`` and the Markov operator ``Q``.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .density import (DensityGrid, catmull_rom_weights, grid_points, integrate,
                      interp_periodic, log_holder)
from .errors import (BranchMismatch, InversionFailure, NegativeMass, NoConvergence,
                     NonpositiveDensity, RenormalizationDrift)
from .recursions import sr_recursion, sup_first_moment_R

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-13
NEWTON_STEPS = 100
CLAMP_BUDGET = 1e-6
DRIFT_PER_STEP = 1e-8


def solve_lift(m, target, tol=NEWTON_TOL, max_steps=NEWTON_STEPS):
    """Solve ``F(y) = target`` on the lift ``F`` of ``m`` (vectorised).

    Newton steps are kept inside a bisection bracket of width one period.
    """
    t = np.asarray(target, dtype=np.float64)
    d = m.d
    f0 = float(m.lift(0.0))
    shift = np.floor((t - f0) / d)
    tt = t - d * shift
    lo = np.zeros_like(tt)
    hi = np.ones_like(tt)
    y = np.clip((tt - f0) / d, 0.0, 1.0)
    done = np.zeros(tt.shape, dtype=bool)
    for _ in range(max_steps):
        r = m.lift(y) - tt
        done = np.abs(r) <= tol * max(1.0, d)
        if done.all():
            return y + shift
        hi = np.where(r > 0, y, hi)
        lo = np.where(r <= 0, y, lo)
        step = y - r / m.deriv(y)
        bad = (step <= lo) | (step >= hi) | ~np.isfinite(step)
        y = np.where(done, y, np.where(bad, 0.5 * (lo + hi), step))
    r = m.lift(y) - tt
    if np.all(np.abs(r) <= tol * max(1.0, d)):
        return y + shift
    raise InversionFailure(f"branch solve did not converge for {m}: max residual {np.max(np.abs(r)):.3g}")


class BranchInverter:
    """The ``d`` inverse branches of a degree-``d`` circle map.

    Branch ``i`` of a point ``x`` is the solution of ``F(y) = x + j0 + i``
    with ``j0 = ceil(F(0) - x)``, so every preimage lands in ``[0, 1)``.
    """

    def __init__(self, m):
        self.map = m
        self.f0 = float(m.lift(0.0))

    @property
    def degree(self):
        return self.map.d

    def base_shift(self, x):
        return np.ceil(self.f0 - np.asarray(x, dtype=np.float64))

    def invert(self, x, i, shift=None):
        """Branch ``i`` preimage of ``x`` (lifted targets allowed via ``shift``)."""
        x = np.asarray(x, dtype=np.float64)
        j0 = self.base_shift(x) if shift is None else shift
        return solve_lift(self.map, x + j0 + i)

    def preimages(self, x):
        """All preimages, shape ``x.shape + (d,)``, each in ``[0, 1)``."""
        x = np.asarray(x, dtype=np.float64)
        j0 = self.base_shift(x)
        targets = x[..., None] + j0[..., None] + np.arange(self.degree)
        y = solve_lift(self.map, targets)
        return y - np.floor(y)


# sparse operator matrices --------------------------------------------------

@lru_cache(maxsize=64)
def transfer_matrix(m, n):
    """Sparse matrix of ``L`` for map ``m`` on the ``n``-point grid."""
    x = grid_points(n)
    y = BranchInverter(m).preimages(x)
    jac = 1.0 / np.abs(m.deriv(y))
    idx, w = catmull_rom_weights(y.ravel(), n)
    rows = np.repeat(np.arange(n), m.d * 4)
    vals = (w * jac.reshape(-1, 1)).ravel()
    mat = sp.csr_matrix((vals, (rows, idx.ravel())), shape=(n, n))
    mat.sum_duplicates()
    return mat


@lru_cache(maxsize=64)
def koopman_matrix(m, n):
    """Sparse matrix of ``f -> f o T`` on the ``n``-point grid."""
    tx = m.eval(grid_points(n))
    idx, w = catmull_rom_weights(tx, n)
    rows = np.repeat(np.arange(n), 4)
    mat = sp.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(n, n))
    mat.sum_duplicates()
    return mat


def _ensemble_matrix(e, n, kind):
    cache = e.__dict__.setdefault("_operator_cache", {})
    key = (kind, n)
    if key not in cache:
        build = transfer_matrix if kind == "P" else koopman_matrix
        w, maps = e.quadrature
        total = None
        for wi, mi in zip(w, maps):
            term = float(wi) * build(mi, n)
            total = term if total is None else total + term
        cache[key] = total.tocsr()
    return cache[key]


def annealed_matrix(e, n):
    return _ensemble_matrix(e, n, "P")


def markov_matrix(e, n):
    return _ensemble_matrix(e, n, "Q")


def _vec(psi):
    return psi.values if isinstance(psi, DensityGrid) else np.asarray(psi)


def _apply(mat, v):
    if np.iscomplexobj(v):
        return mat @ v.real + 1j * (mat @ v.imag)
    return mat @ np.asarray(v, dtype=np.float64)


def transfer_apply(m, psi):
    """``L_m psi`` as a grid function (real or complex input)."""
    v = _vec(psi)
    return _apply(transfer_matrix(m, v.shape[-1]), v)


def koopman_apply_map(m, f):
    """``f o T_m`` as a grid function."""
    v = _vec(f)
    return _apply(koopman_matrix(m, v.shape[-1]), v)


def annealed_transfer_apply(e, psi):
    """Annealed operator ``P psi``: the eta-average of ``L_omega psi``."""
    v = _vec(psi)
    return _apply(annealed_matrix(e, v.shape[-1]), v)


def koopman_apply(e, f):
    """Markov operator ``Q f``: the eta-average of ``f o T_omega``."""
    v = _vec(f)
    return _apply(markov_matrix(e, v.shape[-1]), v)


def _check_positive(phi):
    v = _vec(phi)
    if np.any(v <= 0):
        raise NonpositiveDensity(f"stationary density has min {v.min():.3g} <= 0")
    return v


def normalized_transfer_apply(e, phi, h, g=None):
    """``P_hat_g h = phi^-1 P(phi g h)``; ``g=None`` gives ``P_hat h``."""
    pv = _check_positive(phi)
    hv = _vec(h)
    prod = pv * hv if g is None else pv * np.asarray(g) * hv
    return annealed_transfer_apply(e, prod) / pv


def tilted_koopman_apply(e, h, g):
    """``Q_g h = Q(g h)``."""
    return koopman_apply(e, np.asarray(g) * _vec(h))


# quenched pushforwards ---------------------------------------------------------

@dataclass
class PushLog:
    """Mass bookkeeping for a quenched pushforward."""

    steps: int = 0
    clamped: list = field(default_factory=list)
    drift: list = field(default_factory=list)

    @property
    def total_drift(self):
        return float(np.sum(self.drift))

    @property
    def total_clamped(self):
        return float(np.sum(self.clamped))

    def to_dict(self):
        return {"steps": self.steps, "total_drift": self.total_drift,
                "total_clamped": self.total_clamped,
                "max_step_drift": float(max(self.drift, default=0.0))}


def _push_step(m, v, mass, plog):
    out = transfer_apply(m, v)
    neg = float(-integrate(np.minimum(out, 0.0)))
    if neg > CLAMP_BUDGET:
        raise NegativeMass(f"interpolation produced {neg:.3g} negative mass")
    if neg > 0:
        out = np.maximum(out, 0.0)
    new_mass = float(integrate(out))
    plog.clamped.append(neg)
    plog.drift.append(abs(new_mass - mass))
    plog.steps += 1
    if plog.total_drift > DRIFT_PER_STEP * plog.steps:
        raise RenormalizationDrift(f"mass drift {plog.total_drift:.3g} after {plog.steps} steps")
    return out * (mass / new_mass)


def iter_push(omega, psi, n):
    """Yield the densities ``psi_1, ..., psi_n`` of the quenched pushforward.

    The generator's ``PushLog`` is attached as attribute ``log`` of each
    yielded density.
    """
    if n > len(omega):
        raise ValueError(f"n = {n} exceeds the sequence length {len(omega)}")
    v = np.array(_vec(psi), dtype=np.float64)
    mass = float(integrate(v))
    plog = PushLog()
    for i in range(n):
        v = _push_step(omega.map(i), v, mass, plog)
        yield DensityGrid(v), plog


def quenched_push(omega, psi, n, return_log=False):
    """``L_{omega_n} ... L_{omega_1} psi``, renormalised and drift-checked."""
    out = psi if isinstance(psi, DensityGrid) else DensityGrid(psi)
    plog = PushLog()
    for out, plog in iter_push(omega, psi, n):
        pass
    if plog.steps:
        log.debug("quenched push: %s", plog.to_dict())
    return (out, plog) if return_log else out


# composed preimages ---------------------------------------------------------------

def backward_tree(maps, x, shifts_from=None):
    """Every preimage chain of ``x`` under ``T_n o ... o T_1``.

    Returns ``(origin, chain, dprod, shifts)``. ``chain[k]`` holds the level-``k``
    points (``chain[0]`` the preimages, ``chain[n]`` the targets, lifted) and
    ``dprod`` the derivative of the composition at ``chain[0]``. ``origin``
    indexes the target each chain ends at.

    With ``shifts_from`` (a tree for nearby points) the same integer branch
    shifts are reused, so both trees follow the same inverse branches.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    origin = np.arange(x.size)
    level = x.copy()
    chain = [level]
    shifts = []
    dprod = np.ones(x.size)
    for k in range(len(maps) - 1, -1, -1):
        m = maps[k]
        inv = BranchInverter(m)
        if shifts_from is None:
            j0 = inv.base_shift(level - np.floor(level)) - np.floor(level)
            j = (j0[:, None] + np.arange(m.d)).ravel()
        else:
            j = shifts_from[3][len(maps) - 1 - k]
        rep = np.repeat(level, m.d)
        y = solve_lift(m, rep + j)
        origin = np.repeat(origin, m.d)
        chain = [np.repeat(c, m.d) for c in chain]
        dprod = np.repeat(dprod, m.d) * m.deriv(y)
        level = y
        chain.insert(0, y)
        shifts.append(j)
    return origin, chain, dprod, shifts


def composed_push(maps, values_at, x):
    """``(L_{T_n} ... L_{T_1} u)(x)`` with exact composed preimages.

    ``values_at(chain)`` returns the integrand at each preimage chain.
    """
    origin, chain, dprod, _ = backward_tree(maps, x)
    vals = values_at(chain) / np.abs(dprod)
    size = np.asarray(x).size
    re = np.bincount(origin, weights=np.real(vals), minlength=size)
    if np.iscomplexobj(vals):
        return re + 1j * np.bincount(origin, weights=np.imag(vals), minlength=size)
    return re


def _obs_values(f, pts, n):
    if callable(f):
        out = np.asarray(f(pts))
        return out[0] if out.ndim == pts.ndim + 1 else out
    return interp_periodic(np.asarray(f), pts - np.floor(pts))


@dataclass
class TiltedPushResult:
    left: np.ndarray
    right: np.ndarray

    @property
    def max_diff(self):
        return float(np.max(np.abs(self.left - self.right)))


def tilted_quenched_push(omega, tilts, h, return_both=False):
    """Iterated tilted transfer ``L_{omega_n, g_{n-1}} ... L_{omega_1, g_0} h``.

    ``tilts`` is a list of ``(t_k, f_k)`` with ``g_k = exp(i t_k f_k)``; each
    ``f_k`` is a scalar callable (e.g. an :class:`Observable`) or a grid
    function. The same quantity is also evaluated as a single composed push
    of ``exp(V_n) h`` over exact preimage chains; ``return_both=True``
    returns both evaluations.
    """
    n = len(tilts)
    if n > len(omega):
        raise ValueError("more tilts than maps in the sequence")
    hv = np.asarray(_vec(h), dtype=np.complex128)
    size = hv.shape[-1]
    x = grid_points(size)
    v = hv.copy()
    for k, (t, f) in enumerate(tilts):
        g = np.exp(1j * t * _obs_values(f, x, size))
        v = transfer_apply(omega.map(k), g * v)
    if not return_both:
        return v
    maps = [omega.map(k) for k in range(n)]

    def integrand(chain):
        V = np.zeros(chain[0].shape, dtype=np.complex128)
        for k, (t, f) in enumerate(tilts):
            V += 1j * t * _obs_values(f, chain[k], size)
        base = chain[0] - np.floor(chain[0])
        return np.exp(V) * interp_periodic(hv, base)

    right = composed_push(maps, integrand, x) if n else hv.copy()
    return TiltedPushResult(v, right)


# stationary density -----------------------------------------------------------------

@dataclass
class StationaryResult:
    phi: DensityGrid
    residual: float
    iterations: int
    inf_phi: float
    lip_phi: float
    method: str = "power"
    residual_power: float = float("nan")
    residual_cesaro: float = float("nan")
    lower_bound: float = float("nan")
    lower_bound_ok: bool = True

    def to_dict(self):
        return {"residual": self.residual, "iterations": self.iterations,
                "inf_phi": self.inf_phi, "lip_phi": self.lip_phi, "method": self.method,
                "residual_power": self.residual_power, "residual_cesaro": self.residual_cesaro,
                "lower_bound": self.lower_bound, "lower_bound_ok": self.lower_bound_ok,
                "n_points": self.phi.n_points}


GRID_TOL = 1e-3


def compute_stationary(e, tol=1e-10, max_iter=5000, n_points=4096, check=True):
    """Stationary density of ``P`` by power iteration from ``1``.

    The Cesaro average of the iterates is tracked as well; the result with
    the smaller residual ``||P phi - phi||_1`` is returned. ``inf phi`` is
    compared against ``exp(-sup_n E[R_n])``.

    Raises
    ------
    NoConvergence
        If neither residual drops below ``tol`` within ``max_iter`` steps.
    """
    if check:
        from .ensemble import check_standing_assumption
        check_standing_assumption(e)
    P = annealed_matrix(e, n_points)
    v = np.ones(n_points)
    csum = v.copy()
    res_p = res_c = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        pv = P @ v
        res_p = float(integrate(np.abs(pv - v)))
        if res_p <= tol:
            break
        c = csum / it
        res_c = float(integrate(np.abs(P @ c - c)))
        if res_c <= tol:
            v = c
            break
        v = pv / integrate(pv)
        csum += v
    else:
        raise NoConvergence(f"stationary solve stopped at residual {min(res_p, res_c):.3g}",
                            min(res_p, res_c), max_iter)
    method = "power" if res_p <= tol else "cesaro"
    v = np.maximum(v, 0.0)
    phi = DensityGrid(v).normalized()
    bound = float(np.exp(-sup_first_moment_R(e)))
    inf_phi = float(phi.values.min())
    ok = inf_phi >= bound - GRID_TOL
    if not ok:
        log.warning("inf phi = %.6g is below the moment bound %.6g", inf_phi, bound)
    return StationaryResult(phi, min(res_p, res_c), it, inf_phi, phi.lipschitz(), method,
                            res_p, res_c, bound, ok)


# bound verifications ---------------------------------------------------------------------

@dataclass
class DistortionReport:
    n: int
    R_n: float
    max_log_ratio: float
    max_normalized: float
    ok: bool
    pairs: int

    def to_dict(self):
        return dict(self.__dict__)


def verify_distortion(omega, n, pairs):
    """Check ``|log (T^n)'(x') / (T^n)'(y')| <= R_n d(x, y)`` on same-branch preimages.

    ``pairs`` is an ``(m, 2)`` array of circle points; each pair is lifted
    so that ``|x - y| = d(x, y) <= 1/2``.
    """
    pairs = np.atleast_2d(np.asarray(pairs, dtype=np.float64))
    x = pairs[:, 0] % 1.0
    diff = (pairs[:, 1] - pairs[:, 0] + 0.5) % 1.0 - 0.5
    y = x + diff
    dist = np.abs(diff)
    maps = [omega.map(k) for k in range(n)]
    _, R = sr_recursion([m.lam for m in maps], [m.delta for m in maps])
    Rn = float(R[n])
    tx = backward_tree(maps, x)
    ty = backward_tree(maps, y, shifts_from=tx)
    origin = tx[0]
    sign = np.sign(diff)[origin]
    for cx, cy in zip(tx[1], ty[1]):
        s = np.sign(cy - cx)
        if np.any((s != sign) & (s != 0) & (sign != 0)):
            raise BranchMismatch("preimages of a pair lie on different branches")
    lr = np.abs(np.log(tx[2] / ty[2]))
    bound = Rn * dist[origin]
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.where(lr == 0.0, 0.0, lr / bound)
    ok = bool(np.all(lr <= bound * (1.0 + 1e-6) + 1e-12))
    return DistortionReport(n, Rn, float(lr.max(initial=0.0)),
                            float(np.nanmax(normalized, initial=0.0)), ok, len(pairs))


@dataclass
class HolderReport:
    alpha: float
    lhs: np.ndarray
    rhs: np.ndarray
    sup: np.ndarray
    sup_bound: np.ndarray
    ok: bool
    sup_ok: bool
    tol: float

    def to_dict(self):
        return {"alpha": self.alpha, "lhs": self.lhs.tolist(), "rhs": self.rhs.tolist(),
                "sup": self.sup.tolist(), "sup_bound": self.sup_bound.tolist(),
                "ok": self.ok, "sup_ok": self.sup_ok, "tol": self.tol}


def verify_holder_propagation(omega, n, psi, alpha, tol=1e-3):
    """Compare ``|log L^k psi|_alpha`` with ``S_k^alpha |log psi|_alpha + R_k``, k <= n.

    For ``psi = 1`` the sup bound ``||L^k 1||_inf <= 1 + R_k`` is checked too
    (``sup_ok`` is vacuously true for other ``psi``).
    """
    psi = psi if isinstance(psi, DensityGrid) else DensityGrid(psi)
    maps = [omega.map(k) for k in range(n)]
    S, R = sr_recursion([m.lam for m in maps], [m.delta for m in maps])
    h0 = log_holder(psi, alpha)
    lhs, sup = [], []
    for dens, _ in iter_push(omega, psi, n):
        lhs.append(log_holder(dens, alpha))
        sup.append(float(dens.values.max()))
    lhs = np.array(lhs)
    sup = np.array(sup)
    rhs = S[1:] ** alpha * h0 + R[1:]
    constant = float(np.ptp(psi.values)) == 0.0
    sup_bound = 1.0 + R[1:]
    sup_ok = bool(np.all(sup <= sup_bound + tol)) if constant else True
    return HolderReport(alpha, lhs, rhs, sup, sup_bound, bool(np.all(lhs <= rhs + tol)), sup_ok, tol)

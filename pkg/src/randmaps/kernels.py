"""Hot loops: trajectory simulation, first-passage times, pair-Holder maxima.

Each kernel exists twice: a numba loop (``_nb_*``) and a numpy version
vectorised across trajectories (``_np_*``). The public wrappers pick one
through :func:`randmaps._accel.resolve_backend`. Both versions consume the
same counter-based random draws, so for maps without trigonometric terms
the two paths produce identical orbits; otherwise they agree up to libm
rounding, which chaotic dynamics amplify over long horizons.

A map law is passed as ``(params, cumw, vary, table)``, see
:attr:`randmaps.ensemble.Ensemble.kernel_law`. Step ``i`` (zero based) of a
trajectory with key ``k`` picks its map with draw ``2*i`` and adds a dither
of size ``DITHER`` from draw ``2*i + 1``. The dither refreshes the low-order
bits that multiplication by an integer degree shifts out; without it a
floating-point orbit of ``2x mod 1`` collapses to 0 within 53 steps.
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit, resolve_backend
from .rng import _u01_py, u01

if HAVE_NUMBA:
    from numba import prange
else:  # pragma: no cover
    prange = range

TWO_PI = 2.0 * np.pi
INV_TWO_PI = 1.0 / TWO_PI
DITHER = 2.0**-48


# ---------------------------------------------------------------- helpers

# inlined into the loops: out of line, the tuple-returning select nearly doubled the step cost

@njit(cache=True, inline="always")
def _nb_select(params, cumw, vary, table, key, i):
    n_atoms = params.shape[0]
    if vary >= 0:
        u = u01(key, np.uint64(2 * i))
        m = table.shape[0]
        pos = u * (m - 1)
        j = int(pos)
        if j > m - 2:
            j = m - 2
        fr = pos - j
        val = table[j] + fr * (table[j + 1] - table[j])
        d = params[0, 0]
        c = params[0, 1]
        a = params[0, 2]
        ph = params[0, 3]
        if vary == 1:
            c = val
        elif vary == 2:
            a = val
        else:
            ph = val
        return d, c, a, ph
    j = 0
    if n_atoms > 1:
        u = u01(key, np.uint64(2 * i))
        while j < n_atoms - 1 and u >= cumw[j]:
            j += 1
    return params[j, 0], params[j, 1], params[j, 2], params[j, 3]


@njit(cache=True, inline="always")
def _nb_step(x, params, cumw, vary, table, key, i):
    d, c, a, ph = _nb_select(params, cumw, vary, table, key, i)
    y = d * x + c
    if a != 0.0:
        y += a * INV_TWO_PI * np.sin(TWO_PI * x + ph)
    y += (u01(key, np.uint64(2 * i + 1)) - 0.5) * DITHER
    return y - np.floor(y)


@njit(cache=True, inline="always")
def _nb_trig(x, cos_coef, sin_coef, out):
    # out[i] = component i of the trigonometric polynomial at x
    dim = cos_coef.shape[0]
    kmax = cos_coef.shape[1]
    c1 = np.cos(TWO_PI * x)
    s1 = np.sin(TWO_PI * x)
    for i in range(dim):
        out[i] = cos_coef[i, 0]
    ck = 1.0
    sk = 0.0
    for k in range(1, kmax):
        ck, sk = ck * c1 - sk * s1, sk * c1 + ck * s1
        for i in range(dim):
            out[i] += cos_coef[i, k] * ck + sin_coef[i, k] * sk


def _np_select(params, cumw, vary, table, keys, i):
    n = keys.shape[0]
    if vary >= 0:
        u = _u01_py(keys, np.uint64(2 * i))
        m = table.shape[0]
        pos = u * (m - 1)
        j = np.minimum(pos.astype(np.int64), m - 2)
        fr = pos - j
        val = table[j] + fr * (table[j + 1] - table[j])
        cols = [np.full(n, params[0, q]) for q in range(4)]
        cols[vary] = val
        return cols
    if params.shape[0] == 1:
        return [np.full(n, params[0, q]) for q in range(4)]
    u = _u01_py(keys, np.uint64(2 * i))
    j = np.minimum(np.searchsorted(cumw, u, side="right"), params.shape[0] - 1)
    return [params[j, q] for q in range(4)]


def _np_step(x, params, cumw, vary, table, keys, i):
    d, c, a, ph = _np_select(params, cumw, vary, table, keys, i)
    y = d * x + c
    if np.any(a != 0.0):
        y = y + a * INV_TWO_PI * np.sin(TWO_PI * x + ph)
    y = y + (_u01_py(keys, np.uint64(2 * i + 1)) - 0.5) * DITHER
    return y - np.floor(y)


def _np_trig(x, cos_coef, sin_coef):
    # returns (dim, len(x))
    c1 = np.cos(TWO_PI * x)
    s1 = np.sin(TWO_PI * x)
    out = np.repeat(cos_coef[:, 0:1], x.shape[0], axis=1).astype(np.float64)
    ck = np.ones_like(x)
    sk = np.zeros_like(x)
    for k in range(1, cos_coef.shape[1]):
        ck, sk = ck * c1 - sk * s1, sk * c1 + ck * s1
        out += cos_coef[:, k:k + 1] * ck + sin_coef[:, k:k + 1] * sk
    return out


def _prep_law(law):
    params, cumw, vary, table = law
    return (np.ascontiguousarray(params, dtype=np.float64),
            np.ascontiguousarray(cumw, dtype=np.float64), int(vary),
            np.ascontiguousarray(table, dtype=np.float64))


def _prep_obs(cos_coef, sin_coef):
    c = np.ascontiguousarray(np.atleast_2d(cos_coef), dtype=np.float64)
    s = np.ascontiguousarray(np.atleast_2d(sin_coef), dtype=np.float64)
    return c, s


# ---------------------------------------------------------------- orbit values

@njit(cache=True, parallel=True)
def _nb_orbit_values(params, cumw, vary, table, x0, keys, nsteps, cos_coef, sin_coef):
    ntraj = x0.shape[0]
    dim = cos_coef.shape[0]
    out = np.empty((ntraj, nsteps + 1, dim))
    for t in prange(ntraj):
        buf = np.empty(dim)
        x = x0[t]
        key = keys[t]
        for i in range(nsteps + 1):
            _nb_trig(x, cos_coef, sin_coef, buf)
            for q in range(dim):
                out[t, i, q] = buf[q]
            if i < nsteps:
                x = _nb_step(x, params, cumw, vary, table, key, i)
    return out


def _np_orbit_values(params, cumw, vary, table, x0, keys, nsteps, cos_coef, sin_coef):
    out = np.empty((x0.shape[0], nsteps + 1, cos_coef.shape[0]))
    x = x0.copy()
    with np.errstate(over="ignore"):
        for i in range(nsteps + 1):
            out[:, i, :] = _np_trig(x, cos_coef, sin_coef).T
            if i < nsteps:
                x = _np_step(x, params, cumw, vary, table, keys, i)
    return out


def orbit_values(law, x0, keys, nsteps, cos_coef, sin_coef, backend=None):
    """Observable values along orbits, shape ``(ntraj, nsteps + 1, d)``.

    Entry ``[t, i]`` is ``f(X_i)`` for trajectory ``t`` started at ``x0[t]``.
    """
    args = _prep_law(law) + (np.ascontiguousarray(x0, dtype=np.float64),
                             np.ascontiguousarray(keys, dtype=np.uint64), int(nsteps)) + _prep_obs(cos_coef, sin_coef)
    if resolve_backend(backend) == "numba":
        return _nb_orbit_values(*args)
    return _np_orbit_values(*args)


# ---------------------------------------------------------------- orbit endpoints

@njit(cache=True, parallel=True)
def _nb_orbit_points(params, cumw, vary, table, x0, keys, nsteps):
    ntraj = x0.shape[0]
    out = np.empty(ntraj)
    for t in prange(ntraj):
        x = x0[t]
        for i in range(nsteps):
            x = _nb_step(x, params, cumw, vary, table, keys[t], i)
        out[t] = x
    return out


def _np_orbit_points(params, cumw, vary, table, x0, keys, nsteps):
    x = x0.copy()
    with np.errstate(over="ignore"):
        for i in range(nsteps):
            x = _np_step(x, params, cumw, vary, table, keys, i)
    return x


def orbit_points(law, x0, keys, nsteps, backend=None):
    """``X_nsteps`` for every trajectory."""
    args = _prep_law(law) + (np.ascontiguousarray(x0, dtype=np.float64),
                             np.ascontiguousarray(keys, dtype=np.uint64), int(nsteps))
    if resolve_backend(backend) == "numba":
        return _nb_orbit_points(*args)
    return _np_orbit_points(*args)


# ---------------------------------------------------------------- Birkhoff sums

@njit(cache=True, parallel=True)
def _nb_birkhoff(params, cumw, vary, table, x0, keys, checkpoints, cos_coef, sin_coef):
    ntraj = x0.shape[0]
    dim = cos_coef.shape[0]
    ncp = checkpoints.shape[0]
    nmax = checkpoints[ncp - 1]
    out = np.zeros((ntraj, ncp, dim))
    for t in prange(ntraj):
        buf = np.empty(dim)
        acc = np.zeros(dim)
        x = x0[t]
        key = keys[t]
        c = 0
        while c < ncp and checkpoints[c] == 0:
            c += 1
        for i in range(nmax):
            _nb_trig(x, cos_coef, sin_coef, buf)
            for q in range(dim):
                acc[q] += buf[q]
            while c < ncp and checkpoints[c] == i + 1:
                for q in range(dim):
                    out[t, c, q] = acc[q]
                c += 1
            if i < nmax - 1:
                x = _nb_step(x, params, cumw, vary, table, key, i)
    return out


def _np_birkhoff(params, cumw, vary, table, x0, keys, checkpoints, cos_coef, sin_coef):
    ncp = checkpoints.shape[0]
    nmax = int(checkpoints[-1])
    out = np.zeros((x0.shape[0], ncp, cos_coef.shape[0]))
    acc = np.zeros((cos_coef.shape[0], x0.shape[0]))
    x = x0.copy()
    with np.errstate(over="ignore"):
        for i in range(nmax):
            acc += _np_trig(x, cos_coef, sin_coef)
            hit = np.nonzero(checkpoints == i + 1)[0]
            for c in hit:
                out[:, c, :] = acc.T
            if i < nmax - 1:
                x = _np_step(x, params, cumw, vary, table, keys, i)
    return out


def birkhoff_sums(law, x0, keys, checkpoints, cos_coef, sin_coef, backend=None):
    """Partial sums ``sum_{k<n} f(X_k)`` at each ``n`` in ``checkpoints``.

    Returns shape ``(ntraj, len(checkpoints), d)``.
    """
    cp = np.ascontiguousarray(checkpoints, dtype=np.int64)
    if cp.ndim != 1 or cp.size == 0 or np.any(np.diff(cp) < 0) or cp[0] < 0:
        raise ValueError("checkpoints must be a nondecreasing sequence of n >= 0")
    if cp[-1] == 0:
        return np.zeros((len(x0), cp.size, np.atleast_2d(cos_coef).shape[0]))
    args = _prep_law(law) + (np.ascontiguousarray(x0, dtype=np.float64),
                             np.ascontiguousarray(keys, dtype=np.uint64), cp) + _prep_obs(cos_coef, sin_coef)
    if resolve_backend(backend) == "numba":
        return _nb_birkhoff(*args)
    return _np_birkhoff(*args)


# ---------------------------------------------------------------- occupation

@njit(cache=True, parallel=True)
def _nb_occupation(params, cumw, vary, table, x0, keys, nsteps, nbins):
    ntraj = x0.shape[0]
    out = np.zeros((ntraj, nbins), dtype=np.int64)
    for t in prange(ntraj):
        x = x0[t]
        for i in range(nsteps):
            b = int(x * nbins)
            if b >= nbins:
                b = nbins - 1
            out[t, b] += 1
            if i < nsteps - 1:
                x = _nb_step(x, params, cumw, vary, table, keys[t], i)
    return out


def _np_occupation(params, cumw, vary, table, x0, keys, nsteps, nbins):
    ntraj = x0.shape[0]
    out = np.zeros((ntraj, nbins), dtype=np.int64)
    rows = np.arange(ntraj)
    x = x0.copy()
    with np.errstate(over="ignore"):
        for i in range(nsteps):
            b = np.minimum((x * nbins).astype(np.int64), nbins - 1)
            np.add.at(out, (rows, b), 1)
            if i < nsteps - 1:
                x = _np_step(x, params, cumw, vary, table, keys, i)
    return out


def occupation_counts(law, x0, keys, nsteps, nbins, backend=None):
    """Histogram of ``X_0, ..., X_{nsteps-1}`` per trajectory, shape ``(ntraj, nbins)``."""
    args = _prep_law(law) + (np.ascontiguousarray(x0, dtype=np.float64),
                             np.ascontiguousarray(keys, dtype=np.uint64), int(nsteps), int(nbins))
    if resolve_backend(backend) == "numba":
        return _nb_occupation(*args)
    return _np_occupation(*args)


# ---------------------------------------------------------------- first passage

@njit(cache=True, parallel=True)
def _nb_first_passage(a_vals, b_vals, cumw, ell, level, n_max, keys):
    ns = keys.shape[0]
    na = a_vals.shape[0]
    out = np.empty(ns, dtype=np.int64)
    for s in prange(ns):
        L = ell
        T = n_max + 1
        if L <= level:
            T = 0
        else:
            for n in range(1, n_max + 1):
                j = 0
                if na > 1:
                    u = u01(keys[s], np.uint64(n - 1))
                    while j < na - 1 and u >= cumw[j]:
                        j += 1
                L = a_vals[j] * L + b_vals[j]
                if L <= level:
                    T = n
                    break
        out[s] = T
    return out


def _np_first_passage(a_vals, b_vals, cumw, ell, level, n_max, keys):
    ns = keys.shape[0]
    L = np.full(ns, float(ell))
    T = np.full(ns, n_max + 1, dtype=np.int64)
    alive = L > level
    T[~alive] = 0
    with np.errstate(over="ignore"):
        for n in range(1, n_max + 1):
            if not alive.any():
                break
            if a_vals.shape[0] > 1:
                u = _u01_py(keys, np.uint64(n - 1))
                j = np.minimum(np.searchsorted(cumw, u, side="right"), a_vals.shape[0] - 1)
            else:
                j = np.zeros(ns, dtype=np.int64)
            L = np.where(alive, a_vals[j] * L + b_vals[j], L)
            hit = alive & (L <= level)
            T[hit] = n
            alive &= ~hit
    return T


def first_passage_times(a_vals, b_vals, weights, ell, level, n_max, keys, backend=None):
    """First ``n`` with ``L_n <= level`` for ``L_n = A_n L_{n-1} + B_n``, ``L_0 = ell``.

    ``(A_n, B_n)`` is drawn i.i.d. from the atoms ``(a_vals[j], b_vals[j])``
    with the given weights. Censored samples get ``n_max + 1``.
    """
    a = np.ascontiguousarray(a_vals, dtype=np.float64)
    b = np.ascontiguousarray(b_vals, dtype=np.float64)
    cumw = np.cumsum(np.asarray(weights, dtype=np.float64))
    cumw[-1] = 1.0
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    if resolve_backend(backend) == "numba":
        return _nb_first_passage(a, b, cumw, float(ell), float(level), int(n_max), keys)
    return _np_first_passage(a, b, cumw, float(ell), float(level), int(n_max), keys)


# ---------------------------------------------------------------- pair Holder

@njit(cache=True)
def _nb_holder_pairs(v, alpha, offsets):
    n = v.shape[0]
    best = 0.0
    for q in range(offsets.shape[0]):
        k = offsets[q]
        m = k if k <= n - k else n - k
        scale = (m / n) ** alpha
        top = 0.0
        for i in range(n):
            j = i + k
            if j >= n:
                j -= n
            diff = abs(v[i] - v[j])
            if diff > top:
                top = diff
        r = top / scale
        if r > best:
            best = r
    return best


def _np_holder_pairs(v, alpha, offsets):
    n = v.shape[0]
    best = 0.0
    for k in offsets:
        m = min(k, n - k)
        top = float(np.max(np.abs(v - np.roll(v, -int(k)))))
        best = max(best, top / (m / n) ** alpha)
    return best


def holder_pairs(v, alpha, offsets, backend=None):
    """``max_{i, k in offsets} |v[i] - v[i+k]| / (dist/N)^alpha`` on the circle."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if resolve_backend(backend) == "numba":
        return float(_nb_holder_pairs(v, float(alpha), offsets))
    return float(_np_holder_pairs(v, float(alpha), offsets))

"""Dilation/distortion recursions along a map sequence and their exact moments."""

import numpy as np

from .errors import InfiniteMoment


def sr_recursion(lambdas, deltas):
    """Running ``S_n = prod lam_i^-1`` and ``R_n = lam_n^-1 R_{n-1} + Delta_n``.

    Returns arrays of length ``n + 1`` with ``S[0] = 1`` and ``R[0] = 0``.
    """
    lam = np.asarray(lambdas, dtype=np.float64)
    dlt = np.asarray(deltas, dtype=np.float64)
    if lam.shape != dlt.shape:
        raise ValueError("lambdas and deltas must have the same length")
    if np.any(lam <= 0) or np.any(dlt < 0):
        raise ValueError("need lambda > 0 and Delta >= 0")
    n = lam.size
    S = np.empty(n + 1)
    R = np.empty(n + 1)
    S[0], R[0] = 1.0, 0.0
    for i in range(n):
        S[i + 1] = S[i] / lam[i]
        R[i + 1] = R[i] / lam[i] + dlt[i]
    return S, R


def sr_direct(lambdas, deltas):
    """``(S_n, R_n)`` from the product/sum formulas, for cross-checking."""
    lam = np.asarray(lambdas, dtype=np.float64)
    dlt = np.asarray(deltas, dtype=np.float64)
    n = lam.size
    S = float(np.prod(1.0 / lam)) if n else 1.0
    R = 0.0
    for i in range(n):
        R += dlt[i] * float(np.prod(1.0 / lam[i + 1:]))
    return S, R


def _moments(e):
    """Moments of an ensemble, or of raw atoms ``(weights, lam, delta)``."""
    if hasattr(e, "moments"):
        vals, _, flag = e.moments(1.0)
        return vals, flag
    from .ensemble import _moment_values

    w, lam, dlt = (np.asarray(v, dtype=np.float64) for v in e)
    return _moment_values(w / w.sum(), lam, dlt, 1.0), "exact"


def exact_first_moment_R(e, n):
    """``E[R_n] = <Delta> sum_{i=1}^n <lam^-1>^(n-i)``."""
    m, _ = _moments(e)
    a = m["inv_lam"]
    return m["delta"] * sum(a ** (n - i) for i in range(1, n + 1))


def sup_first_moment_R(e):
    """``sup_n E[R_n] = <Delta> / (1 - <lam^-1>)`` (the sequence increases in n)."""
    m, _ = _moments(e)
    if m["inv_lam"] >= 1.0:
        raise InfiniteMoment(f"<lam^-1> = {m['inv_lam']:.6g} >= 1")
    return m["delta"] / (1.0 - m["inv_lam"])


def exact_second_moment_R(e, n):
    """Closed form of ``E[R_n^2]`` for i.i.d. maps.

    Returns ``(value, limit)`` where ``limit`` is the ``n -> inf`` value
    ``<D^2>/(1-<l^-2>) + 2<D><l^-1 D>/((1-<l^-1>)(1-<l^-2>))``.

    Raises
    ------
    InfiniteMoment
        If ``<lam^-2> >= 1``.
    """
    m, _ = _moments(e)
    a1, a2 = m["inv_lam"], m["inv_lam2"]
    if a2 >= 1.0:
        raise InfiniteMoment(f"<lam^-2> = {a2:.6g} >= 1; E[R_n^2] is unbounded")
    diag = m["delta2"] * sum(a2 ** (n - i) for i in range(1, n + 1))
    cross = 0.0
    for ell in range(2, n + 1):
        inner = sum(a1 ** (ell - 1 - i) for i in range(1, ell))
        cross += inner * a2 ** (n - ell)
    value = diag + 2.0 * m["delta"] * m["inv_lam_delta"] * cross
    limit = m["delta2"] / (1.0 - a2) + 2.0 * m["delta"] * m["inv_lam_delta"] / ((1.0 - a1) * (1.0 - a2))
    return value, limit


def brute_force_second_moment_R(weights, lambdas, deltas, n):
    """``E[R_n^2]`` by enumerating every length-``n`` atom sequence."""
    import itertools

    w = np.asarray(weights, dtype=np.float64)
    lam = np.asarray(lambdas, dtype=np.float64)
    dlt = np.asarray(deltas, dtype=np.float64)
    total = 0.0
    for seq in itertools.product(range(len(w)), repeat=n):
        idx = list(seq)
        _, R = sr_direct(lam[idx], dlt[idx])
        total += float(np.prod(w[idx])) * R * R
    return total

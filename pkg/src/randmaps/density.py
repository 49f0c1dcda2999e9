"""Densities and observables on a uniform periodic grid.

A grid of size ``N`` carries values at ``x_j = j/N``. Integrals use the
rectangle rule, which is spectrally accurate for smooth periodic functions.
Off-grid values come from periodic Catmull-Rom interpolation.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GridMismatch
from .rng import Streams

TWO_PI = 2.0 * np.pi


def grid_points(n):
    return np.arange(n) / n


def integrate(values):
    """Rectangle-rule integral over the circle (works for complex values)."""
    values = np.asarray(values)
    return values.sum(axis=-1) / values.shape[-1]


def circle_distance(x, y):
    d = np.abs(np.asarray(x) - np.asarray(y)) % 1.0
    return np.minimum(d, 1.0 - d)


def catmull_rom_weights(x, n):
    """Stencil indices and weights for interpolating at points ``x``.

    Returns ``(idx, w)`` with shape ``(len(x), 4)``: ``f(x) ~ sum(w * f[idx])``.
    """
    s = np.asarray(x, dtype=np.float64).ravel() * n
    i = np.floor(s)
    t = s - i
    i = i.astype(np.int64)
    t2 = t * t
    t3 = t2 * t
    w = np.empty((len(s), 4))
    w[:, 0] = 0.5 * (-t3 + 2.0 * t2 - t)
    w[:, 1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0)
    w[:, 2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t)
    w[:, 3] = 0.5 * (t3 - t2)
    idx = (i[:, None] + np.arange(-1, 3)[None, :]) % n
    return idx, w


def interp_periodic(values, x):
    """Evaluate the periodic Catmull-Rom interpolant of ``values`` at ``x``."""
    values = np.asarray(values)
    x = np.asarray(x, dtype=np.float64)
    idx, w = catmull_rom_weights(x, values.shape[-1])
    return (values[..., idx] * w).sum(axis=-1).reshape(values.shape[:-1] + x.shape)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """A nonnegative density sampled at ``x_j = j/N``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 1 or v.size < 4:
            raise ValueError("a density grid needs a 1-D array of at least 4 values")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, fun, n, normalize=True):
        g = cls(fun(grid_points(n)))
        return g.normalized() if normalize else g

    @classmethod
    def uniform(cls, n):
        return cls(np.ones(n))

    @property
    def n_points(self):
        return self.values.size

    @property
    def x(self):
        return grid_points(self.n_points)

    @property
    def mass(self):
        return float(integrate(self.values))

    @property
    def is_normalized(self):
        return abs(self.mass - 1.0) <= 1e-12

    def normalized(self):
        m = self.mass
        if m <= 0:
            raise ValueError("cannot normalise a density of zero mass")
        return DensityGrid(self.values / m)

    def __call__(self, x):
        return interp_periodic(self.values, x)

    def integrate(self, f):
        """``int f * density dm`` for a grid function ``f``."""
        return integrate(np.asarray(f) * self.values)

    def lipschitz(self):
        v = self.values
        return float(np.max(np.abs(np.roll(v, -1) - v)) * self.n_points)

    # serialisation

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# n_points={self.n_points}\n")
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for xi, vi in zip(self.x, self.values):
                w.writerow([repr(float(xi)), repr(float(vi))])

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline()
            n = int(header.strip().split("=")[1])
            rows = list(csv.DictReader(fh))
        vals = np.array([float(r["value"]) for r in rows])
        if vals.size != n:
            raise GridMismatch(f"header says {n} points, file has {vals.size}")
        return cls(vals)

    def to_json(self):
        return json.dumps({"n_points": self.n_points, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        vals = np.asarray(doc["values"], dtype=np.float64)
        if vals.size != doc["n_points"]:
            raise GridMismatch("n_points does not match the value vector")
        return cls(vals)


def _values(a):
    return a.values if isinstance(a, DensityGrid) else np.asarray(a)


def l1_distance(a, b):
    """Rectangle-rule ``int |a - b| dm``."""
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise GridMismatch(f"grid sizes differ: {va.shape} vs {vb.shape}")
    return float(integrate(np.abs(va - vb)))


def holder_estimate(f, alpha, backend=None):
    """Discrete Holder constant ``max |f(x)-f(y)| / d(x,y)^alpha`` over grid pairs.

    This is a lower bound for the true constant: all pairs are used up to
    ``N = 8192``, beyond that every pair of the 8192-point subgrid plus all
    pairs at distance at most 1024 cells.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    v = _values(f)
    n = v.shape[-1]
    offsets = _holder_offsets(n)
    if np.iscomplexobj(v):
        return max(kernels.holder_pairs(v.real.copy(), alpha, offsets, backend),
                   kernels.holder_pairs(v.imag.copy(), alpha, offsets, backend),
                   _complex_holder(v, alpha, offsets))
    return kernels.holder_pairs(np.ascontiguousarray(v, dtype=np.float64), alpha, offsets, backend)


def _complex_holder(v, alpha, offsets):
    n = v.size
    best = 0.0
    for k in offsets:
        d = min(k, n - k) / n
        best = max(best, float(np.max(np.abs(v - np.roll(v, -k)))) / d**alpha)
    return best


def _holder_offsets(n):
    half = n // 2
    if n <= 8192:
        return np.arange(1, half + 1, dtype=np.int64)
    stride = n // 8192
    small = np.arange(1, 1025)
    coarse = np.arange(stride, half + 1, stride)
    return np.unique(np.concatenate([small, coarse])).astype(np.int64)


def log_holder(psi, alpha, backend=None):
    """Discrete ``|log psi|_alpha``; ``inf`` if ``psi`` is not strictly positive."""
    v = _values(psi)
    if np.any(v <= 0):
        return np.inf
    return holder_estimate(np.log(v), alpha, backend)


def regularize(psi, alpha, lip_phi=0.0):
    """Return ``(psi_h, h)`` with ``psi_h = (psi + h) / (1 + h)``.

    ``h = |psi|_alpha + lip_phi``, which puts ``psi_h`` in the class of
    densities with ``|log psi_h|_alpha <= 1``.
    """
    if lip_phi < 0:
        raise ValueError("lip_phi must be nonnegative")
    g = psi if isinstance(psi, DensityGrid) else DensityGrid(psi)
    h = holder_estimate(g.values, alpha) + float(lip_phi)
    out = DensityGrid((g.values + h) / (1.0 + h)).normalized()
    return out, h


def sample_from_density(phi, m, seed, stream=0):
    """Draw ``m`` points by inverting the piecewise-linear CDF of ``phi``.

    Cell ``j`` is ``[x_j - h/2, x_j + h/2)`` with mass ``phi_j / N`` (the
    rectangle rule), spread uniformly.
    """
    v = _values(phi)
    n = v.size
    p = v / v.sum()
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    u = Streams(seed).uniforms(stream, m)
    j = np.minimum(np.searchsorted(cdf, u, side="right"), n - 1)
    lo = np.where(j > 0, cdf[j - 1], 0.0)
    frac = np.clip((u - lo) / p[j], 0.0, 1.0 - 1e-16)
    x = (j + frac - 0.5) / n
    return x - np.floor(x)


class Observable:
    """Vector-valued trigonometric polynomial ``f: S^1 -> R^d``.

    Component ``i`` is ``sum_k cos_coef[i,k] cos(2pi k x) + sin_coef[i,k] sin(2pi k x)``.
    """

    def __init__(self, cos_coef, sin_coef=None, alpha=1.0):
        c = np.atleast_2d(np.asarray(cos_coef, dtype=np.float64))
        s = np.zeros_like(c) if sin_coef is None else np.atleast_2d(np.asarray(sin_coef, dtype=np.float64))
        width = max(c.shape[1], s.shape[1])
        self.cos_coef = np.zeros((c.shape[0], width))
        self.sin_coef = np.zeros((c.shape[0], width))
        self.cos_coef[:, : c.shape[1]] = c
        self.sin_coef[:, : s.shape[1]] = s
        self.sin_coef[:, 0] = 0.0
        if self.cos_coef.shape[0] < 1:
            raise ValueError("an observable needs at least one component")
        self.alpha = float(alpha)

    @classmethod
    def cosines(cls, coef):
        """Scalar observable ``sum_k coef[k] cos(2pi k x)`` from ``{k: coef}``."""
        kmax = max(coef)
        c = np.zeros(kmax + 1)
        for k, v in coef.items():
            c[k] = v
        return cls(c)

    @classmethod
    def from_config(cls, cfg):
        comps = cfg["components"] if isinstance(cfg, dict) else cfg
        kmax = 0
        for comp in comps:
            for part in ("cos", "sin"):
                for k in comp.get(part, {}):
                    kmax = max(kmax, int(k))
        c = np.zeros((len(comps), kmax + 1))
        s = np.zeros_like(c)
        for i, comp in enumerate(comps):
            for k, v in comp.get("cos", {}).items():
                c[i, int(k)] = float(v)
            for k, v in comp.get("sin", {}).items():
                s[i, int(k)] = float(v)
        return cls(c, s, alpha=cfg.get("alpha", 1.0) if isinstance(cfg, dict) else 1.0)

    def to_config(self):
        comps = []
        for i in range(self.dim):
            comps.append({
                "cos": {str(k): float(v) for k, v in enumerate(self.cos_coef[i]) if v != 0.0},
                "sin": {str(k): float(v) for k, v in enumerate(self.sin_coef[i]) if v != 0.0},
            })
        return {"components": comps, "alpha": self.alpha}

    @property
    def dim(self):
        return self.cos_coef.shape[0]

    def __call__(self, x):
        """Values with shape ``(d,) + x.shape``."""
        x = np.asarray(x, dtype=np.float64)
        k = np.arange(self.cos_coef.shape[1])
        ang = TWO_PI * x[..., None] * k
        out = np.cos(ang) @ self.cos_coef.T + np.sin(ang) @ self.sin_coef.T
        return np.moveaxis(out, -1, 0)

    def grid(self, n):
        return self(grid_points(n))

    def holder_const(self, n=4096, alpha=None):
        a = self.alpha if alpha is None else alpha
        vals = self.grid(n)
        return np.array([holder_estimate(v, a) for v in vals])

    def project(self, v):
        v = np.asarray(v, dtype=np.float64)
        return Observable(v @ self.cos_coef, v @ self.sin_coef, self.alpha)

    def scaled(self, c):
        return Observable(c * self.cos_coef, c * self.sin_coef, self.alpha)

    def shifted(self, const):
        """Add ``const`` (shape ``(d,)``) to the constant Fourier mode."""
        c = self.cos_coef.copy()
        c[:, 0] += np.broadcast_to(np.asarray(const, dtype=np.float64), (self.dim,))
        return Observable(c, self.sin_coef, self.alpha)

    def __repr__(self):
        return f"Observable(d={self.dim}, degree={self.cos_coef.shape[1] - 1})"


def random_trig_density(n, seed, stream, modes=8, floor=0.05):
    """Random positive trigonometric density on ``n`` grid points.

    Coefficients of mode ``k`` are uniform on ``[-1/k, 1/k]``; the function
    is shifted so its minimum is ``floor`` and then normalised.
    """
    u = Streams(seed).uniforms(stream, 2 * modes) * 2.0 - 1.0
    x = grid_points(n)
    k = np.arange(1, modes + 1)
    ang = TWO_PI * x[:, None] * k
    v = np.cos(ang) @ (u[:modes] / k) + np.sin(ang) @ (u[modes:] / k)
    v = v - v.min() + floor
    return DensityGrid(v).normalized()


def bin_masses(phi, nbins):
    """Mass of ``[b/nbins, (b+1)/nbins)`` under the centred-cell convention."""
    v = _values(phi)
    n = v.size
    p = v / v.sum()
    bounds = (np.arange(n + 2) - 0.5) / n
    cdf = np.concatenate([[0.0], np.cumsum(p), [1.0 + p[0]]])
    cdf[n] = 1.0
    edges = np.linspace(0.0, 1.0, nbins + 1)
    return np.diff(np.interp(edges, bounds, cdf))

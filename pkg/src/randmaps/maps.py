"""Circle-map templates and their dilation/distortion summary.

Every built-in template is a special case of the lift

    T(x) = d*x + c + (a / 2pi) * sin(2pi*x + phase),

with integer degree ``d >= 1`` and ``|a| < d`` so that ``T' > 0``:

* ``linear``    -- ``a = 0``: the map ``d*x + c mod 1``;
* ``perturbed`` -- expanding on average when ``d >= 2``;
* ``diffeo``    -- ``d = 1``: a circle diffeomorphism that contracts where
  ``1 + a*cos(2pi*x) < 1``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import TemplateError, ZeroDerivative

TWO_PI = 2.0 * np.pi
KINDS = ("linear", "perturbed", "diffeo")
SCAN_POINTS = 4096
REFINE_TOL = 1e-10


@dataclass(frozen=True)
class MapSample:
    """One circle map drawn from an ensemble.

    ``lam`` is ``inf |T'|`` and ``delta`` is ``sup |T''| / T'^2``; both are
    filled in at construction by :func:`compute_dilation_distortion`.
    """

    kind: str
    d: int
    c: float = 0.0
    a: float = 0.0
    phase: float = 0.0
    lam: float = field(init=False, repr=False)
    delta: float = field(init=False, repr=False)

    def __post_init__(self):
        _validate(self.kind, self.d, self.a, self.phase)
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "phase", float(self.phase))
        lam, delta = compute_dilation_distortion(self)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "delta", delta)

    @property
    def degree(self):
        return self.d

    @property
    def params(self):
        """Kernel parameter row ``(d, c, a, phase)``."""
        return np.array([self.d, self.c, self.a, self.phase], dtype=np.float64)

    def lift(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = self.d * x + self.c
        if self.a != 0.0:
            out = out + (self.a / TWO_PI) * np.sin(TWO_PI * x + self.phase)
        return out

    def eval(self, x):
        """``T(x) mod 1``."""
        y = self.lift(x)
        return y - np.floor(y)

    def deriv(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.a == 0.0:
            return np.full(x.shape, float(self.d))
        return self.d + self.a * np.cos(TWO_PI * x + self.phase)

    def deriv2(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.a == 0.0:
            return np.zeros(x.shape)
        return -TWO_PI * self.a * np.sin(TWO_PI * x + self.phase)

    def to_dict(self):
        out = {"kind": self.kind, "d": self.d, "c": self.c}
        if self.kind != "linear":
            out["a"] = self.a
        if self.phase:
            out["phase"] = self.phase
        return out


def _validate(kind, d, a, phase):
    if kind not in KINDS:
        raise TemplateError(f"unknown map template {kind!r}; expected one of {KINDS}")
    if int(d) != d or d < 1:
        raise TemplateError(f"degree must be a positive integer, got {d!r}")
    if kind == "linear" and a != 0.0:
        raise TemplateError("linear template takes no perturbation amplitude")
    if kind == "diffeo" and d != 1:
        raise TemplateError("diffeo template has degree 1")
    # |a| >= d gives a critical point; not excluded here so that
    # compute_dilation_distortion reports it as ZeroDerivative.
    if kind == "diffeo" and phase != 0.0:
        raise TemplateError("diffeo template has no phase")


def make_map(spec):
    """Build a :class:`MapSample` from a config dict such as
    ``{"kind": "perturbed", "d": 2, "a": 0.5}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    spec.pop("weight", None)
    if kind == "diffeo":
        spec.setdefault("d", 1)
    unknown = set(spec) - {"d", "c", "a", "phase"}
    if unknown:
        raise TemplateError(f"unknown map parameters {sorted(unknown)} for {kind!r}")
    return MapSample(kind, **spec)


def compute_dilation_distortion(m, scan_points=SCAN_POINTS):
    """Return ``(lam, delta)`` for the map ``m``.

    A uniform scan locates the extremum of ``|T'|`` (minimum) and of
    ``|T''|/T'^2`` (maximum); each is then polished by golden-section search
    on the bracketing scan cell.

    Raises
    ------
    ZeroDerivative
        If ``|T'| < 1e-12`` somewhere on the scan grid.
    """
    if m.a == 0.0:
        return float(m.d), 0.0
    x = np.arange(scan_points) / scan_points
    h = 1.0 / scan_points
    dT = np.abs(m.deriv(x))
    if dT.min() < 1e-12:
        raise ZeroDerivative(f"{m.kind} map with d={m.d}, a={m.a} has a critical point")

    def absd(u):
        return abs(float(m.deriv(u)))

    def neg_ratio(u):
        u = float(u)
        return -abs(float(m.deriv2(u))) / float(m.deriv(u)) ** 2

    lam = _refine(absd, x, dT, h)
    ratio = np.abs(m.deriv2(x)) / dT**2
    delta = -_refine(neg_ratio, x, -ratio, h)
    return lam, delta


def _refine(fun, x, vals, h):
    i = int(np.argmin(vals))
    best = float(vals[i])
    a, b, c = x[i] - h, x[i], x[i] + h
    fa, fb, fc = fun(a), fun(b), fun(c)
    if not (fb < fa and fb < fc):
        return best
    res = minimize_scalar(fun, bracket=(a, b, c), method="golden", tol=REFINE_TOL)
    return min(best, float(res.fun))

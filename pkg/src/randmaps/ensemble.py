"""Selection laws for random circle maps.

An :class:`Ensemble` is either a finite weighted mixture of
:class:`~randmaps.maps.MapSample` atoms or a one-parameter family of a
template whose free parameter is drawn from a law given by its quantile
function. Averages over the law (the angular-bracket moments, the annealed
operators) use the atoms exactly or Gauss-Legendre nodes in the quantile
variable for a family.
"""

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import AssumptionViolated, ConfigError, TemplateError
from .maps import KINDS, MapSample, make_map
from .rng import Streams

PPF_TABLE_SIZE = 4097
DEFAULT_QUAD_NODES = 32
MOMENT_NAMES = ("inv_lam", "inv_lam2", "inv_lam_2alpha", "delta", "delta2", "inv_lam_delta")


class Ensemble:
    """Selection law ``eta`` of the random maps.

    Build with :meth:`finite`, :meth:`family` or :meth:`from_config`.
    Instances are treated as immutable.
    """

    def __init__(self, weights=None, maps=None, template=None, param=None,
                 ppf=None, quad_nodes=DEFAULT_QUAD_NODES, name=None, config=None):
        self.name = name
        self.config = config
        if maps is not None:
            w = np.asarray(weights, dtype=np.float64)
            if w.ndim != 1 or len(w) != len(maps) or len(maps) == 0:
                raise ConfigError("weights and maps must be equal-length, non-empty")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ConfigError(f"atom weights must be nonnegative and sum to 1, got {w.tolist()}")
            self._weights = w
            self._maps = tuple(maps)
            self.template = None
            self.param = None
            self.ppf = None
        else:
            if template is None or param is None or ppf is None:
                raise ConfigError("a family needs a template, a parameter name and a quantile function")
            if param not in ("c", "a", "phase"):
                raise ConfigError(f"family parameter must be one of c, a, phase; got {param!r}")
            self.template = dict(template)
            self.param = param
            self.ppf = ppf
            self._weights = None
            self._maps = None
        self.quad_nodes = int(quad_nodes)

    # construction -------------------------------------------------------

    @classmethod
    def finite(cls, atoms, name=None):
        """``atoms`` is a list of ``(weight, MapSample or spec dict)``."""
        weights, maps = [], []
        for w, m in atoms:
            weights.append(float(w))
            maps.append(m if isinstance(m, MapSample) else make_map(m))
        return cls(weights=weights, maps=maps, name=name)

    @classmethod
    def single(cls, m, name=None):
        return cls.finite([(1.0, m)], name=name)

    @classmethod
    def family(cls, template, param, ppf, quad_nodes=DEFAULT_QUAD_NODES, name=None):
        return cls(template=template, param=param, ppf=ppf, quad_nodes=quad_nodes, name=name)

    @classmethod
    def from_config(cls, cfg):
        """Parse the JSON ensemble document (see ``cli`` for the schema)."""
        if "atoms" in cfg:
            atoms = []
            for atom in cfg["atoms"]:
                spec = dict(atom)
                w = spec.pop("weight")
                atoms.append((w, spec))
            try:
                ens = cls.finite(atoms, name=cfg.get("name"))
            except TemplateError as exc:
                raise ConfigError(str(exc)) from exc
        elif "family" in cfg:
            fam = dict(cfg["family"])
            kind = fam.get("kind")
            if kind not in KINDS:
                raise ConfigError(f"unknown template {kind!r}")
            laws = [k for k, v in fam.items() if isinstance(v, dict)]
            if len(laws) != 1:
                raise ConfigError("a family must give exactly one parameter as a law")
            param = laws[0]
            law = fam.pop(param)
            ppf = ppf_from_config(law)
            ens = cls.family(fam, param, ppf, quad_nodes=cfg.get("quad_nodes", DEFAULT_QUAD_NODES),
                             name=cfg.get("name"))
            ens.map_at(float(ppf(0.5)))
        else:
            raise ConfigError("ensemble needs 'atoms' or 'family'")
        ens.config = cfg
        return ens

    @classmethod
    def from_json(cls, text):
        return cls.from_config(json.loads(text))

    # basic access -------------------------------------------------------

    @property
    def is_finite(self):
        return self._maps is not None

    @property
    def weights(self):
        if not self.is_finite:
            raise TypeError("a continuous family has no atom weights")
        return self._weights

    @property
    def maps(self):
        if not self.is_finite:
            raise TypeError("a continuous family has no atom list")
        return self._maps

    def map_at(self, value):
        """Family member with the free parameter set to ``value``."""
        spec = dict(self.template)
        spec[self.param] = float(value)
        return make_map(spec)

    def map_for(self, entry):
        """Map selected by one :class:`OmegaSequence` entry."""
        if self.is_finite:
            return self._maps[int(entry)]
        return self._member(float(entry))

    def _member(self, value):
        cache = self.__dict__.setdefault("_member_cache", {})
        m = cache.get(value)
        if m is None:
            if len(cache) > 4096:
                cache.clear()
            m = cache[value] = self.map_at(value)
        return m

    @cached_property
    def quadrature(self):
        """``(weights, maps)`` used for every eta-average."""
        if self.is_finite:
            return self._weights, self._maps
        nodes, w = np.polynomial.legendre.leggauss(self.quad_nodes)
        u = 0.5 * (nodes + 1.0)
        values = [float(self.ppf(ui)) for ui in u]
        return 0.5 * w, tuple(self.map_at(v) for v in values)

    @cached_property
    def kernel_law(self):
        """Arrays consumed by the compiled kernels.

        ``(params, cumw, vary, ppf_table)``: parameter rows ``(d, c, a,
        phase)``, cumulative atom weights, the index of the varying parameter
        (-1 for a finite law) and a tabulated quantile function.
        """
        if self.is_finite:
            params = np.stack([m.params for m in self._maps])
            cumw = np.cumsum(self._weights)
            cumw[-1] = 1.0
            return params, cumw, -1, np.zeros(2)
        base = self.map_at(float(self.ppf(0.5)))
        params = base.params[None, :].copy()
        vary = {"c": 1, "a": 2, "phase": 3}[self.param]
        u = np.linspace(0.0, 1.0, PPF_TABLE_SIZE)
        u[0], u[-1] = 1e-12, 1.0 - 1e-12
        table = np.array([float(self.ppf(ui)) for ui in u])
        return params, np.ones(1), vary, table

    # moments ------------------------------------------------------------

    def moments(self, alpha=1.0, method=None, samples=10_000, seed=0):
        """Angular-bracket moments.

        Returns ``(values, stderr, flag)``; ``flag`` is ``"exact"`` for a
        finite law, ``"quadrature"`` or ``"mc"`` for a family.
        """
        if self.is_finite:
            lam = np.array([m.lam for m in self._maps])
            dlt = np.array([m.delta for m in self._maps])
            vals = _moment_values(self._weights, lam, dlt, alpha)
            return vals, {k: 0.0 for k in vals}, "exact"
        method = method or "quadrature"
        if method == "quadrature":
            w, maps = self.quadrature
            lam = np.array([m.lam for m in maps])
            dlt = np.array([m.delta for m in maps])
            vals = _moment_values(w, lam, dlt, alpha)
            return vals, {k: 0.0 for k in vals}, "quadrature"
        if method != "mc":
            raise ValueError(f"unknown moment method {method!r}")
        u = Streams(seed).uniforms(0, samples)
        maps = [self.map_at(float(self.ppf(ui))) for ui in u]
        lam = np.array([m.lam for m in maps])
        dlt = np.array([m.delta for m in maps])
        per = _moment_terms(lam, dlt, alpha)
        vals = {k: float(v.mean()) for k, v in per.items()}
        se = {k: float(v.std(ddof=1) / np.sqrt(samples)) for k, v in per.items()}
        return vals, se, "mc"

    # sampling -----------------------------------------------------------

    def sample_sequence(self, n, seed, stream=0):
        return sample_sequence(self, n, seed, stream)

    def to_config(self):
        if self.config is not None:
            return self.config
        if self.is_finite:
            return {"atoms": [dict(weight=float(w), **m.to_dict())
                              for w, m in zip(self._weights, self._maps)]}
        raise TypeError("family built from a Python quantile function has no JSON form")

    def __repr__(self):
        if self.is_finite:
            inner = ", ".join(f"{w:g}:{m.kind}(d={m.d},a={m.a:g},c={m.c:g})"
                              for w, m in zip(self._weights, self._maps))
            return f"Ensemble({self.name or ''}[{inner}])"
        return f"Ensemble({self.name or ''} family {self.template} over {self.param})"


def _moment_terms(lam, dlt, alpha):
    return {
        "inv_lam": 1.0 / lam,
        "inv_lam2": lam**-2.0,
        "inv_lam_2alpha": lam ** (-2.0 * alpha),
        "delta": dlt,
        "delta2": dlt**2,
        "inv_lam_delta": dlt / lam,
    }


def _moment_values(w, lam, dlt, alpha):
    return {k: float(np.dot(w, v)) for k, v in _moment_terms(lam, dlt, alpha).items()}


def ppf_from_config(law):
    if "uniform" in law:
        lo, hi = (float(v) for v in law["uniform"])
        if not hi > lo:
            raise ConfigError(f"uniform law needs lo < hi, got {law['uniform']}")
        return lambda u: lo + (hi - lo) * u
    if "beta" in law:
        from scipy.stats import beta as beta_dist

        b = law["beta"]
        lo, hi = float(b.get("lo", 0.0)), float(b.get("hi", 1.0))
        dist = beta_dist(float(b["a"]), float(b["b"]))
        return lambda u: lo + (hi - lo) * float(dist.ppf(u))
    raise ConfigError(f"unsupported parameter law {sorted(law)}")


@dataclass
class MomentReport:
    alpha: float
    moments: dict
    stderr: dict
    flag: str
    passed: bool
    jensen_ok: bool
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "alpha": self.alpha, "moments": self.moments, "stderr": self.stderr,
            "flag": self.flag, "passed": self.passed, "jensen_ok": self.jensen_ok,
            "notes": self.notes,
        }


def check_standing_assumption(e, alpha=1.0, method=None, samples=10_000, seed=0, raise_on_fail=True):
    """Check ``<lam^-2> < 1`` and ``<Delta^2> < inf``.

    Raises
    ------
    AssumptionViolated
        Carrying the offending moment, unless ``raise_on_fail`` is False.
    """
    if method == "mc" and samples < 10_000:
        raise ValueError("Monte Carlo moments need at least 1e4 samples")
    vals, se, flag = e.moments(alpha, method=method, samples=samples, seed=seed)
    jensen = vals["inv_lam"] <= np.sqrt(vals["inv_lam2"]) * (1 + 1e-12) + 1e-15
    ok = vals["inv_lam2"] < 1.0 and np.isfinite(vals["delta2"])
    report = MomentReport(alpha, vals, se, flag, bool(ok), bool(jensen))
    if flag == "mc":
        report.notes.append("moments are Monte Carlo estimates; see stderr")
    if not ok and raise_on_fail:
        if not vals["inv_lam2"] < 1.0:
            raise AssumptionViolated(f"<lam^-2> = {vals['inv_lam2']:.6g} >= 1", "inv_lam2",
                                     vals["inv_lam2"], report)
        raise AssumptionViolated("<Delta^2> is not finite", "delta2", vals["delta2"], report)
    return report


@dataclass(frozen=True)
class OmegaSequence:
    """A finite prefix ``(omega_1, ..., omega_n)`` of i.i.d. draws.

    ``entries`` are atom indices for a finite law, parameter values for a
    family. Draw ``i`` uses counter ``2*i`` of the stream, the same counter
    the trajectory kernels use to pick the map at step ``i + 1``.
    """

    ensemble: Ensemble
    entries: np.ndarray
    seed: int
    stream: int
    offset: int = 0

    def __len__(self):
        return len(self.entries)

    def maps(self):
        return [self.ensemble.map_for(v) for v in self.entries]

    def map(self, i):
        """Map ``omega_{i+1}`` (zero-based position ``i``)."""
        return self.ensemble.map_for(self.entries[i])

    def shift(self, m):
        """Left shift by ``m``: drops the first ``m`` entries."""
        return OmegaSequence(self.ensemble, self.entries[m:], self.seed, self.stream, self.offset + m)

    def lambdas(self):
        return np.array([m.lam for m in self.maps()])

    def deltas(self):
        return np.array([m.delta for m in self.maps()])


def select_entries(e, u):
    """Map uniforms to sequence entries (atom indices or parameter values)."""
    params, cumw, vary, table = e.kernel_law
    if vary < 0:
        idx = np.searchsorted(cumw, u, side="right")
        return np.minimum(idx, len(cumw) - 1).astype(np.int64)
    grid = np.linspace(0.0, 1.0, len(table))
    return np.interp(u, grid, table)


def sample_sequence(e, n, seed, stream=0):
    """Draw ``n`` i.i.d. entries from ``e`` on stream ``(seed, stream)``."""
    if n < 0:
        raise ValueError("sequence length must be nonnegative")
    st = Streams(seed)
    u = st.uniforms(stream, 2 * n)[0::2] if n else np.zeros(0)
    return OmegaSequence(e, select_entries(e, u), int(seed), int(stream))


# ensembles used throughout the tests and shipped configs

def doubling():
    return Ensemble.single(MapSample("linear", 2), name="doubling")


def tripling():
    return Ensemble.single(MapSample("linear", 3), name="tripling")


def mix_a():
    return Ensemble.finite([(0.9, MapSample("linear", 2)),
                            (0.1, MapSample("diffeo", 1, c=0.3, a=0.5))], name="mix-A")

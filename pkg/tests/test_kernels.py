"""Compiled and numpy kernel backends must agree."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from randmaps._accel import HAVE_NUMBA, resolve_backend
from randmaps.ensemble import Ensemble, doubling, mix_a, tripling
from randmaps.kernels import (birkhoff_sums, first_passage_times, holder_pairs,
                              occupation_counts, orbit_points, orbit_values)
from randmaps.rng import Streams

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")

MIX23 = Ensemble.finite([(0.5, {"kind": "linear", "d": 2}), (0.5, {"kind": "linear", "d": 3})])
PERT = Ensemble.from_config({"family": {"kind": "perturbed", "d": 2, "a": {"uniform": [0.0, 0.5]}}})
LINEAR = [doubling(), tripling(), MIX23]
SMOOTH = [mix_a(), PERT]

# f = cos 2 pi x + 0.5 sin 4 pi x, and a second component cos 6 pi x
COS = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
SIN = np.array([[0.0, 0.0, 0.5, 0.0], [0.0, 0.0, 0.0, 0.0]])


def _inputs(ntraj=200, seed=3):
    st_ = Streams(seed)
    return st_.uniforms(0, ntraj), st_.keys(ntraj, offset=1)


def _both(fn, *args):
    return fn(*args, backend="numba"), fn(*args, backend="numpy")


def test_resolve_backend_follows_env(monkeypatch):
    monkeypatch.setenv("RANDMAPS_NO_JIT", "1")
    assert resolve_backend() == "numpy"
    monkeypatch.setenv("RANDMAPS_NO_JIT", "0")
    assert resolve_backend() == "numba"
    with pytest.raises(ValueError):
        resolve_backend("fortran")


@pytest.mark.parametrize("ens", LINEAR, ids=lambda e: e.name or "mix23")
def test_orbit_points_linear_agree(ens):
    x0, keys = _inputs()
    a, b = _both(orbit_points, ens.kernel_law, x0, keys, 40)
    # linear steps are exact multiply-add-mod, so long horizons still agree closely
    assert np.max(np.abs(a - b)) <= 1e-12


@pytest.mark.parametrize("ens", LINEAR + SMOOTH, ids=lambda e: e.name or "other")
def test_orbit_points_short_horizon_agree(ens):
    x0, keys = _inputs()
    a, b = _both(orbit_points, ens.kernel_law, x0, keys, 8)
    d = np.abs(a - b)
    d = np.minimum(d, 1 - d)
    assert np.max(d) <= 1e-9


@pytest.mark.parametrize("ens", LINEAR + SMOOTH, ids=lambda e: e.name or "other")
def test_orbit_values_agree(ens):
    x0, keys = _inputs()
    a, b = _both(orbit_values, ens.kernel_law, x0, keys, 6, COS, SIN)
    assert a.shape == (200, 7, 2)
    assert np.max(np.abs(a - b)) <= 1e-8
    assert np.allclose(a[:, 0, 0], np.cos(2 * np.pi * x0) + 0.5 * np.sin(4 * np.pi * x0), atol=1e-12)


@pytest.mark.parametrize("ens", LINEAR + SMOOTH, ids=lambda e: e.name or "other")
def test_birkhoff_agree_and_match_orbit_values(ens):
    x0, keys = _inputs()
    cp = np.array([0, 1, 3, 7])
    a, b = _both(birkhoff_sums, ens.kernel_law, x0, keys, cp, COS, SIN)
    assert np.max(np.abs(a - b)) <= 1e-8
    vals = orbit_values(ens.kernel_law, x0, keys, 7, COS, SIN, backend="numba")
    for c, n in enumerate(cp):
        assert np.allclose(a[:, c, :], vals[:, :n, :].sum(axis=1), atol=1e-10)


def test_birkhoff_rejects_bad_checkpoints():
    x0, keys = _inputs(4)
    with pytest.raises(ValueError):
        birkhoff_sums(doubling().kernel_law, x0, keys, [3, 1], COS, SIN)


@pytest.mark.parametrize("ens", LINEAR + SMOOTH, ids=lambda e: e.name or "other")
def test_occupation_agree(ens):
    x0, keys = _inputs()
    a, b = _both(occupation_counts, ens.kernel_law, x0, keys, 6, 16)
    assert a.shape == (200, 16)
    assert np.all(a.sum(axis=1) == 6)
    # bin edges may flip on the last few ulps; allow a handful of moved counts
    assert np.abs(a - b).sum() <= 4


def test_first_passage_agree():
    keys = Streams(5).keys(5000)
    args = ([0.25, 0.75], [0.0, 2.0], [0.5, 0.5], 8.0, 4.0, 60, keys)
    a, b = _both(first_passage_times, *args)
    assert np.array_equal(a, b)
    assert a.min() >= 1 and a.max() <= 61


def test_first_passage_start_below_level():
    keys = Streams(5).keys(10)
    a, b = _both(first_passage_times, [0.5], [0.0], [1.0], 1.0, 2.0, 10, keys)
    assert np.all(a == 0) and np.all(b == 0)


def test_first_passage_single_atom_exact():
    # L_n = 8 / 2^n hits level 1 at n = 3
    keys = Streams(1).keys(3)
    a, b = _both(first_passage_times, [0.5], [0.0], [1.0], 8.0, 1.0, 10, keys)
    assert np.all(a == 3) and np.all(b == 3)


@given(st.integers(8, 200), st.floats(0.1, 1.0), st.integers(0, 2**31))
def test_holder_pairs_agree(n, alpha, seed):
    v = Streams(seed).uniforms(0, n)
    offsets = np.arange(1, n // 2 + 1)
    a, b = _both(holder_pairs, v, alpha, offsets)
    assert a == pytest.approx(b, rel=1e-12)

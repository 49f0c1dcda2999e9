import numpy as np
import pytest
from hypothesis import given, strategies as st

from randmaps.density import DensityGrid, Observable, integrate, random_trig_density
from randmaps.ensemble import Ensemble, doubling, mix_a, sample_sequence, tripling
from randmaps.errors import NonpositiveDensity
from randmaps.maps import MapSample
from randmaps.rng import Streams
from randmaps.transfer import (BranchInverter, annealed_transfer_apply, compute_stationary,
                               koopman_apply, koopman_apply_map, normalized_transfer_apply,
                               quenched_push, tilted_koopman_apply, tilted_quenched_push,
                               transfer_apply, verify_distortion, verify_holder_propagation)

N = 4096
X = np.arange(N) / N
D2 = MapSample("linear", 2)
COS = lambda k, x=X: np.cos(2 * np.pi * k * x)


def _trig(n, seed, stream, modes=6):
    u = Streams(seed).uniforms(stream, 2 * modes + 1) * 2 - 1
    x = np.arange(n) / n
    out = np.full(n, u[0])
    for k in range(1, modes + 1):
        out += u[k] * np.cos(2 * np.pi * k * x) + u[modes + k] * np.sin(2 * np.pi * k * x)
    return out


MIX23 = Ensemble.finite([(0.5, {"kind": "linear", "d": 2}), (0.5, {"kind": "linear", "d": 3})])
PERT = Ensemble.from_config({"family": {"kind": "perturbed", "d": 2, "a": {"uniform": [0.0, 0.5]}},
                             "quad_nodes": 8})
ENSEMBLES = [doubling(), tripling(), mix_a(), MIX23, PERT]


def test_doubling_transfer_examples():
    assert np.allclose(transfer_apply(D2, np.ones(N)), 1.0, atol=1e-14)
    x = np.arange(1024) / 1024
    out = transfer_apply(D2, 1 + COS(2, x))
    assert np.max(np.abs(out - (1 + COS(1, x)))) <= 1e-8
    assert np.max(np.abs(transfer_apply(D2, 1 + COS(1)) - 1.0)) <= 1e-12


def test_branch_inverter_roundtrip():
    m = MapSample("perturbed", 3, c=0.2, a=1.2)
    pre = BranchInverter(m).preimages(X[::64])
    assert pre.shape == (64, 3)
    for row in pre.T:
        assert np.max(np.abs(((m.eval(row) - X[::64] + 0.5) % 1.0) - 0.5)) < 1e-12


def test_quenched_push_examples():
    om = sample_sequence(doubling(), 3, 1)
    psi = 1 + COS(4)
    assert np.array_equal(quenched_push(om, psi, 0).values, psi)
    assert np.max(np.abs(quenched_push(om, psi, 2).values - (1 + COS(1)))) <= 1e-8
    assert np.max(np.abs(quenched_push(om, psi, 3).values - 1.0)) <= 1e-8


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_push_preserves_mass(seed, n):
    om = sample_sequence(mix_a(), n, seed)
    psi = random_trig_density(N, seed, 1)
    out, plog = quenched_push(om, psi, n, return_log=True)
    assert abs(out.mass - 1.0) <= 1e-8 * n
    assert plog.total_drift <= 1e-10 * n


@pytest.mark.parametrize("e", ENSEMBLES, ids=lambda e: str(e.name))
def test_annealed_mass_and_positivity(e):
    psi = random_trig_density(N, 3, 0).values
    out = annealed_transfer_apply(e, psi)
    assert abs(integrate(out) - integrate(psi)) <= 1e-10
    assert out.min() > 0


def test_lebesgue_invariance():
    for e in (doubling(), MIX23):
        assert np.max(np.abs(annealed_transfer_apply(e, np.ones(N)) - 1.0)) <= 1e-12


def test_mix_a_one_step_matches_mc_histogram():
    e = mix_a()
    out = annealed_transfer_apply(e, np.ones(N))
    assert np.ptp(out) > 0.1
    from randmaps import kernels
    from randmaps.density import bin_masses, sample_from_density
    m = 1_000_000
    x0 = sample_from_density(np.ones(N), m, 5)
    pts = kernels.orbit_points(e.kernel_law, x0, Streams(5).keys(m, offset=1), 1)
    counts = np.bincount((pts * 64).astype(int), minlength=64)
    p = bin_masses(out, 64)
    se = np.sqrt(p * (1 - p) / m)
    assert np.all(np.abs(counts / m - p) <= 3.5 * se)


def test_koopman_examples():
    assert np.allclose(koopman_apply(mix_a(), np.full(N, 2.5)), 2.5)
    assert np.max(np.abs(koopman_apply_map(D2, COS(1)) - COS(2))) <= 1e-10


@pytest.mark.parametrize("e", ENSEMBLES, ids=lambda e: str(e.name))
def test_duality(e):
    for p in range(50):
        f, g = _trig(N, 9, 2 * p), _trig(N, 9, 2 * p + 1)
        lhs = integrate(g * koopman_apply(e, f))
        rhs = integrate(annealed_transfer_apply(e, g) * f)
        assert abs(lhs - rhs) <= 1e-8


def test_stationary_examples():
    for e in (doubling(), tripling()):
        r = compute_stationary(e, tol=1e-13)
        assert r.residual < 1e-12 and r.iterations == 1
        assert np.max(np.abs(r.phi.values - 1)) < 1e-12
    r = compute_stationary(mix_a())
    assert r.residual < 1e-8 and r.inf_phi > 0 and r.lower_bound_ok
    f = _trig(N, 2, 0)
    pv = r.phi.values
    assert abs(integrate(koopman_apply(mix_a(), f) * pv) - integrate(f * pv)) <= 1e-8


def test_normalized_and_tilted_operators():
    e = mix_a()
    phi = compute_stationary(e).phi
    assert np.max(np.abs(normalized_transfer_apply(e, phi, np.ones(N)) - 1.0)) <= 1e-8
    assert np.max(np.abs(normalized_transfer_apply(doubling(), np.ones(N), COS(2)) - COS(1))) <= 1e-10
    g = np.exp(0.1j * COS(1))
    out = normalized_transfer_apply(e, phi, np.ones(N), g)
    assert np.max(np.abs(out)) <= 1 + 1e-8
    assert np.max(np.abs(tilted_koopman_apply(e, np.ones(N), g))) <= 1 + 1e-8
    with pytest.raises(NonpositiveDensity):
        normalized_transfer_apply(e, np.zeros(N), np.ones(N))


def test_tilted_push_examples():
    f = Observable.cosines({1: 1.0})
    h = np.ones(N)
    om = sample_sequence(doubling(), 3, 1)
    zero = tilted_quenched_push(om, [(0.0, f)] * 3, h)
    assert np.max(np.abs(zero - quenched_push(om, h, 3).values)) <= 1e-12
    one = tilted_quenched_push(om, [(0.4, f)], h)
    assert np.array_equal(one, transfer_apply(D2, np.exp(0.4j * f.grid(N)[0]) * h))
    res = tilted_quenched_push(om, [(0.1, f)] * 3, h, return_both=True)
    assert res.max_diff <= 1e-6


@given(st.integers(0, 1000), st.integers(1, 8), st.floats(-0.5, 0.5))
def test_tilted_identity_mix_a(seed, n, t):
    f = Observable.cosines({1: 1.0, 2: 0.3})
    om = sample_sequence(mix_a(), n, seed)
    res = tilted_quenched_push(om, [(t, f)] * n, np.ones(N), return_both=True)
    assert res.max_diff <= 1e-6


def test_distortion_bound():
    e = mix_a()
    rng = np.random.default_rng(0)
    om = sample_sequence(doubling(), 5, 0)
    rep = verify_distortion(om, 5, rng.uniform(0, 1, (20, 2)))
    assert rep.R_n == 0 and rep.max_log_ratio <= 1e-12
    for s in range(10):
        om = sample_sequence(e, 10, s)
        for n in (1, 5, 10):
            pairs = rng.uniform(0, 1, (100, 2))
            pairs[:, 1] = pairs[:, 0] + rng.uniform(-0.01, 0.01, 100)
            assert verify_distortion(om, n, pairs).ok
    same = np.array([[0.3, 0.3]])
    assert verify_distortion(sample_sequence(e, 4, 1), 4, same).max_log_ratio == 0.0


def test_holder_propagation_examples():
    om = sample_sequence(doubling(), 4, 0)
    rep = verify_holder_propagation(om, 4, np.ones(N), 0.5)
    assert np.all(rep.lhs <= 1e-12) and np.all(rep.rhs == 0)
    psi = DensityGrid(1 + 0.5 * COS(1))
    rep = verify_holder_propagation(om, 1, psi, 0.5)
    from randmaps.density import log_holder
    assert rep.lhs[0] <= 2**-0.5 * log_holder(psi, 0.5) + 1e-3
    for s in range(20):
        rep = verify_holder_propagation(sample_sequence(mix_a(), 5, s), 5, np.ones(N), 0.5)
        assert rep.ok and rep.sup_ok

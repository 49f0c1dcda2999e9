import numpy as np
import pytest
from hypothesis import given, strategies as st

from randmaps.coupling import (CouplingConstants, coupling_condition, coupling_count_tail,
                               coupling_counts, coupling_schedule, fit_log_rate, in_class,
                               measure_decay_rates, rde_simulate, verify_memory_loss, wilson_interval)
from randmaps.density import DensityGrid, random_trig_density, regularize
from randmaps.ensemble import Ensemble, doubling, mix_a, sample_sequence
from randmaps.errors import ClassViolation, FitDegenerate, InvalidThreshold

N = 4096
X = np.arange(N) / N


def test_condition_examples():
    assert coupling_condition(0.25, 0.0, 2.0, 0.5, 1.0)
    assert not coupling_condition(0.25, 0.5, 2.0, 0.5, 1.0)
    assert not coupling_condition(1e-12, 1.5, 1.0, 0.5, 1.0)


def test_mix_a_constants():
    c = CouplingConstants.for_ensemble(mix_a())
    assert c.mean_A == pytest.approx(0.65)
    assert c.K == pytest.approx(0.53249 / 0.35 + 2.0, abs=1e-4)
    assert c.kappa == pytest.approx(0.5 * np.exp(-c.K))
    assert c.K_prime == pytest.approx(np.exp(4 * c.K))
    assert 0 < c.q < 1 and 0 < c.theta < 1 and c.t > 0


def test_invalid_threshold():
    with pytest.raises(InvalidThreshold) as info:
        CouplingConstants.from_moments(0.5, 1.0, K=3.0)
    assert info.value.minimal_K == pytest.approx(3.0)
    assert CouplingConstants.from_moments(0.5, 1.0, K=4.0).q == pytest.approx(5 / 6)


def test_schedule_doubling_example():
    consts = CouplingConstants.from_moments(0.5, 0.0, K=1.0, alpha=1.0, K_dprime=1.0, validate=False)
    om = sample_sequence(doubling(), 30, 0)
    tr = coupling_schedule(om, consts, 30)
    assert tr.taus[:4] == [0, 6, 6, 6]
    assert int(np.ceil(4 / np.log(2))) == 6


@given(st.integers(0, 10_000))
def test_schedule_properties(seed):
    e = mix_a()
    consts = CouplingConstants.for_ensemble(e)
    om = sample_sequence(e, 200, seed)
    tr = coupling_schedule(om, consts, 200)
    assert np.all(np.diff(tr.N) >= 0)
    for k, nk in enumerate(tr.n_k, start=1):
        assert tr.N[nk] >= k
    assert tr.dominated()


def test_counts_match_schedule():
    e = mix_a()
    consts = CouplingConstants.for_ensemble(e)
    N_all = coupling_counts(e, consts, 300, 20, seed=4)
    for s in range(20):
        tr = coupling_schedule(sample_sequence(e, 300, 4, s), consts, 300)
        assert np.array_equal(N_all[s], tr.N)


def test_count_tail_decays():
    e = mix_a()
    consts = CouplingConstants.for_ensemble(e)
    consts = CouplingConstants(consts.K, consts.alpha, consts.K_prime, consts.mean_A, consts.mean_B)
    tail = coupling_count_tail(e, consts, 1000, 20_000, seed=1)
    assert np.isfinite(tail.slope) and tail.slope < 0


def test_rde_deterministic_example():
    rep = rde_simulate(([1.0], [0.5], [0.0]), ell=8.0, K=2.0, n_max=10, samples=100, seed=0)
    assert np.all(rep.times == 3)


def test_rde_tail_bound_two_atom():
    rep = rde_simulate(([0.5, 0.5], [0.25, 0.75], [0.0, 2.0]), 8.0, 4.0, 60, 100_000, seed=2)
    assert rep.q == pytest.approx(5 / 6)
    assert not rep.violated


@pytest.mark.parametrize("e", [doubling(), mix_a(), Ensemble.from_config(
    {"family": {"kind": "perturbed", "d": 2, "a": {"uniform": [0.0, 0.5]}}, "quad_nodes": 8})],
    ids=["doubling", "mix-A", "perturbed"])
def test_rde_tail_bound_builtin(e):
    c = CouplingConstants.for_ensemble(e)
    rep = rde_simulate(e, 2 * c.K, c.K, 60, 20_000, seed=3)
    assert not rep.violated


def test_rde_invalid():
    with pytest.raises(InvalidThreshold):
        rde_simulate(([1.0], [0.5], [1.0]), 8.0, 3.0, 10, 10, 0)


def test_wilson_contains_estimate():
    lo, hi = wilson_interval(np.array([0, 5, 100]), 100)
    assert lo[0] == 0.0 and hi[0] > 0 and lo[2] < 1 and hi[2] == pytest.approx(1.0)


def test_memory_loss_examples():
    e = mix_a()
    consts = CouplingConstants.for_ensemble(e)
    om = sample_sequence(e, 20, 0)
    psi, _ = regularize(random_trig_density(N, 0, 0), 0.5)
    rep = verify_memory_loss(om, psi, psi, consts, 20)
    assert np.all(rep.distance == 0)
    dbl = CouplingConstants.for_ensemble(doubling())
    psi1, _ = regularize(DensityGrid(1 + np.cos(2 * np.pi * X)), 0.5)
    rep = verify_memory_loss(sample_sequence(doubling(), 5, 0), psi1, np.ones(N), dbl, 5)
    assert rep.ok and np.all(rep.distance[1:] <= 1e-10)


def test_memory_loss_mix_a_sequences():
    e = mix_a()
    consts = CouplingConstants.for_ensemble(e)
    for s in range(5):
        p1, _ = regularize(random_trig_density(N, 7, 2 * s), 0.5)
        p2, _ = regularize(random_trig_density(N, 7, 2 * s + 1), 0.5)
        rep = verify_memory_loss(sample_sequence(e, 30, 7, s), p1, p2, consts, 30)
        assert rep.ok and rep.monotone and rep.violations == 0


def test_memory_loss_class_violation():
    consts = CouplingConstants.for_ensemble(mix_a())
    rough = DensityGrid(1 + 0.9 * np.cos(2 * np.pi * 40 * X))
    assert not in_class(rough, 1.0, 0.5)
    with pytest.raises(ClassViolation):
        verify_memory_loss(sample_sequence(mix_a(), 5, 0), rough, np.ones(N), consts, 5)


def test_decay_fit_examples():
    with pytest.raises(FitDegenerate):
        measure_decay_rates(doubling(), DensityGrid(1 + np.cos(2 * np.pi * 8 * X)), 8)
    with pytest.raises(FitDegenerate):
        measure_decay_rates(doubling(), np.ones(N), 8)
    fit = measure_decay_rates(mix_a(), random_trig_density(N, 1, 0), 25)
    assert fit.theta < 1 and fit.r2 > 0.9


def test_fit_log_rate_exact():
    slope, r2, mask = fit_log_rate(0.5 ** np.arange(10))
    assert slope == pytest.approx(np.log(0.5)) and r2 == pytest.approx(1.0)

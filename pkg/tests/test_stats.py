import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randmaps import stats as S
from randmaps.density import Observable
from randmaps.ensemble import doubling, mix_a
from randmaps.errors import DegenerateDirection, SeriesDiverged, TailNotConverged
from randmaps.rng import Streams
from randmaps.transfer import compute_stationary, koopman_apply

N = 4096
X = np.arange(N) / N
ONE = np.ones(N)
COS1 = Observable.cosines({1: 1.0})
COS12 = Observable.cosines({1: 1.0, 2: 1.0})
COB = Observable.cosines({1: 1.0, 2: -1.0})  # cos 2pi x - cos 4pi x = g - g o T for g = cos 2pi x


@pytest.fixture(scope="module")
def mix():
    e = mix_a()
    return e, compute_stationary(e).phi


# correlations ----------------------------------------------------------------------

def test_doubling_correlation_examples():
    c = S.correlation_operator(doubling(), ONE, COS1, COS1, 6).values
    assert np.allclose(c, [0.5, 0, 0, 0, 0, 0, 0], atol=1e-12)
    c = S.correlation_operator(doubling(), ONE, COS12, COS12, 4).values
    assert np.allclose(c, [1.0, 0.5, 0, 0, 0], atol=1e-12)


def test_correlation_with_constant_vanishes(mix):
    e, phi = mix
    c = S.correlation_operator(e, phi, COS1, np.full(N, 3.0), 5).values
    assert np.max(np.abs(c)) <= 1e-12


def test_correlation_routes_agree_at_small_lags(mix):
    e, phi = mix
    a = S.correlation_operator(e, phi, COS1, COS12, 5, route="transfer").values
    b = S.correlation_operator(e, phi, COS1, COS12, 5, route="koopman").values
    assert np.max(np.abs(a - b)) <= 1e-9
    with pytest.raises(ValueError):
        S.correlation_operator(e, phi, COS1, COS1, 2, route="sideways")


def test_correlation_mc_matches_operator(mix):
    e, phi = mix
    op = S.correlation_operator(e, phi, COS1, COS1, 4).values
    mc = S.correlation_mc(e, phi, COS1, COS1, 4, samples=20_000, seed=7)
    assert np.all(np.abs(mc.values - op) <= 4 * mc.se + 1e-3)


def test_correlation_curve_csv(tmp_path):
    c = S.correlation_operator(doubling(), ONE, COS1, COS1, 3)
    p = tmp_path / "c.csv"
    c.to_csv(p)
    lines = p.read_text().strip().splitlines()
    assert len(lines) == 5


# covariance ------------------------------------------------------------------------

def test_doubling_covariance_series_examples():
    assert S.covariance_series(doubling(), ONE, COS1).sigma2[0, 0] == pytest.approx(0.5, abs=1e-10)
    assert abs(S.covariance_series(doubling(), ONE, COB).sigma2[0, 0]) <= 1e-10
    assert abs(S.covariance_series(doubling(), ONE, np.zeros(N)).sigma2[0, 0]) <= 1e-15


@given(st.floats(-3, 3).filter(lambda c: abs(c) > 1e-3))
@settings(max_examples=10)
def test_covariance_scales_quadratically(c):
    e = mix_a()
    phi = compute_stationary(e).phi
    base = S.covariance_series(e, phi, COS12.grid(N)).sigma2
    scaled = S.covariance_series(e, phi, c * COS12.grid(N)).sigma2
    # the absolute tail tolerance may stop the two series at different lags
    assert np.allclose(scaled, c * c * base, rtol=1e-9, atol=1e-8)


def test_vector_covariance_symmetric_psd(mix):
    e, phi = mix
    f = Observable.from_config({"components": [{"cos": {"1": 1.0}}, {"sin": {"2": 0.5}},
                                               {"cos": {"1": 2.0}}]})
    est = S.covariance_series(e, phi, f)
    assert np.array_equal(est.sigma2, est.sigma2.T)
    # third component is twice the first, so Sigma^2 is singular but PSD
    assert est.min_eigenvalue >= -1e-10
    assert est.min_eigenvalue <= 1e-8
    assert est.sigma2[2, 2] == pytest.approx(4 * est.sigma2[0, 0], rel=1e-10)


def test_covariance_routes_agree(mix):
    e, phi = mix
    a = S.covariance_series(e, phi, COS1, m_max=200).sigma2
    b = S.covariance_series(doubling(), ONE, COS1, route="koopman").sigma2
    assert b[0, 0] == pytest.approx(0.5, abs=1e-10)
    assert a[0, 0] > 0


def test_tail_not_converged(mix):
    e, phi = mix
    with pytest.raises(TailNotConverged):
        S.covariance_series(e, phi, COS1, m_max=3)


def test_batch_means_doubling():
    est = S.covariance_batch_means(doubling(), ONE, COS1, n=64, batches=4000, seed=3)
    assert abs(est.sigma2[0, 0] - 0.5) <= 4 * est.se[0, 0]


def test_batch_means_agree_with_series(mix):
    e, phi = mix
    series = S.covariance_series(e, phi, COS1).sigma2[0, 0]
    est = S.covariance_batch_means(e, phi, COS1, n=256, batches=4000, seed=11)
    # batch means carry an O(1/n) bias on top of the noise
    assert abs(est.sigma2[0, 0] - series) <= 4 * est.se[0, 0] + 0.05


def test_variance_growth_no_trend():
    rep = S.variance_growth_check(doubling(), ONE, COS1, None, [16, 32, 64, 128], samples=4000, seed=2)
    assert rep.sigma2_v == pytest.approx(0.5, abs=1e-10)
    assert rep.no_trend


# CLT -------------------------------------------------------------------------------

def test_clt_doubling_small():
    rep = S.clt_test(doubling(), ONE, COS1, None, n=256, samples=2000, seed=5)
    assert rep.sigma2_v == pytest.approx(0.5, abs=1e-10)
    assert rep.passed and rep.ks_pass and rep.ad_pass


def test_clt_degenerate_direction():
    with pytest.raises(DegenerateDirection):
        S.clt_test(doubling(), ONE, COB, None, n=64, samples=1000, seed=1)


def test_clt_low_power_warning():
    rep = S.clt_test(doubling(), ONE, COS1, None, n=64, samples=10, seed=1)
    assert rep.warning and rep.passed is None


# coboundary -------------------------------------------------------------------------

def test_coboundary_doubling_examples():
    r = S.coboundary_residual(doubling(), ONE, COB.grid(N)[0])
    g = r.g - r.g.mean()
    assert np.max(np.abs(g - np.cos(2 * np.pi * X))) <= 1e-10
    assert r.residual <= 1e-10
    r = S.coboundary_residual(doubling(), ONE, COS1.grid(N)[0])
    assert r.residual >= 0.5
    r = S.coboundary_residual(doubling(), ONE, np.zeros(N))
    assert r.residual == 0.0 and r.terms == 1


@given(st.integers(0, 2**31))
@settings(max_examples=8)
def test_constructed_coboundary_recovered(seed):
    e = mix_a()
    phi = compute_stationary(e).phi
    u = Streams(seed).uniforms(0, 6) * 2 - 1
    g0 = sum(u[k] * np.cos(2 * np.pi * (k + 1) * X) + u[k + 3] * np.sin(2 * np.pi * (k + 1) * X)
             for k in range(3))
    f = g0 - koopman_apply(e, g0)
    r = S.coboundary_residual(e, phi, f)
    assert r.q_residual <= 1e-5
    assert np.ptp(r.g - g0) <= 1e-5


def test_series_diverged(monkeypatch):
    monkeypatch.setattr(S, "koopman_apply", lambda e, h: 1.5 * h)
    with pytest.raises(SeriesDiverged):
        S.coboundary_residual(doubling(), ONE, COS1.grid(N)[0])


# multiple correlations -------------------------------------------------------------------

def test_multicorr_zero_at_t0(mix):
    e, phi = mix
    rep = S.multiple_correlation_check(e, phi, [COS1], [0.0], 2, 2, 5, samples=2000, seed=1)
    assert rep.zero_at_t0
    assert np.all(rep.diff == 0)


def test_multicorr_without_past_factor_is_zero(mix):
    e, phi = mix
    op = S.multiple_correlation_operator(e, phi, [COS1], [0.1], 0, 1, 4)
    # exact up to the stationarity residual of phi
    assert np.max(np.abs(op)) <= 1e-9


def test_multicorr_mc_matches_operator(mix):
    e, phi = mix
    rep = S.multiple_correlation_check(e, phi, [COS1], [0.2], 1, 1, 4, samples=50_000, seed=4)
    assert np.all(np.abs(rep.diff - rep.operator_diff) <= 4 * rep.se + 1e-12)


def test_multicorr_single_pair_matches_covariance(mix):
    # G_n sits at X_{m+n}, so for small t the n-th value is -t^2 C_{n+1} + O(t^3)
    e, phi = mix
    t = 1e-3
    op = S.multiple_correlation_operator(e, phi, [COS1, COS1], [t, t], 1, 1, 4)
    c = S.correlation_operator(e, phi, COS1, COS1, 5).values
    assert np.allclose(op.real / -t ** 2, c[1:], atol=1e-4)


def test_multicorr_rejects_large_t(mix):
    e, phi = mix
    with pytest.raises(ValueError):
        S.multiple_correlation_check(e, phi, [COS1], [0.5], 1, 1, 3, samples=100, seed=1, eps=0.2)

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from bdris.leakage import direct_leakage, effective_channels, leakage_with
from bdris.linalg import complex_gaussian
from bdris.optimizers import OptimizerOptions, minimize_il_mo
from bdris.precoders import (
    max_sinr_beamformers,
    max_sinr_beamformers_eff,
    max_sr_beamformers,
    min_il_beamformers,
    min_il_beamformers_eff,
    rate_of_user,
    sum_rate,
    surrogate_coefficients,
    surrogate_value,
    svd_precoders,
    user_rates,
    waterfill,
)

from conftest import scenario_channels


def rand_h(K, nr, nt, rng, cross=1.0):
    h = complex_gaussian((K, K, nr, nt), rng)
    for l in range(K):
        for k in range(K):
            if l != k:
                h[l, k] *= cross
    return h


def random_feasible(K, nt, d, p_t, rng):
    out = []
    for _ in range(K):
        v = complex_gaussian((nt, d), rng)
        out.append(v * np.sqrt(p_t * rng.uniform(0.05, 1.0)) / np.linalg.norm(v))
    return out


def eig_logdet_rate(h, v, sigma2, k):
    """Rate via eigenvalues of the whitened signal covariance."""
    n = h.shape[2]
    cov = [h[l, k] @ v[l] @ v[l].conj().T @ h[l, k].conj().T for l in range(h.shape[0])]
    noise = sigma2 * np.eye(n) + sum(c for l, c in enumerate(cov) if l != k)
    w = np.linalg.eigvals(np.linalg.solve(noise, cov[k]))
    return float(np.sum(np.log2(1 + np.real(w))))


# waterfilling

def test_waterfill_equal_gains():
    alloc = waterfill([1.0, 1.0], 4.0, 1.0)
    assert np.allclose(alloc.powers, [2.0, 2.0])


def test_waterfill_shuts_weak_stream():
    alloc = waterfill([1.0, 1e-9], 1.0, 10.0)
    assert alloc.powers[1] == 0.0 and alloc.powers[0] == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(gains=st.lists(st.floats(1e-6, 1e3), min_size=1, max_size=6), p=st.floats(1e-3, 1e3),
       noise=st.floats(1e-3, 10))
@example(gains=[1e-6, 1e-6 * (1 + 1e-9)], p=1e-3, noise=10.0)
def test_waterfill_kkt(gains, p, noise):
    g = np.array(gains)
    alloc = waterfill(g, p, noise)
    w = alloc.water_level
    assert alloc.powers.sum() == pytest.approx(p, rel=1e-10)
    expected = np.maximum(0.0, w - noise / g)
    # w - noise/g cancels when the floors dwarf p; allow its rounding error
    assert np.allclose(alloc.powers, expected, rtol=1e-10, atol=1e-10 * p + 8 * np.finfo(float).eps * w)


def test_svd_single_user_beats_random_power_search():
    rng = np.random.default_rng(0)
    h = complex_gaussian((1, 1, 3, 3), rng)
    p_t, sigma2 = 2.0, 0.5
    bf = svd_precoders(h, p_t, sigma2)
    achieved = rate_of_user(h, bf.v, sigma2, 0)
    s = np.linalg.svd(h[0, 0], compute_uv=False)
    # random search over diagonal powers on the SVD beams
    p = rng.dirichlet(np.ones(3), size=100_000) * p_t
    rates = np.sum(np.log2(1 + p * s ** 2 / sigma2), axis=1)
    assert achieved >= rates.max() - 1e-6
    assert achieved == pytest.approx(rates.max(), abs=1e-2)
    assert bf.powers()[0] <= p_t * (1 + 1e-9)


def test_svd_zero_channel_warns():
    h = np.zeros((1, 1, 2, 2), dtype=complex)
    with pytest.warns(RuntimeWarning):
        bf = svd_precoders(h, 1.0, 1.0)
    assert bf.powers()[0] == 0.0


# rates

def test_rate_zero_precoder():
    h = complex_gaussian((2, 2, 2, 2), np.random.default_rng(1))
    v = [np.zeros((2, 1)), complex_gaussian((2, 1), np.random.default_rng(2))]
    assert rate_of_user(h, v, 1.0, 0) == 0.0


def test_rate_scalar_awgn():
    h = np.ones((1, 1, 1, 1), dtype=complex)
    p, sigma2 = 3.0, 0.5
    assert rate_of_user(h, [np.array([[np.sqrt(p)]])], sigma2, 0) == pytest.approx(np.log2(1 + p / sigma2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 3))
def test_rate_two_routes(seed, K):
    rng = np.random.default_rng(seed)
    h = rand_h(K, 3, 3, rng)
    v = random_feasible(K, 3, 2, 1.0, rng)
    rates = user_rates(h, v, 0.3)
    for k in range(K):
        assert rates[k] == pytest.approx(eig_logdet_rate(h, v, 0.3, k), abs=1e-10)
    assert sum_rate(h, v, 0.3) == pytest.approx(rates.sum(), abs=1e-12)


# min-IL

def test_min_il_single_user_zero_leakage():
    h = complex_gaussian((1, 1, 3, 3), np.random.default_rng(0))
    bf = min_il_beamformers_eff(h, 2, 1.0)
    assert leakage_with(h, bf.v, bf.u) == 0.0
    assert np.all(bf.decoder_errors() <= 1e-8)


def test_min_il_crafted_interference_free_subspace():
    rng = np.random.default_rng(3)
    K, n, d = 3, 3, 2
    h = complex_gaussian((K, K, n, n), rng)
    for l in range(K):
        for k in range(K):
            if l != k:
                # rank-one cross links leave a 2-dim clean subspace at every receiver
                h[l, k] = np.outer(complex_gaussian(n, rng), complex_gaussian(n, rng).conj())
    bf = min_il_beamformers_eff(h, d, 1.0, iters=200)
    assert leakage_with(h, bf.v, bf.u) <= 1e-9 * direct_leakage_of(h)


def direct_leakage_of(h):
    return float(sum(np.linalg.norm(h[l, k]) ** 2 for l in range(h.shape[0]) for k in range(h.shape[0]) if l != k))


def test_min_il_default_scenario_without_ris_stays_positive():
    ch = scenario_channels(seed=0, M=3)
    h = ch.h_direct
    bf = min_il_beamformers_eff(h, 2, 1.0, iters=500, tol=0.0)
    assert leakage_with(h, bf.v, bf.u) / direct_leakage(ch) > 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_min_il_half_steps_monotone_and_feasible(seed):
    ch = scenario_channels(seed=seed, M=8)
    p_t = 10.0
    bf = min_il_beamformers(ch, np.eye(8), 2, p_t, iters=50)
    trace = np.array(bf.info["il_trace"])
    assert np.all(np.diff(trace) <= 1e-8 * trace[0])
    assert np.all(bf.powers() <= p_t * (1 + 1e-9))
    assert np.all(bf.decoder_errors() <= 1e-8)
    assert bf.streams() == [2, 2, 2]


# max-SINR

def test_max_sinr_single_user_single_stream():
    rng = np.random.default_rng(4)
    h = complex_gaussian((1, 1, 3, 3), rng)
    p_t, sigma2 = 2.0, 0.1
    bf = max_sinr_beamformers_eff(h, 1, p_t, sigma2)
    smax = np.linalg.svd(h[0, 0], compute_uv=False)[0]
    assert rate_of_user(h, bf.v, sigma2, 0) == pytest.approx(np.log2(1 + p_t * smax ** 2 / sigma2), rel=1e-8)


def test_max_sinr_interference_free_matches_svd_directions():
    rng = np.random.default_rng(5)
    K, n, d = 2, 4, 2
    h = rand_h(K, n, n, rng, cross=0.0)
    bf = max_sinr_beamformers_eff(h, d, 1.0, 0.01, iters=500, tol=1e-15)
    for k in range(K):
        vh = np.linalg.svd(h[k, k])[2]
        ref = vh.conj().T[:, :d]
        q = np.linalg.qr(bf.v[k])[0]
        cosines = np.linalg.svd(ref.conj().T @ q, compute_uv=False)
        angles = np.arccos(np.clip(cosines, -1, 1))
        assert angles.max() <= 1e-6


def test_max_sinr_feasible_outputs():
    ch = scenario_channels(seed=1, M=8)
    p_t = 100.0
    bf = max_sinr_beamformers(ch, np.eye(8), 2, p_t, ch.noise_power)
    assert np.all(bf.powers() <= p_t * (1 + 1e-9))
    assert np.all(bf.decoder_errors() <= 1e-8)


def test_max_sinr_beats_min_il_with_bdris():
    rates_sinr, rates_minil = [], []
    p_t = 100.0  # 20 dBm
    for seed in range(20):
        ch = scenario_channels(seed=seed, M=64, pt_dbm=20.0)
        res, _ = minimize_il_mo(ch, options=OptimizerOptions(max_iters=100, seed=seed))
        h = effective_channels(ch, res.theta)
        rates_sinr.append(sum_rate(h, max_sinr_beamformers_eff(h, 2, p_t, ch.noise_power).v, ch.noise_power))
        rates_minil.append(sum_rate(h, min_il_beamformers_eff(h, 2, p_t).v, ch.noise_power))
    assert np.mean(rates_sinr) >= np.mean(rates_minil)


# surrogate

@pytest.mark.parametrize("seed", range(5))
def test_surrogate_touches_and_bounds(seed):
    rng = np.random.default_rng(seed)
    K, n, d, sigma2, p_t = 3, 3, 2, 0.5, 2.0
    h = rand_h(K, n, n, rng, cross=0.7)
    v_bar = random_feasible(K, n, d, p_t, rng)
    co = surrogate_coefficients(h, v_bar, sigma2)
    for k in range(K):
        r_nats = rate_of_user(h, v_bar, sigma2, k) * np.log(2)
        assert abs(surrogate_value(co, h, v_bar, k) - r_nats) <= 1e-9
    for _ in range(100):
        v = random_feasible(K, n, d, p_t, rng)
        for k in range(K):
            assert surrogate_value(co, h, v, k) <= rate_of_user(h, v, sigma2, k) * np.log(2) + 1e-9
    assert all(np.linalg.norm(b - b.conj().T) <= 1e-8 for b in co.b_mat)


def test_surrogate_without_cross_channels():
    rng = np.random.default_rng(7)
    K, n, sigma2 = 2, 3, 0.4
    h = rand_h(K, n, n, rng, cross=0.0)
    v_bar = random_feasible(K, n, 2, 1.0, rng)
    co = surrogate_coefficients(h, v_bar, sigma2)
    for k in range(K):
        s_kk = h[k, k] @ v_bar[k] @ v_bar[k].conj().T @ h[k, k].conj().T
        expected = np.eye(n) / sigma2 - np.linalg.inv(sigma2 * np.eye(n) + s_kk)
        assert np.allclose(co.b_mat[k], expected, atol=1e-12)
        assert np.allclose(co.r_mat[k], np.eye(n) / sigma2)


# max-SR

@pytest.mark.parametrize("seed", range(10))
def test_max_sr_matches_waterfilling_single_user(seed):
    rng = np.random.default_rng(seed)
    h = complex_gaussian((1, 1, 3, 3), rng)
    p_t, sigma2 = 1.5, 0.2
    init = svd_precoders(h, p_t, sigma2)
    wf = sum_rate(h, init.v, sigma2)
    start = random_feasible(1, 3, 3, p_t, rng)
    bf = max_sr_beamformers(h, start, p_t, sigma2, mm_iters=2000, tol=1e-14)
    assert sum_rate(h, bf.v, sigma2) == pytest.approx(wf, rel=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_max_sr_monotone_and_feasible(seed):
    ch = scenario_channels(seed=seed, M=16, pt_dbm=20.0)
    p_t = 100.0  # 20 dBm in mW
    h = effective_channels(ch, np.eye(16))
    init = svd_precoders(h, p_t, ch.noise_power)
    bf = max_sr_beamformers(h, init.v, p_t, ch.noise_power, mm_iters=50)
    trace = np.array(bf.info["rate_trace"])
    assert len(trace) == 51
    assert np.all(np.diff(trace) >= -1e-8)
    assert trace[-1] == pytest.approx(sum_rate(h, bf.v, ch.noise_power), rel=1e-10)
    assert np.all(bf.powers() <= p_t * (1 + 1e-9))
    assert np.all(bf.decoder_errors() <= 1e-8)

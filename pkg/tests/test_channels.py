import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdris.channels import (
    ConfigError,
    ScenarioConfig,
    dbm_to_mw,
    draw_channels,
    los_component,
    node_positions,
    noise_power_dbm,
    path_loss_db,
    rician,
)


def test_positions_k3():
    tx, rx = node_positions(ScenarioConfig(K=3))
    assert np.allclose(tx, [[0, 0, 1.5], [0, 25, 1.5], [0, 50, 1.5]])
    assert np.allclose(rx[:, 0], 50.0)
    assert np.allclose(rx[1], [50, 25, 1.5])


def test_positions_k2():
    tx, _ = node_positions(ScenarioConfig(K=2))
    assert np.allclose(tx[:, 1], [0, 50])


@pytest.mark.parametrize("r, alpha, expected", [(1, 2, -28.0), (10, 2, -48.0), (10, 3.75, -65.5)])
def test_path_loss_values(r, alpha, expected):
    assert path_loss_db(r, alpha) == pytest.approx(expected, abs=1e-12)


def test_path_loss_rejects_zero_distance():
    with pytest.raises(ValueError):
        path_loss_db(0.0, 2.0)


@settings(max_examples=100, deadline=None)
@given(r1=st.floats(0.1, 1e3), r2=st.floats(0.1, 1e3), alpha=st.floats(0.5, 5))
def test_path_loss_monotone(r1, r2, alpha):
    if r1 < r2 * (1 - 1e-9):
        assert path_loss_db(r1, alpha) > path_loss_db(r2, alpha)


@pytest.mark.parametrize("bw, nf, expected", [(40e6, 10, -87.97940008672037), (1, 0, -174.0), (1e6, 0, -114.0)])
def test_noise_power(bw, nf, expected):
    assert noise_power_dbm(bw, nf) == pytest.approx(expected, abs=1e-9)


def test_noise_power_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        noise_power_dbm(0, 10)


def test_dbm_conversion():
    assert dbm_to_mw(0) == 1.0 and dbm_to_mw(20) == pytest.approx(100.0)


def test_rician_limits():
    rng = np.random.default_rng(0)
    los = los_component(np.array([0, 0, 1.5]), np.array([40, 25, 5]), 3, 4)
    assert np.allclose(rician(los, np.inf, rng), los)
    a = rician(los, 0.0, np.random.default_rng(5))
    b = np.random.default_rng(5)
    ref = (b.standard_normal(los.shape) + 1j * b.standard_normal(los.shape)) / np.sqrt(2)
    assert np.allclose(a, ref)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 3.0, 100.0])
def test_rician_unit_power(gamma):
    rng = np.random.default_rng(1)
    los = np.exp(1j * rng.uniform(0, 2 * np.pi, (4, 8)))
    draws = np.stack([rician(los, gamma, rng) for _ in range(5000)])
    assert np.mean(np.abs(draws) ** 2) == pytest.approx(1.0, rel=0.03)


def test_los_unit_modulus_rank_one():
    los = los_component(np.array([50, 0, 1.5]), np.array([40, 25, 5]), 3, 6)
    assert np.allclose(np.abs(los), 1.0)
    assert np.linalg.matrix_rank(los) == 1


def test_direct_link_second_moment():
    cfg = ScenarioConfig(M=3)
    rng = np.random.default_rng(2)
    tx, rx = node_positions(cfg)
    r = np.linalg.norm(rx[0] - tx[1])
    target = 10 ** (path_loss_db(r, 3.75) / 10)
    samples = np.array([draw_channels(cfg, rng).h_direct[1, 0] for _ in range(1200)])
    # 1200 draws x 9 entries > 1e4 samples
    assert np.mean(np.abs(samples) ** 2) == pytest.approx(target, rel=0.05)


def test_determinism_and_shapes():
    cfg = ScenarioConfig(K=3, M=12)
    a = draw_channels(cfg, np.random.default_rng(9))
    b = draw_channels(cfg, np.random.default_rng(9))
    for x, y in ((a.h_direct, b.h_direct), (a.f_ris, b.f_ris), (a.g_ris, b.g_ris)):
        assert np.array_equal(x, y)
        assert np.all(np.isfinite(x))
    assert a.h_direct.shape == (3, 3, 3, 3)
    assert a.f_ris.shape == (3, 3, 12) and a.g_ris.shape == (3, 3, 12)
    assert a.noise_power == pytest.approx(10 ** (-87.97940008672037 / 10))


@pytest.mark.parametrize("changes", [
    dict(d=4),
    dict(M=2),
    dict(architecture="group", Mg=3, M=40),
    dict(architecture="group", Mg=None),
    dict(architecture="bogus"),
    dict(trials=0),
])
def test_config_validation(changes):
    with pytest.raises(ConfigError):
        ScenarioConfig(**changes)


def test_config_accepts_diagonal_small_m():
    assert ScenarioConfig(architecture="diagonal", M=2).M == 2

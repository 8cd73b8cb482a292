"""Simulation geometry, path loss and fading for the K-user interference channel."""

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Tuple

import numpy as np

from .linalg import SeedLike, as_generator, complex_gaussian

ARCHITECTURES = ("fully", "group", "diagonal")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry, radio parameters and Monte-Carlo settings of one scenario.

    Powers are in dBm, the noise figure in dB, distances in meters.
    """

    K: int = 3
    Nt: int = 3
    Nr: int = 3
    d: int = 2
    M: int = 40
    architecture: str = "fully"
    Mg: Optional[int] = None
    ris_position: Tuple[float, float, float] = (40.0, 25.0, 5.0)
    square_side: float = 50.0
    node_height: float = 1.5
    pt_dbm: float = 10.0
    bandwidth_hz: float = 40e6
    noise_figure_db: float = 10.0
    alpha_direct: float = 3.75
    alpha_ris: float = 2.0
    rician_gamma: float = 3.0
    trials: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ris_position", tuple(float(c) for c in self.ris_position))
        self.validate()

    def validate(self):
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if min(self.Nt, self.Nr, self.d, self.M) < 1:
            raise ConfigError("Nt, Nr, d and M must be positive")
        if self.d > min(self.Nt, self.Nr):
            raise ConfigError(f"d={self.d} exceeds min(Nt, Nr)={min(self.Nt, self.Nr)}")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.architecture != "diagonal" and self.M < max(self.Nt, self.Nr):
            raise ConfigError("BD-RIS needs M >= max(Nt, Nr)")
        if self.architecture == "group":
            if not self.Mg or self.M % self.Mg:
                raise ConfigError(f"group size Mg={self.Mg} must divide M={self.M}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if len(self.ris_position) != 3:
            raise ConfigError("ris_position needs three coordinates")
        if self.bandwidth_hz <= 0:
            raise ConfigError("bandwidth_hz must be positive")

    @property
    def pt_mw(self) -> float:
        return dbm_to_mw(self.pt_dbm)

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(noise_power_dbm(self.bandwidth_hz, self.noise_figure_db))

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class ChannelSet:
    """Channels of one draw.

    ``h_direct[l, k]`` is the Nr x Nt link from transmitter l to receiver k,
    ``f_ris[k]`` the Nr x M link RIS -> receiver k and ``g_ris[l]`` the
    Nt x M link transmitter l -> RIS (entering as ``G_l^H``).
    """

    h_direct: np.ndarray
    f_ris: np.ndarray
    g_ris: np.ndarray
    noise_power: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h_direct = np.asarray(self.h_direct, dtype=complex)
        self.f_ris = np.asarray(self.f_ris, dtype=complex)
        self.g_ris = np.asarray(self.g_ris, dtype=complex)
        K = self.h_direct.shape[0]
        if self.h_direct.ndim != 4 or self.h_direct.shape[1] != K:
            raise ValueError(f"h_direct must be (K, K, Nr, Nt), got {self.h_direct.shape}")
        nr, nt = self.h_direct.shape[2:]
        if self.f_ris.shape[:2] != (K, nr) or self.g_ris.shape[:2] != (K, nt):
            raise ValueError("f_ris / g_ris shapes do not match h_direct")
        if self.f_ris.shape[2] != self.g_ris.shape[2]:
            raise ValueError("f_ris and g_ris disagree on the number of RIS elements")

    @property
    def K(self) -> int:
        return self.h_direct.shape[0]

    @property
    def Nr(self) -> int:
        return self.h_direct.shape[2]

    @property
    def Nt(self) -> int:
        return self.h_direct.shape[3]

    @property
    def M(self) -> int:
        return self.f_ris.shape[2]

    def scaled(self, factor: float) -> "ChannelSet":
        """All links multiplied by ``factor`` (noise scaled by ``factor**2``)."""
        return ChannelSet(self.h_direct * factor, self.f_ris * np.sqrt(factor),
                          self.g_ris * np.sqrt(factor), self.noise_power * factor ** 2, dict(self.meta))

    def subset(self, cols: slice) -> "ChannelSet":
        return ChannelSet(self.h_direct, self.f_ris[:, :, cols], self.g_ris[:, :, cols],
                          self.noise_power, dict(self.meta))


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def node_positions(config: ScenarioConfig):
    """Transmitter and receiver coordinates, each a (K, 3) array."""
    K = config.K
    if K < 2:
        raise ConfigError("node placement needs K >= 2")
    side = config.square_side
    y = side * np.arange(K) / (K - 1)
    tx = np.column_stack([np.zeros(K), y, np.full(K, config.node_height)])
    rx = np.column_stack([np.full(K, side), y, np.full(K, config.node_height)])
    return tx, rx


def path_loss_db(r_m, alpha: float):
    """Large-scale path loss ``-28 - 10 alpha log10(r)`` in dB."""
    r = np.asarray(r_m, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    out = -28.0 - 10.0 * alpha * np.log10(r)
    return float(out) if out.ndim == 0 else out


def noise_power_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return -174.0 + 10.0 * np.log10(bandwidth_hz) + noise_figure_db


def steering_vector(n: int, azimuth: float) -> np.ndarray:
    """Half-wavelength ULA along the y axis; unit-modulus entries."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(azimuth))


def los_component(p_node, p_ris, n_node: int, m: int) -> np.ndarray:
    """Rank-one LoS matrix ``a_node a_ris^H`` (n_node x m) between a node and the RIS."""
    dx, dy = p_ris[0] - p_node[0], p_ris[1] - p_node[1]
    a_node = steering_vector(n_node, np.arctan2(dy, dx))
    a_ris = steering_vector(m, np.arctan2(-dy, -dx))
    return np.outer(a_node, a_ris.conj())


def rician(los: np.ndarray, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-power Rician mix of a deterministic LoS part and Rayleigh scatter."""
    scatter = complex_gaussian(los.shape, rng)
    if np.isinf(gamma):
        return los.astype(complex)
    return np.sqrt(gamma / (1 + gamma)) * los + np.sqrt(1 / (1 + gamma)) * scatter


def draw_channels(config: ScenarioConfig, rng: SeedLike = None) -> ChannelSet:
    rng = as_generator(rng)
    K, nt, nr, m = config.K, config.Nt, config.Nr, config.M
    tx, rx = node_positions(config)
    ris = np.asarray(config.ris_position)

    h = np.empty((K, K, nr, nt), dtype=complex)
    for l in range(K):
        for k in range(K):
            r = np.linalg.norm(rx[k] - tx[l])
            gain = 10 ** (path_loss_db(r, config.alpha_direct) / 20)
            h[l, k] = gain * complex_gaussian((nr, nt), rng)

    f = np.empty((K, nr, m), dtype=complex)
    g = np.empty((K, nt, m), dtype=complex)
    for k in range(K):
        gain = 10 ** (path_loss_db(np.linalg.norm(rx[k] - ris), config.alpha_ris) / 20)
        f[k] = gain * rician(los_component(rx[k], ris, nr, m), config.rician_gamma, rng)
    for l in range(K):
        gain = 10 ** (path_loss_db(np.linalg.norm(tx[l] - ris), config.alpha_ris) / 20)
        g[l] = gain * rician(los_component(tx[l], ris, nt, m), config.rician_gamma, rng)

    return ChannelSet(h, f, g, config.noise_mw)

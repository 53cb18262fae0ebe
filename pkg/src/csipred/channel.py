"""Geometry-based stochastic channel simulator for MIMO-OFDM uplinks.

Time-varying channels are synthesised from randomly drawn clusters of rays:
each ray carries a complex gain, a delay, arrival/departure angles and a
Doppler shift induced by the UE velocity. A realization holds one fixed ray
set and varies over time only through the Doppler phase terms, which is a
good approximation over the few tens of milliseconds a prediction window
spans.

Coordinate conventions: zenith angle theta measured from +z, azimuth phi from
+x in the horizontal plane. Antenna arrays are uniform linear arrays with
half-wavelength spacing along a fixed axis.
"""

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 3e8  # m/s

DEFAULT_CARRIER_HZ = 2.4e9

#: SNR value meaning "do not add observation noise".
NOISELESS = np.inf


@dataclass(frozen=True)
class ScenarioPreset:
    """Cluster/ray statistics for one deployment scenario.

    Angular spreads are per-ray standard deviations in degrees, keyed by
    angle type ("aoa", "aod", "zoa", "zod").
    """

    name: str
    num_clusters: int
    rays_per_cluster: int
    delay_spread_s: float
    per_cluster_power_decay: float
    angular_spread_deg: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.num_clusters < 1 or self.rays_per_cluster < 1:
            raise ValueError("need at least one cluster and one ray per cluster")
        if self.delay_spread_s <= 0:
            raise ValueError("delay spread must be positive")
        missing = {"aoa", "aod", "zoa", "zod"} - set(self.angular_spread_deg)
        if missing:
            raise ValueError("missing angular spreads: %s" % sorted(missing))


# Approximate NLOS statistics: urban-macro has the larger delay spread and a
# tighter zenith spread than urban-micro.
UMA_NLOS = ScenarioPreset(
    name="UMa-NLOS",
    num_clusters=20,
    rays_per_cluster=20,
    delay_spread_s=363e-9,
    per_cluster_power_decay=2.3,
    angular_spread_deg={"aoa": 22.0, "aod": 10.0, "zoa": 7.0, "zod": 3.0},
)

UMI_NLOS = ScenarioPreset(
    name="UMi-NLOS",
    num_clusters=19,
    rays_per_cluster=20,
    delay_spread_s=130e-9,
    per_cluster_power_decay=2.0,
    angular_spread_deg={"aoa": 26.0, "aod": 17.0, "zoa": 10.0, "zod": 4.0},
)

PRESETS = {p.name: p for p in (UMA_NLOS, UMI_NLOS)}


@dataclass(frozen=True)
class SystemConfig:
    """MIMO-OFDM sampling grid and prediction window sizes."""

    n_bs: int = 4
    n_ue: int = 4
    subcarriers: int = 12
    subcarrier_spacing_hz: float = 120e3
    carrier_hz: float = DEFAULT_CARRIER_HZ
    sample_period_s: float = 0.625e-3
    history_len: int = 24
    pred_len: int = 6

    def __post_init__(self):
        for name in ("n_bs", "n_ue", "subcarriers", "history_len", "pred_len"):
            if getattr(self, name) < 1:
                raise ValueError("%s must be positive" % name)
        for name in ("subcarrier_spacing_hz", "carrier_hz", "sample_period_s"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)

    @property
    def window_len(self):
        return self.history_len + self.pred_len

    @property
    def num_features(self):
        """Length of the real-valued CSI vector per time step."""
        return 2 * self.n_bs * self.n_ue

    def subcarrier_freqs(self):
        k = np.arange(self.subcarriers)
        return self.carrier_hz + (k - self.subcarriers / 2) * self.subcarrier_spacing_hz


@dataclass
class RaySet:
    """Flat per-ray parameters for one drawn propagation environment."""

    gains: np.ndarray       # complex [R]
    delays_s: np.ndarray    # [R]
    doppler_hz: np.ndarray  # [R]
    zoa: np.ndarray         # [R], radians
    aoa: np.ndarray         # [R]
    zod: np.ndarray         # [R]
    aod: np.ndarray         # [R]
    velocity_mps: np.ndarray  # [3]

    def __len__(self):
        return self.gains.shape[0]


@dataclass
class ChannelRealization:
    """One clean CSI window: tensor [T, K, N_BS, N_UE] plus metadata."""

    csi: np.ndarray
    velocity_kmh: float
    scenario: str
    seed: int


@dataclass
class PilotBlock:
    """Uplink pilot transmission X_p and its received block Y_p."""

    x_p: np.ndarray  # [N_UE, T_p]
    y_p: np.ndarray  # [N_BS, T_p]
    noise_var: float = 0.0

    def __post_init__(self):
        if self.x_p.shape[1] < self.x_p.shape[0]:
            raise ValueError(
                "pilot length %d shorter than %d UE antennas: estimation ill-posed"
                % (self.x_p.shape[1], self.x_p.shape[0])
            )


def arrival_direction(zoa, aoa):
    """Unit propagation vector(s) for zenith/azimuth arrival angles."""
    zoa = np.asarray(zoa, dtype=float)
    aoa = np.asarray(aoa, dtype=float)
    return np.stack(
        [np.sin(zoa) * np.cos(aoa), np.sin(zoa) * np.sin(aoa), np.cos(zoa)], axis=-1
    )


def doppler_shift(velocity_mps, zoa, aoa, carrier_hz):
    """Per-ray Doppler: projection of the UE velocity on the arrival direction."""
    direction = arrival_direction(zoa, aoa)
    return carrier_hz / SPEED_OF_LIGHT * (direction @ np.asarray(velocity_mps, dtype=float))


def _wrap_angle(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def sample_ray_set(preset, velocity_kmh, rng, carrier_hz=DEFAULT_CARRIER_HZ):
    """Draw one cluster/ray environment from a scenario preset.

    Cluster delays follow an exponential profile scaled by the preset delay
    spread, cluster powers decay exponentially with delay and are normalized
    to unit total mean power, angles are wrapped Gaussians around per-cluster
    centers, and ray gains are complex Gaussian so per-draw total power
    fluctuates around 1. The UE moves horizontally in a random direction at
    the given speed.
    """
    if velocity_kmh < 0:
        raise ValueError("velocity must be non-negative, got %r" % velocity_kmh)

    n, m = preset.num_clusters, preset.rays_per_cluster
    total = n * m

    delays_c = rng.exponential(scale=preset.delay_spread_s, size=n)
    powers_c = np.exp(-preset.per_cluster_power_decay * delays_c / preset.delay_spread_s)
    powers_c /= powers_c.sum()

    delays = np.repeat(delays_c, m)
    ray_power = np.repeat(powers_c / m, m)
    gains = np.sqrt(ray_power / 2) * (
        rng.standard_normal(total) + 1j * rng.standard_normal(total)
    )

    spreads = {k: np.deg2rad(v) for k, v in preset.angular_spread_deg.items()}

    def draw(kind, centers):
        per_ray = np.repeat(centers, m) + rng.normal(0.0, spreads[kind], size=total)
        return _wrap_angle(per_ray)

    aoa = draw("aoa", rng.uniform(-np.pi, np.pi, size=n))
    aod = draw("aod", rng.uniform(-np.pi, np.pi, size=n))
    zoa = draw("zoa", rng.normal(np.pi / 2, spreads["zoa"], size=n))
    zod = draw("zod", rng.normal(np.pi / 2, spreads["zod"], size=n))

    speed = velocity_kmh / 3.6
    heading = rng.uniform(0.0, 2 * np.pi)
    velocity = speed * np.array([np.cos(heading), np.sin(heading), 0.0])

    return RaySet(
        gains=gains,
        delays_s=delays,
        doppler_hz=doppler_shift(velocity, zoa, aoa, carrier_hz),
        zoa=zoa,
        aoa=aoa,
        zod=zod,
        aod=aod,
        velocity_mps=velocity,
    )


def array_response(theta, phi, num_antennas):
    """Uniform-linear-array response, half-wavelength spacing.

    Element m has phase pi * m * sin(theta) * cos(phi); entries are unit
    modulus. Angle inputs broadcast, producing [..., num_antennas].
    """
    if num_antennas < 1:
        raise ValueError("need at least one antenna")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    m = np.arange(num_antennas)
    phase = np.pi * np.sin(theta)[..., None] * np.cos(phi)[..., None] * m
    return np.exp(1j * phase)


def evaluate_channel(rays, t, f, sys):
    """Channel matrix [N_BS, N_UE] at time t (s) and absolute frequency f (Hz).

    Sum over rays of gain * exp(-j2pi f tau) * exp(+j2pi nu t) times the
    outer product of the BS arrival response and the conjugated UE departure
    response.
    """
    coeff = (
        rays.gains
        * np.exp(-2j * np.pi * f * rays.delays_s)
        * np.exp(2j * np.pi * rays.doppler_hz * t)
    )
    a_bs = array_response(rays.zoa, rays.aoa, sys.n_bs)
    a_ue = array_response(rays.zod, rays.aod, sys.n_ue)
    return np.einsum("r,rb,ru->bu", coeff, a_bs, a_ue.conj())


def generate_realization(sys, preset, velocity_kmh, rng, seed=-1):
    """Sample one CSI window [L+P, K, N_BS, N_UE] with a fixed ray set.

    Time variation comes solely from the per-ray Doppler phases; at zero
    velocity the window is constant along the time axis.
    """
    rays = sample_ray_set(preset, velocity_kmh, rng, carrier_hz=sys.carrier_hz)
    t = np.arange(sys.window_len) * sys.sample_period_s
    f = sys.subcarrier_freqs()

    freq_phase = np.exp(-2j * np.pi * np.outer(f, rays.delays_s))      # [K, R]
    time_phase = np.exp(2j * np.pi * np.outer(t, rays.doppler_hz))     # [T, R]
    a_bs = array_response(rays.zoa, rays.aoa, sys.n_bs)                # [R, N_BS]
    a_ue = array_response(rays.zod, rays.aod, sys.n_ue)                # [R, N_UE]

    coeff = rays.gains[None, None, :] * freq_phase[None, :, :] * time_phase[:, None, :]
    csi = np.einsum("tkr,rb,ru->tkbu", coeff, a_bs, a_ue.conj())
    return ChannelRealization(
        csi=csi, velocity_kmh=float(velocity_kmh), scenario=preset.name, seed=seed
    )


def apply_reciprocity(h_ul):
    """Downlink CSI from uplink CSI: plain transpose of the last two axes."""
    return np.swapaxes(np.asarray(h_ul), -1, -2)


def add_observation_noise(h, snr_db, rng):
    """Add circularly-symmetric complex Gaussian noise at the given SNR.

    Noise power is mean(|h|^2) / 10^(snr_db/10) over the whole tensor;
    snr_db=inf returns the input unchanged (as a copy).
    """
    h = np.asarray(h)
    if np.isposinf(snr_db):
        return h.copy()
    signal_power = np.mean(np.abs(h) ** 2)
    noise_power = signal_power / 10 ** (snr_db / 10)
    scale = np.sqrt(noise_power / 2)
    noise = scale * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
    return h + noise


def ls_estimate(pilots):
    """Least-squares channel estimate Y_p X_p^H (X_p X_p^H)^{-1}."""
    x, y = pilots.x_p, pilots.y_p
    gram = x @ x.conj().T
    if np.linalg.matrix_rank(x) < x.shape[0]:
        raise np.linalg.LinAlgError("pilot matrix is rank deficient: estimation ill-posed")
    return np.linalg.solve(gram.T, (y @ x.conj().T).T).T

"""Ray-traced MIMO-OFDM channel generation and noisy pilot observations."""

# %% Imports
import logging
from typing import TypedDict

import numpy as np

from isac.config import (
    DYNAMIC_RANGE_BOUNDS_M,
    DYNAMIC_VELOCITY_BOUNDS_MPS,
    RNG_STREAMS,
    SPEED_OF_LIGHT,
    STATIC_LOS_AOA_DEG,
    STATIC_LOS_RANGE_M,
    STATIC_NLOS_AOA_DEG,
    STATIC_NLOS_RANGES_M,
    SystemConfig,
    default_system_config,
    packet_interval,
    wavelength,
)
from isac.numerics import ComplexMatrix, dft_matrix

logger = logging.getLogger(__name__)


class PathParams(TypedDict):
    """One propagation path. Delay and Doppler are two-hop aggregates for NLoS."""

    aoa_deg: float
    delay_s: float
    doppler_hz: float
    attenuation: complex
    range_m: float


class ScattererHops(TypedDict):
    """Distances and radial velocities of the two hops of a scatterer path."""

    ranges_m: tuple[float, float]
    velocities_mps: tuple[float, float]


STATIC_HOPS = ScattererHops(ranges_m=STATIC_NLOS_RANGES_M, velocities_mps=(0.0, 0.0))


class ChannelScene(TypedDict):
    """Ground-truth paths of one packet, path 0 is the LoS path."""

    kind: str
    paths: list[PathParams]
    num_paths: int


# %%
def keyed_rng(seed: int, stream: str, packet: int = 0) -> np.random.Generator:
    """Independent random stream keyed by (seed, purpose, packet).

    Streams for different keys never overlap, so packets can be generated in
    any order and still reproduce bit for bit.

    >>> a = keyed_rng(7, "noise", 3).normal(size=3)
    >>> b = keyed_rng(7, "noise", 3).normal(size=3)
    >>> bool((a == b).all())
    True
    >>> bool((a == keyed_rng(7, "noise", 4).normal(size=3)).any())
    False
    >>> keyed_rng(7, "weather")
    Traceback (most recent call last):
        ...
    KeyError: "Unknown random stream: 'weather'"

    """
    if stream not in RNG_STREAMS:
        raise KeyError(f"Unknown random stream: '{stream}'")
    key = (RNG_STREAMS[stream], packet)
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.default_rng(sequence)


def complex_noise(
    rng: np.random.Generator, shape: tuple[int, ...], variance: float
) -> np.ndarray:
    """Circular complex Gaussian samples CN(0, variance).

    >>> z = complex_noise(np.random.default_rng(0), (20_000,), 2.0)
    >>> bool(abs(np.mean(np.abs(z) ** 2) - 2.0) < 0.1)
    True
    >>> bool(complex_noise(np.random.default_rng(0), (4,), 0.0).any())
    False

    """
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# %%
def steering_vector(aoa_deg: float, p: int, d_a: float, lam: float) -> np.ndarray:
    """ULA steering vector, element p' = exp(j·2π/λ·p'·d_a·sin θ).

    Args:
        aoa_deg: Angle of arrival in degrees, strictly inside (-90, 90)
        p: Number of antennas
        d_a: Antenna spacing in metres
        lam: Carrier wavelength in metres

    Returns:
        Complex vector of length p

    Raises:
        ValueError: If the angle is outside (-90, 90)

    >>> np.allclose(steering_vector(0.0, 4, 0.5, 1.0), np.ones(4))
    True
    >>> a = steering_vector(30.0, 8, 0.5, 1.0)
    >>> np.allclose(np.angle(a[1] / a[0]), np.pi / 2)
    True
    >>> np.allclose(steering_vector(-30.0, 8, 0.5, 1.0), a.conj())
    True
    >>> steering_vector(90.0, 8, 0.5, 1.0)
    Traceback (most recent call last):
        ...
    ValueError: AoA must lie strictly inside (-90, 90) degrees, got 90.0

    """
    if not -90.0 < aoa_deg < 90.0:  # noqa: PLR2004 # physical half-plane
        raise ValueError(f"AoA must lie strictly inside (-90, 90) degrees, got {aoa_deg}")
    phase = 2 * np.pi / lam * d_a * np.sin(np.radians(aoa_deg))
    return np.exp(1j * phase * np.arange(p))


def steering_matrix(aoa_deg: np.ndarray, cfg: SystemConfig) -> ComplexMatrix:
    """Stack steering vectors for several angles as columns, shape P × len(aoa_deg).

    >>> cfg = default_system_config()
    >>> steering_matrix(np.array([30.0, 59.5]), cfg).shape
    (8, 2)

    """
    lam = wavelength(cfg)
    return np.column_stack(
        [
            steering_vector(
                float(theta), cfg["num_antennas"], cfg["antenna_spacing_m"], lam
            )
            for theta in np.atleast_1d(aoa_deg)
        ]
    )


# %%
def los_path(
    aoa_deg: float, range_m: float, velocity_mps: float, cfg: SystemConfig
) -> PathParams:
    """LoS path with free-space attenuation λ/(4π·r).

    >>> cfg = default_system_config()
    >>> path = los_path(30.0, STATIC_LOS_RANGE_M, 0.0, cfg)
    >>> bool(np.isclose(path["delay_s"], 91.26 / SPEED_OF_LIGHT))
    True
    >>> los_path(30.0, 0.0, 0.0, cfg)
    Traceback (most recent call last):
        ...
    ValueError: Path distances must be positive, got (0.0,)

    """
    _check_distances((range_m,))
    lam = wavelength(cfg)
    return PathParams(
        aoa_deg=aoa_deg,
        delay_s=range_m / SPEED_OF_LIGHT,
        doppler_hz=velocity_mps / lam,
        attenuation=complex(lam / (4 * np.pi * range_m)),
        range_m=range_m,
    )


def nlos_path(
    aoa_deg: float, hops: ScattererHops, beta: complex, cfg: SystemConfig
) -> PathParams:
    """Scatterer path; delay, Doppler and range are sums over both hops.

    Attenuation is λ/((4π)^{3/2}·r₁·r₂)·β with β the reflecting factor.

    >>> cfg = default_system_config()
    >>> path = nlos_path(59.5, STATIC_HOPS, 1.0, cfg)
    >>> bool(np.isclose(path["delay_s"], (28.7 + 71.6) / SPEED_OF_LIGHT))
    True
    >>> los = los_path(30.0, STATIC_LOS_RANGE_M, 0.0, cfg)
    >>> ratio_db = 20 * np.log10(abs(path["attenuation"]) / abs(los["attenuation"]))
    >>> round(float(ratio_db))
    -38

    """
    ranges_m = hops["ranges_m"]
    _check_distances(ranges_m)
    lam = wavelength(cfg)
    magnitude = lam / ((4 * np.pi) ** 1.5 * ranges_m[0] * ranges_m[1])
    total_range = float(sum(ranges_m))
    return PathParams(
        aoa_deg=aoa_deg,
        delay_s=total_range / SPEED_OF_LIGHT,
        doppler_hz=float(sum(hops["velocities_mps"])) / lam,
        attenuation=complex(magnitude * beta),
        range_m=total_range,
    )


def _check_distances(ranges_m: tuple[float, ...]) -> None:
    if any(r <= 0 for r in ranges_m):
        raise ValueError(f"Path distances must be positive, got {tuple(ranges_m)}")


def draw_reflection(rng: np.random.Generator) -> complex:
    """Reflecting factor β ~ CN(0, 1)."""
    return complex(complex_noise(rng, (1,), 1.0)[0])


# %%
def make_static_scene(
    cfg: SystemConfig | None = None, rng: np.random.Generator | None = None
) -> ChannelScene:
    """Two-path scene with fixed geometry and zero velocities.

    The reflecting factor is drawn from ``rng``; without one it is 1.

    >>> scene = make_static_scene()
    >>> scene["num_paths"], [p["aoa_deg"] for p in scene["paths"]]
    (2, [30.0, 59.5])
    >>> bool(np.isclose(scene["paths"][0]["delay_s"], 91.26 / SPEED_OF_LIGHT))
    True
    >>> bool(np.isclose(scene["paths"][1]["delay_s"], 100.3 / SPEED_OF_LIGHT))
    True
    >>> [p["doppler_hz"] for p in scene["paths"]]
    [0.0, 0.0]

    """
    cfg = cfg or default_system_config()
    beta = draw_reflection(rng) if rng is not None else 1.0 + 0j
    paths = [
        los_path(STATIC_LOS_AOA_DEG, STATIC_LOS_RANGE_M, 0.0, cfg),
        nlos_path(STATIC_NLOS_AOA_DEG, STATIC_HOPS, beta, cfg),
    ]
    return ChannelScene(kind="static", paths=paths, num_paths=len(paths))


def make_dynamic_scene(
    rng: np.random.Generator,
    cfg: SystemConfig | None = None,
    beta: complex | None = None,
) -> ChannelScene:
    """Scene with the UE range and radial velocity drawn for one packet.

    The LoS range is uniform on [5, 150] m and the velocity uniform on
    [-10, 10] m/s. The scatterer geometry stays fixed and its reflecting factor
    ``beta`` is shared across packets when given.

    >>> first = make_dynamic_scene(np.random.default_rng(3), beta=1.0)
    >>> again = make_dynamic_scene(np.random.default_rng(3), beta=1.0)
    >>> first == again
    True
    >>> los = first["paths"][0]
    >>> bool(5.0 <= los["range_m"] <= 150.0), bool(abs(los["doppler_hz"]) <= 10 / 0.0107)
    (True, True)

    # LoS ranges are uniform on [5, 150] m
    >>> from scipy import stats
    >>> rng = np.random.default_rng(11)
    >>> ranges = [
    ...     make_dynamic_scene(rng, beta=1.0)["paths"][0]["range_m"] for _ in range(2000)
    ... ]
    >>> uniform = stats.uniform(loc=5.0, scale=145.0)
    >>> bool(stats.kstest(ranges, uniform.cdf).pvalue > 1e-3)
    True

    """
    cfg = cfg or default_system_config()
    range_m = float(rng.uniform(*DYNAMIC_RANGE_BOUNDS_M))
    velocity = float(rng.uniform(*DYNAMIC_VELOCITY_BOUNDS_MPS))
    if beta is None:
        beta = draw_reflection(rng)
    paths = [
        los_path(STATIC_LOS_AOA_DEG, range_m, velocity, cfg),
        nlos_path(STATIC_NLOS_AOA_DEG, STATIC_HOPS, beta, cfg),
    ]
    return ChannelScene(kind="dynamic", paths=paths, num_paths=len(paths))


def single_path_scene(
    aoa_deg: float, range_m: float, cfg: SystemConfig, attenuation: complex = 1.0
) -> ChannelScene:
    """One-path scene with an explicit attenuation, used for calibration sweeps."""
    path = los_path(aoa_deg, range_m, 0.0, cfg)
    path["attenuation"] = complex(attenuation)
    return ChannelScene(kind="single", paths=[path], num_paths=1)


# %%
def true_csi(
    scene: ChannelScene, cfg: SystemConfig, packet_index: int = 0
) -> ComplexMatrix:
    """Channel frequency response of one packet, shape P × N_c.

    Entry (p, n) is Σ_l α_l·exp(-j2π·n·Δf·τ_l)·a_p(θ_l) with
    α_l = b_l·exp(j2π·m·T_s^p·f_d,l).

    >>> cfg = default_system_config(num_subcarriers=16)
    >>> flat = single_path_scene(0.0, 1.0, cfg)
    >>> flat["paths"][0]["delay_s"] = 0.0
    >>> np.allclose(true_csi(flat, cfg), np.ones((8, 16)))
    True
    >>> scene = make_static_scene(cfg)
    >>> np.array_equal(true_csi(scene, cfg, 0), true_csi(scene, cfg, 5))
    True

    # Two paths give a rank-2 autocorrelation
    >>> h = true_csi(make_static_scene(default_system_config()), default_system_config())
    >>> s = np.linalg.svd(h, compute_uv=False)
    >>> int((s > 1e-9 * s[0]).sum())
    2

    # Entry-by-entry evaluation of a moving scene
    >>> moving = make_dynamic_scene(np.random.default_rng(1), cfg, beta=0.5j)
    >>> h = true_csi(moving, cfg, 3)
    >>> lam, t_p = wavelength(cfg), packet_interval(cfg)
    >>> d_a, df = cfg["antenna_spacing_m"], cfg["subcarrier_spacing_hz"]
    >>> oracle = np.zeros((8, 16), dtype=complex)
    >>> for p in range(8):
    ...     for n in range(16):
    ...         for path in moving["paths"]:
    ...             sin = np.sin(np.radians(path["aoa_deg"]))
    ...             alpha = path["attenuation"] * np.exp(
    ...                 2j * np.pi * 3 * t_p * path["doppler_hz"])
    ...             delay = np.exp(-2j * np.pi * n * df * path["delay_s"])
    ...             steer = np.exp(2j * np.pi / lam * p * d_a * sin)
    ...             oracle[p, n] += alpha * delay * steer
    >>> bool(np.abs(h - oracle).max() <= 1e-12 * np.abs(oracle).max())
    True

    """
    aoa = np.array([path["aoa_deg"] for path in scene["paths"]])
    delays = np.array([path["delay_s"] for path in scene["paths"]])
    dopplers = np.array([path["doppler_hz"] for path in scene["paths"]])
    gains = np.array([path["attenuation"] for path in scene["paths"]], dtype=complex)

    alpha = gains * np.exp(2j * np.pi * packet_index * packet_interval(cfg) * dopplers)
    subcarriers = np.arange(cfg["num_subcarriers"])
    delay_phase = np.exp(
        -2j * np.pi * cfg["subcarrier_spacing_hz"] * np.outer(subcarriers, delays)
    )
    return (steering_matrix(aoa, cfg) * alpha) @ delay_phase.T


# %%
def codebook(codebook_length: int) -> ComplexMatrix:
    """Orthogonal pilot codebook, rows of the U × U DFT matrix (S·S^H = U·I).

    >>> s = codebook(14)
    >>> np.allclose(s @ s.conj().T, 14 * np.eye(14))
    True

    """
    return dft_matrix(codebook_length)


def codeword(subcarrier: int, codebook_length: int) -> np.ndarray:
    """Pilot sequence for one subcarrier, row ``n mod U`` of the codebook."""
    return codebook(codebook_length)[subcarrier % codebook_length]


def receive_observation(
    h: np.ndarray,
    cfg: SystemConfig,
    codebook_length: int,
    rng: np.random.Generator,
    subcarrier: int = 0,
) -> ComplexMatrix:
    """Noisy pilot block Y = √P_t·h·s^H + Z for one subcarrier, shape P × U.

    >>> cfg = default_system_config(noise_variance_w=0.0, transmit_power_w=4.0)
    >>> h = np.arange(8) + 1j
    >>> y = receive_observation(h, cfg, 14, np.random.default_rng(0))
    >>> s = codeword(0, 14)
    >>> np.allclose(y @ s / (2.0 * 14), h)
    True

    """
    s = codeword(subcarrier, codebook_length)
    clean = np.sqrt(cfg["transmit_power_w"]) * np.outer(h, s.conj())
    return clean + complex_noise(rng, clean.shape, cfg["noise_variance_w"])


def observe_packet(
    h: ComplexMatrix, cfg: SystemConfig, rng: np.random.Generator
) -> np.ndarray:
    """Pilot blocks of every subcarrier of one packet, shape N_c × P × U.

    Noise is drawn subcarrier by subcarrier from ``rng``.

    >>> cfg = default_system_config(num_subcarriers=4, noise_variance_w=0.0)
    >>> h = true_csi(make_static_scene(cfg), cfg)
    >>> observe_packet(h, cfg, np.random.default_rng(0)).shape
    (4, 8, 14)

    """
    u = cfg["codebook_length"]
    pilots = codebook(u)[np.arange(h.shape[1]) % u]
    clean = np.sqrt(cfg["transmit_power_w"]) * h.T[:, :, None] * pilots.conj()[:, None, :]
    return clean + complex_noise(rng, clean.shape, cfg["noise_variance_w"])


# %%
def path_gain(scene: ChannelScene) -> float:
    """Total path power Σ_l |b_l|²."""
    return float(sum(abs(path["attenuation"]) ** 2 for path in scene["paths"]))


def snr_to_power(gamma_db: float, scene: ChannelScene, cfg: SystemConfig) -> float:
    """Transmit power giving per-antenna SNR γ: P_t = γ·σ²/Σ|b_l|².

    >>> cfg = default_system_config(noise_variance_w=0.25)
    >>> scene = single_path_scene(0.0, 1.0, cfg, attenuation=0.5)
    >>> snr_to_power(0.0, scene, cfg)
    1.0
    >>> round(snr_to_power(10 * np.log10(2), scene, cfg), 12)
    2.0

    # Static scene LoS path at 10 dB
    >>> cfg = default_system_config()
    >>> los_only = make_static_scene(cfg)
    >>> los_only["paths"] = los_only["paths"][:1]
    >>> bool(abs(snr_to_power(10.0, los_only, cfg) - 0.5642) < 1e-3)
    True

    # Error case: no path gain
    >>> snr_to_power(0.0, single_path_scene(0.0, 1.0, cfg, attenuation=0.0), cfg)
    Traceback (most recent call last):
        ...
    ValueError: Scene has zero total path gain

    """
    gain = path_gain(scene)
    if gain <= 0:
        raise ValueError("Scene has zero total path gain")
    return float(10 ** (gamma_db / 10) * cfg["noise_variance_w"] / gain)


def link_config(system: SystemConfig, snr_db: float, scene: ChannelScene) -> SystemConfig:
    """System configuration with the transmit power that gives ``snr_db``.

    A noiseless system has no SNR to set, so it keeps its configured power.

    >>> quiet = default_system_config(noise_variance_w=0.0, transmit_power_w=2.0)
    >>> scene = single_path_scene(30.0, 50.0, quiet)
    >>> link_config(quiet, 10.0, scene)["transmit_power_w"]
    2.0
    >>> noisy = default_system_config(noise_variance_w=0.25)
    >>> scene = single_path_scene(0.0, 1.0, noisy, attenuation=0.5)
    >>> link_config(noisy, 0.0, scene)["transmit_power_w"]
    1.0

    """
    if system["noise_variance_w"] <= 0:
        return SystemConfig(**system)
    power = snr_to_power(snr_db, scene, system)
    return SystemConfig(**{**system, "transmit_power_w": power})

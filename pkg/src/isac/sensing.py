"""AoA and range sensing from (enhanced) CSI.

AoAs come from the MUSIC spectrum of the antenna autocorrelation, refined by
damped Newton steps. Each path is isolated with a zero-forcing receive
beamformer and its range read from the delay spectrum, optionally averaged over
known range offsets to beat the grid resolution.
"""

# %% Imports
import logging
from collections.abc import Callable
from typing import TypedDict

import numpy as np
from scipy import signal

from isac.channel import steering_matrix
from isac.config import (
    AOA_GRID_STEP_DEG,
    NEWTON_MAX_ITERATIONS,
    NEWTON_STEP_DEG,
    NEWTON_TOLERANCE_DEG,
    SPEED_OF_LIGHT,
    SystemConfig,
    range_grid_interval,
)
from isac.estimate import detect_num_paths
from isac.numerics import ComplexMatrix, herm_eig, pinv

logger = logging.getLogger(__name__)

MAX_AOA_DEG = 89.5
MIN_DAMPING = 1e-6


class AoaEstimate(TypedDict):
    """Estimated AoAs sorted by ascending MUSIC spectrum value."""

    angles_deg: list[float]
    spectrum_values: list[float]
    num_paths: int


class BiasedFftConfig(TypedDict):
    """Bias grid of the range estimator: N_r pieces of size r_δ = Δr / N_r."""

    num_bias_steps: int
    grid_interval_m: float
    step_m: float


class SensingReport(TypedDict):
    """AoAs, ranges and beamformers of every detected path."""

    aoa: AoaEstimate
    ranges_m: list[float]
    beamformers: ComplexMatrix
    path_powers: list[float]


# %% AoA estimation
def music_spectrum(
    theta_deg: float | np.ndarray, noise_subspace: ComplexMatrix, cfg: SystemConfig
) -> np.ndarray:
    """MUSIC cost f(θ) = ‖U_N^H·a(θ)‖², zero where a(θ) is in the signal subspace.

    >>> from isac.config import default_system_config
    >>> cfg = default_system_config()
    >>> music_spectrum(np.array([-10.0, 40.0]), np.zeros((8, 0)), cfg).tolist()
    [0.0, 0.0]
    >>> a = steering_matrix(np.array([30.0]), cfg)
    >>> _, vectors = herm_eig(a @ a.conj().T)
    >>> values = music_spectrum(np.linspace(-80, 80, 33), vectors[:, 1:], cfg)
    >>> bool(music_spectrum(30.0, vectors[:, 1:], cfg) <= 1e-10 * 8)
    True
    >>> bool((values >= 0).all() and (values <= 8 + 1e-9).all())
    True

    """
    steering = steering_matrix(np.atleast_1d(theta_deg), cfg)
    projected = noise_subspace.conj().T @ steering
    values = np.sum(np.abs(projected) ** 2, axis=0)
    return values if np.ndim(theta_deg) else values[0]


def _newton_refine(theta: float, cost: Callable[[float], float]) -> float:
    """Damped Newton descent on a 1-D cost with central-difference derivatives."""
    step_size = NEWTON_STEP_DEG
    damping = 1.0
    value = cost(theta)
    for _ in range(NEWTON_MAX_ITERATIONS):
        upper, lower = cost(theta + step_size), cost(theta - step_size)
        slope = (upper - lower) / (2 * step_size)
        curvature = (upper - 2 * value + lower) / step_size**2
        if curvature > 0:
            step = -slope / curvature
        else:
            step = -np.sign(slope) * AOA_GRID_STEP_DEG
        delta = damping * step
        if abs(delta) < NEWTON_TOLERANCE_DEG:
            break
        candidate = float(np.clip(theta + delta, -MAX_AOA_DEG, MAX_AOA_DEG))
        candidate_value = cost(candidate)
        if candidate_value < value:
            theta, value = candidate, candidate_value
        else:
            damping /= 2
            if damping < MIN_DAMPING:
                break
    return theta


def estimate_aoa(
    h_enhanced: ComplexMatrix, l_hat: int, cfg: SystemConfig, cap_to_minima: bool = False
) -> AoaEstimate:
    """MUSIC AoA estimation with grid search and Newton refinement.

    The noise subspace is spanned by the trailing P−L̂ eigenvectors of
    H·H^H/N_c. The L̂ lowest local minima of the spectrum on a 0.5° grid over
    (−90°, 90°) are refined and returned in ascending spectrum order.
    With ``cap_to_minima`` a spectrum with fewer minima than L̂ yields one
    estimate per minimum instead of failing.

    Args:
        h_enhanced: CSI matrix, P × N_c
        l_hat: Number of paths, 1 ≤ L̂ < P
        cfg: System configuration (array geometry)
        cap_to_minima: Return fewer paths when the spectrum has fewer minima

    Returns:
        AoaEstimate with L̂ angles

    Raises:
        ValueError: If L̂ is out of range or the spectrum has fewer than L̂ minima
            (no minimum at all with ``cap_to_minima``)

    >>> from isac.channel import make_static_scene, single_path_scene, true_csi
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=64)
    >>> estimate = estimate_aoa(true_csi(single_path_scene(30.0, 50.0, cfg), cfg), 1, cfg)
    >>> bool(abs(estimate["angles_deg"][0] - 30.0) < 1e-3)
    True
    >>> h = true_csi(make_static_scene(cfg), cfg)
    >>> sorted(round(a, 2) for a in estimate_aoa(h, 2, cfg)["angles_deg"])
    [30.0, 59.5]
    >>> estimate_aoa(h, 8, cfg)
    Traceback (most recent call last):
        ...
    ValueError: Path count must satisfy 1 <= L < P = 8, got 8

    # Reversing the array order mirrors every AoA
    >>> mirrored = estimate_aoa(h[::-1], 2, cfg)["angles_deg"]
    >>> sorted(round(-a, 2) for a in mirrored)
    [30.0, 59.5]

    """
    p, nc = h_enhanced.shape
    if not 1 <= l_hat < p:
        raise ValueError(f"Path count must satisfy 1 <= L < P = {p}, got {l_hat}")
    _, vectors = herm_eig(h_enhanced @ h_enhanced.conj().T / nc)
    noise_subspace = vectors[:, l_hat:]

    grid = np.arange(-MAX_AOA_DEG, MAX_AOA_DEG + AOA_GRID_STEP_DEG / 2, AOA_GRID_STEP_DEG)
    spectrum = music_spectrum(grid, noise_subspace, cfg)
    minima, _ = signal.find_peaks(-spectrum)
    if cap_to_minima and 0 < minima.size < l_hat:
        logger.warning(f"⚠ MUSIC spectrum has {minima.size} minima for {l_hat} paths")
        l_hat = int(minima.size)
    if minima.size < l_hat:
        raise ValueError(
            f"Degenerate MUSIC spectrum: {minima.size} local minima for {l_hat} paths"
        )
    coarse = grid[minima[np.argsort(spectrum[minima])[:l_hat]]]

    def cost(theta: float) -> float:
        return float(music_spectrum(theta, noise_subspace, cfg))

    refined = [_newton_refine(float(theta), cost) for theta in coarse]
    values = [cost(theta) for theta in refined]
    order = np.argsort(values, kind="stable")
    return AoaEstimate(
        angles_deg=[refined[i] for i in order],
        spectrum_values=[values[i] for i in order],
        num_paths=l_hat,
    )


# %% Spatial filtering
def beamformers(aoa: AoaEstimate, cfg: SystemConfig) -> ComplexMatrix:
    """LS receive beamformers W = (A^H)†, column l passes path l and nulls the rest.

    >>> from isac.config import default_system_config
    >>> cfg = default_system_config()
    >>> aoa = AoaEstimate(
    ...     angles_deg=[30.0, 59.5], spectrum_values=[0.0, 0.0], num_paths=2
    ... )
    >>> w = beamformers(aoa, cfg)
    >>> a = steering_matrix(np.array([30.0, 59.5]), cfg)
    >>> bool(np.abs(w.conj().T @ a - np.eye(2)).max() <= 1e-8)
    True

    """
    steering = steering_matrix(np.array(aoa["angles_deg"]), cfg)
    return pinv(steering.conj().T)


def spatial_filter(
    h_enhanced: ComplexMatrix, aoa: AoaEstimate, path_index: int, cfg: SystemConfig
) -> np.ndarray:
    """Beamformed per-subcarrier response of one path, w_l^H·H.

    Raises:
        numpy.linalg.LinAlgError: If the estimated AoAs are (nearly) identical

    >>> from isac.channel import single_path_scene, true_csi
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=16)
    >>> scene = single_path_scene(30.0, 50.0, cfg, attenuation=2.0)
    >>> aoa = AoaEstimate(angles_deg=[30.0], spectrum_values=[0.0], num_paths=1)
    >>> out = spatial_filter(true_csi(scene, cfg), aoa, 0, cfg)
    >>> np.allclose(np.abs(out), 2.0)
    True
    >>> twin = AoaEstimate(
    ...     angles_deg=[30.0, 30.0], spectrum_values=[0.0, 0.0], num_paths=2
    ... )
    >>> try:
    ...     spatial_filter(true_csi(scene, cfg), twin, 0, cfg)
    ... except np.linalg.LinAlgError as err:
    ...     print(str(err)[:24])
    Matrix is rank-deficient

    """
    w = beamformers(aoa, cfg)[:, path_index]
    return w.conj() @ h_enhanced


# %% Range estimation
def biased_fft_config(cfg: SystemConfig, num_bias_steps: int) -> BiasedFftConfig:
    """Bias grid for a system configuration.

    >>> from isac.config import default_system_config
    >>> config = biased_fft_config(default_system_config(), 4)
    >>> bool(np.isclose(config["step_m"] * 4, config["grid_interval_m"]))
    True
    >>> biased_fft_config(default_system_config(), 3)
    Traceback (most recent call last):
        ...
    ValueError: Number of bias steps must be even and >= 2, got 3

    """
    if num_bias_steps < 2 or num_bias_steps % 2:  # noqa: PLR2004
        raise ValueError(
            f"Number of bias steps must be even and >= 2, got {num_bias_steps}"
        )
    grid = range_grid_interval(cfg)
    return BiasedFftConfig(
        num_bias_steps=num_bias_steps, grid_interval_m=grid, step_m=grid / num_bias_steps
    )


def fft_range_estimate(h_filtered: np.ndarray, grid_interval_m: float) -> float:
    """Grid-quantised range from the peak of the N_c-point delay spectrum.

    >>> nc, grid = 256, 2.44140625
    >>> tone = np.exp(-2j * np.pi * np.arange(nc) * 7 / nc)
    >>> fft_range_estimate(tone, grid) == 7 * grid
    True
    >>> off_grid = np.exp(-2j * np.pi * np.arange(nc) * 3.0 / (nc * grid))
    >>> fft_range_estimate(off_grid, grid)
    2.44140625
    >>> fft_range_estimate(np.zeros(8), grid)
    Traceback (most recent call last):
        ...
    ValueError: Range estimation needs a non-zero filtered response

    """
    if not np.any(h_filtered):
        raise ValueError("Range estimation needs a non-zero filtered response")
    spectrum = np.abs(np.fft.ifft(h_filtered))
    return float(np.argmax(spectrum)) * grid_interval_m


def biased_fft_range_estimate(h_filtered: np.ndarray, config: BiasedFftConfig) -> float:
    """Average of FFT range estimates over N_r+1 known range offsets.

    For k in −N_r/2..N_r/2 the response is shifted by k·r_δ, estimated on the grid,
    then debiased by subtracting k·r_δ. Estimates wrap on the unambiguous range.

    >>> nc, grid = 256, 2.44140625
    >>> config = BiasedFftConfig(num_bias_steps=4, grid_interval_m=grid, step_m=grid / 4)
    >>> tone = np.exp(-2j * np.pi * np.arange(nc) * 3.0 / (nc * grid))
    >>> round(biased_fft_range_estimate(tone, config), 4)
    2.9297

    """
    nc = len(h_filtered)
    grid = config["grid_interval_m"]
    unambiguous = nc * grid
    half = config["num_bias_steps"] // 2
    subcarriers = np.arange(nc)
    reference = fft_range_estimate(h_filtered, grid)
    estimates = []
    for k in range(-half, half + 1):
        bias = k * config["step_m"]
        shifted = h_filtered * np.exp(-2j * np.pi * subcarriers * bias / unambiguous)
        debiased = fft_range_estimate(shifted, grid) - bias
        offset = (debiased - reference + unambiguous / 2) % unambiguous - unambiguous / 2
        estimates.append(reference + offset)
    return float(np.mean(estimates)) % unambiguous


# %% Pipeline
def sense(
    h_enhanced: ComplexMatrix,
    cfg: SystemConfig,
    num_bias_steps: int,
    num_paths: int | None = None,
) -> SensingReport:
    """AoA estimation, spatial filtering and biased-FFT ranging for every path.

    Without ``num_paths`` the path count is detected from the eigenvalues of
    the CSI autocorrelation. A spectrum with fewer minima than paths senses
    only the paths it resolves.

    >>> from isac.channel import make_static_scene, true_csi
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config()
    >>> h = true_csi(make_static_scene(cfg), cfg)
    >>> sense(h, cfg, 4)["aoa"]["num_paths"]
    2
    >>> report = sense(h, cfg, 200, num_paths=2)
    >>> sorted(round(a, 2) for a in report["aoa"]["angles_deg"])
    [30.0, 59.5]
    >>> los = int(np.argmin(np.abs(np.array(report["aoa"]["angles_deg"]) - 30.0)))
    >>> bool(abs(report["ranges_m"][los] - 91.26) <= range_grid_interval(cfg) / 50)
    True

    """
    nc = h_enhanced.shape[1]
    if num_paths is None:
        num_paths = detect_num_paths(h_enhanced)
    aoa = estimate_aoa(h_enhanced, num_paths, cfg, cap_to_minima=True)
    weights = beamformers(aoa, cfg)
    config = biased_fft_config(cfg, num_bias_steps)

    ranges, powers = [], []
    for index in range(aoa["num_paths"]):
        filtered = weights[:, index].conj() @ h_enhanced
        ranges.append(biased_fft_range_estimate(filtered, config))
        powers.append(float(np.sum(np.abs(filtered) ** 2) / nc))
    logger.debug(f"Sensed AoAs {aoa['angles_deg']} and ranges {ranges}")
    return SensingReport(
        aoa=aoa, ranges_m=ranges, beamformers=weights, path_powers=powers
    )


def unambiguous_range(cfg: SystemConfig) -> float:
    """Largest range the delay spectrum resolves without aliasing, c/Δf."""
    return SPEED_OF_LIGHT / cfg["subcarrier_spacing_hz"]

"""Baseline CSI estimators, path-count detection and power normalisation."""

# %% Imports
import logging
from typing import TypedDict

import numpy as np
from scipy import linalg

from isac.channel import codebook
from isac.config import EIGEN_GAP_FLOOR, PATH_COUNT_EPSILON, RANK_TOLERANCE, SystemConfig
from isac.numerics import ComplexMatrix, herm_eig
from isac.transform import isac_inverse, isac_transform

logger = logging.getLogger(__name__)

MIN_PATH_COUNT_ANTENNAS = 4


class NormalizationReport(TypedDict):
    """Statistics from the eigen-analysis of one CSI matrix."""

    num_paths_est: int
    noise_var_est: float
    signal_power_est: float
    eigenvalues: np.ndarray


# %%
def ls_estimate(y: np.ndarray, codebook_row: np.ndarray, p_t: float) -> np.ndarray:
    """Least-squares CSI estimate ĥ = Y·s/(√P_t·U).

    Leading axes broadcast, so a stack of N_c pilot blocks (N_c × P × U) with
    one codeword per block (N_c × U) returns N_c × P.

    Args:
        y: Pilot observation(s), shape (..., P, U)
        codebook_row: Codeword(s) used for the observation, shape (..., U)
        p_t: Transmit power in watts

    Returns:
        Estimated CSI column(s), shape (..., P)

    Raises:
        ValueError: If the transmit power is not positive

    >>> s = codebook(4)[1]
    >>> h = np.array([1.0, 2j, -1.0])
    >>> y = 3.0 * np.outer(h, s.conj())
    >>> np.allclose(ls_estimate(y, s, 9.0), h)
    True
    >>> np.allclose(ls_estimate(2j * y, s, 9.0), 2j * ls_estimate(y, s, 9.0))
    True

    Pure pilot noise leaves an error of variance σ²/(P_t·U):

    >>> from isac.channel import complex_noise
    >>> z = complex_noise(np.random.default_rng(5), (10_000, 8, 14), 0.5)
    >>> e = ls_estimate(z, codebook(14)[3], 2.0)
    >>> bool(abs(np.mean(np.abs(e) ** 2) / (0.5 / (2.0 * 14)) - 1) < 0.03)
    True
    >>> ls_estimate(y, s, 0.0)
    Traceback (most recent call last):
        ...
    ValueError: Transmit power must be positive, got 0.0

    """
    if not p_t > 0:
        raise ValueError(f"Transmit power must be positive, got {p_t}")
    u = codebook_row.shape[-1]
    return (y @ codebook_row[..., None])[..., 0] / (np.sqrt(p_t) * u)


def ls_estimate_packet(y_packet: np.ndarray, cfg: SystemConfig) -> ComplexMatrix:
    """LS estimate of a whole packet from its N_c × P × U pilot blocks, shape P × N_c.

    >>> from isac.channel import make_static_scene, observe_packet, true_csi
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=32, noise_variance_w=0.0)
    >>> h = true_csi(make_static_scene(cfg), cfg)
    >>> y = observe_packet(h, cfg, np.random.default_rng(0))
    >>> bool(np.abs(ls_estimate_packet(y, cfg) - h).max() <= 1e-12 * np.abs(h).max())
    True

    """
    u = cfg["codebook_length"]
    pilots = codebook(u)[np.arange(y_packet.shape[0]) % u]
    return ls_estimate(y_packet, pilots, cfg["transmit_power_w"]).T


# %%
def sample_autocorrelation(h_stack: np.ndarray) -> ComplexMatrix:
    """Antenna autocorrelation E[h·h^H] averaged over samples and subcarriers.

    Accepts a single P × N_c matrix or a stack S × P × N_c.

    >>> h = np.ones((2, 5), dtype=complex)
    >>> sample_autocorrelation(h).real.tolist()
    [[1.0, 1.0], [1.0, 1.0]]
    >>> sample_autocorrelation(np.stack([h, 3 * h])).real.tolist()
    [[5.0, 5.0], [5.0, 5.0]]

    """
    stack = np.asarray(h_stack, dtype=complex).reshape(-1, *np.shape(h_stack)[-2:])
    count = stack.shape[0] * stack.shape[2]
    return np.einsum("spn,sqn->pq", stack, stack.conj()) / count


def lmmse_estimate(h_ls: np.ndarray, r_hh: ComplexMatrix, noise_var: float) -> np.ndarray:
    """LMMSE filter ĥ = R_hh·(R_hh + σ²·I)⁻¹·ĥ_LS applied to a column or every column.

    Args:
        h_ls: LS estimate, shape (P,) or (P, N_c)
        r_hh: Channel autocorrelation, P × P Hermitian positive semidefinite
        noise_var: Noise variance of the LS estimate

    Returns:
        Filtered estimate with the shape of ``h_ls``

    Raises:
        numpy.linalg.LinAlgError: If R_hh + σ²·I is singular within tolerance

    >>> h = np.array([1.0 + 1j, -2.0, 0.5j])
    >>> np.allclose(lmmse_estimate(h, 2.0 * np.eye(3), 0.0), h)
    True
    >>> np.allclose(lmmse_estimate(h, 3.0 * np.eye(3), 1.0), 0.75 * h)
    True
    >>> try:
    ...     lmmse_estimate(h, np.zeros((3, 3)), 0.0)
    ... except np.linalg.LinAlgError as err:
    ...     print(err)
    LMMSE filter matrix is singular

    """
    r_hh = np.asarray(r_hh, dtype=complex)
    system = r_hh + noise_var * np.eye(r_hh.shape[0])
    values, _ = herm_eig(system)
    if values[-1] <= RANK_TOLERANCE * max(values[0], 0.0):
        raise np.linalg.LinAlgError("LMMSE filter matrix is singular")
    return r_hh @ linalg.solve(system, h_ls, assume_a="her")


# %%
def noise_edge(num_antennas: int, num_snapshots: int) -> float:
    """Largest noise-only eigenvalue of a P × P sample autocorrelation, per unit floor.

    With N snapshots of white noise the eigenvalues spread up to (1+√(P/N))²
    times the noise variance.

    >>> noise_edge(8, 32)
    2.25
    >>> noise_edge(8, 0)
    Traceback (most recent call last):
        ...
    ValueError: Noise edge needs at least one snapshot, got 0

    """
    if num_snapshots < 1:
        raise ValueError(f"Noise edge needs at least one snapshot, got {num_snapshots}")
    return float((1 + np.sqrt(num_antennas / num_snapshots)) ** 2)


def estimate_num_paths(
    v_sigma: np.ndarray,
    epsilon: float = PATH_COUNT_EPSILON,
    num_snapshots: int | None = None,
) -> int:
    """Number of propagation paths from descending autocorrelation eigenvalues.

    Gaps v_Δ[i] = v[i] − v[i+1] are compared with (1+ε) times the mean of the
    trailing gaps; the largest qualifying 1-based index is returned, or 1 when no
    gap qualifies. Gaps below 1e-12·v[0] count as zero.

    With ``num_snapshots`` N the eigenvalues are taken to come from N noisy
    snapshots, so a gap after v[i] also needs v[i] above (1+ε) times the noise
    edge (1+√(P/N))² over the mean of the eigenvalues below it. Noise eigenvalues
    spread over that band and would otherwise pass the gap test.

    Args:
        v_sigma: Eigenvalues in descending order, at least 4 of them
        epsilon: Threshold margin ε
        num_snapshots: Snapshots behind the eigenvalues, None for exact spectra

    Returns:
        Estimated path count L̂, between 1 and P−1

    Raises:
        ValueError: If fewer than 4 eigenvalues are given

    >>> estimate_num_paths(np.array([10, 5, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]))
    2
    >>> estimate_num_paths(np.full(8, 3.0))
    1
    >>> estimate_num_paths(np.array([10] + [0.1] * 7))
    1
    >>> estimate_num_paths(np.array([10, 10, 10, 1, 1, 1, 1, 1]))
    3
    >>> estimate_num_paths(np.array([2.0, 1.0, 0.5]))
    Traceback (most recent call last):
        ...
    ValueError: Path-count detection needs at least 4 eigenvalues, got 3

    # A noise bulk spread over 0.6..1.4 with one strong path
    >>> spread = np.array([50.0, 1.4, 1.2, 1.1, 0.9, 0.8, 0.7, 0.6])
    >>> estimate_num_paths(spread)
    4
    >>> estimate_num_paths(spread, num_snapshots=256)
    1

    """
    values = np.asarray(v_sigma, dtype=float)
    p = values.size
    if p < MIN_PATH_COUNT_ANTENNAS:
        raise ValueError(f"Path-count detection needs at least 4 eigenvalues, got {p}")
    gaps = values[:-1] - values[1:]
    gaps = np.where(gaps > EIGEN_GAP_FLOOR * max(values[0], 0.0), gaps, 0.0)
    start = (p - 1) // 2
    mean_gap = gaps[start:].sum() / (p - start)
    qualifies = gaps > (1 + epsilon) * mean_gap
    if num_snapshots is not None:
        edge = (1 + epsilon) * noise_edge(p, num_snapshots)
        floors = np.array([values[i + 1 :].mean() for i in range(p - 1)])
        qualifies &= values[:-1] > edge * floors
    qualifying = np.flatnonzero(qualifies)
    if qualifying.size == 0:
        return 1
    return int(qualifying[-1]) + 1


def detect_num_paths(h: ComplexMatrix, epsilon: float = PATH_COUNT_EPSILON) -> int:
    """Path count of a P × N_c CSI matrix, its subcarriers taken as snapshots.

    >>> from isac.channel import make_static_scene, true_csi
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config()
    >>> h = true_csi(make_static_scene(cfg), cfg)
    >>> detect_num_paths(h)
    2

    # Two separated paths in noise, many draws
    >>> from isac.channel import complex_noise, single_path_scene
    >>> rng = np.random.default_rng(7)
    >>> counts = []
    >>> for _ in range(100):
    ...     aoas = rng.choice(np.arange(-60.0, 61.0, 20.0), size=2, replace=False)
    ...     paths = [single_path_scene(a, rng.uniform(5, 150), cfg) for a in aoas]
    ...     clean = true_csi(paths[0], cfg) + 0.5 * true_csi(paths[1], cfg)
    ...     counts.append(detect_num_paths(clean + complex_noise(rng, clean.shape, 0.1)))
    >>> sum(count == 2 for count in counts) >= 95
    True

    """
    nc = np.shape(h)[1]
    eigenvalues, _ = herm_eig(h @ np.conj(h).T / nc)
    return estimate_num_paths(np.clip(eigenvalues, 0.0, None), epsilon, nc)


def signal_power(eigenvalues: np.ndarray, num_paths: int) -> tuple[float, float]:
    """Noise floor and useful signal power from eigenvalues and a path count.

    The noise floor is the mean of the trailing P−L̂ eigenvalues and the signal
    power the sum of the leading L̂ eigenvalues above it.

    >>> noise, power = signal_power(np.array([10, 5, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]), 2)
    >>> round(noise, 10), round(power, 10)
    (0.1, 14.8)

    """
    noise = float(np.mean(eigenvalues[num_paths:]))
    power = float(np.sum(eigenvalues[:num_paths] - noise))
    return noise, power


def normalize(
    h_ls: ComplexMatrix, epsilon: float = PATH_COUNT_EPSILON
) -> tuple[ComplexMatrix, NormalizationReport]:
    """Scale a CSI matrix to unit useful signal power.

    The autocorrelation R = H·H^H/N_c is eigendecomposed, the path count and
    noise floor are estimated from its spectrum, and H is divided by √ρ_h².

    Args:
        h_ls: CSI estimate, P × N_c with N_c ≥ P
        epsilon: Path-count threshold margin

    Returns:
        Tuple of (normalised CSI, NormalizationReport)

    Raises:
        ValueError: If N_c < P or the input carries no signal power

    >>> from isac.channel import single_path_scene, true_csi
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=64)
    >>> h = true_csi(single_path_scene(30.0, 40.0, cfg, attenuation=1e-5), cfg)
    >>> h_norm, report = normalize(h)
    >>> report["num_paths_est"]
    1
    >>> bool(np.isclose(report["signal_power_est"], report["eigenvalues"][0]))
    True
    >>> round(float(np.linalg.norm(h_norm) ** 2), 6)
    64.0

    # Scale invariance
    >>> h2_norm, report2 = normalize(2 * h)
    >>> bool(np.isclose(report2["signal_power_est"], 4 * report["signal_power_est"]))
    True
    >>> bool(np.abs(h2_norm - h_norm).max() <= 1e-10)
    True

    # Error cases
    >>> normalize(np.ones((8, 4)))
    Traceback (most recent call last):
        ...
    ValueError: Normalisation needs N_c >= P, got 8 x 4
    >>> normalize(np.zeros((8, 16)))
    Traceback (most recent call last):
        ...
    ValueError: Degenerate CSI: estimated signal power 0 is not positive

    """
    h_ls = np.asarray(h_ls, dtype=complex)
    p, nc = h_ls.shape
    if nc < p:
        raise ValueError(f"Normalisation needs N_c >= P, got {p} x {nc}")
    eigenvalues, _ = herm_eig(h_ls @ h_ls.conj().T / nc)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    num_paths = estimate_num_paths(eigenvalues, epsilon, nc)
    noise, power = signal_power(eigenvalues, num_paths)
    if not power > 0:
        raise ValueError(
            f"Degenerate CSI: estimated signal power {power:g} is not positive"
        )
    report = NormalizationReport(
        num_paths_est=num_paths,
        noise_var_est=noise,
        signal_power_est=power,
        eigenvalues=eigenvalues,
    )
    return h_ls / np.sqrt(power), report


def normalized_lmmse_estimate(
    h_ls: ComplexMatrix, r_hh_norm: ComplexMatrix
) -> ComplexMatrix:
    """LMMSE baseline run in the normalised domain, result rescaled to ``h_ls``.

    ``r_hh_norm`` is the antenna autocorrelation of normalised true CSI and the
    noise variance is the eigenvalue noise floor relative to the signal power.

    >>> from isac.channel import single_path_scene, true_csi
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=32)
    >>> h = true_csi(single_path_scene(30.0, 40.0, cfg, attenuation=1e-4), cfg)
    >>> rng = np.random.default_rng(0)
    >>> noisy = h + 3e-5 * (rng.normal(size=h.shape) + 1j * rng.normal(size=h.shape))
    >>> r_hh = sample_autocorrelation(normalize(h)[0])
    >>> cleaned = normalized_lmmse_estimate(noisy, r_hh)
    >>> bool(np.linalg.norm(cleaned - h) < np.linalg.norm(noisy - h))
    True

    """
    h_norm, report = normalize(h_ls)
    noise_var = report["noise_var_est"] / report["signal_power_est"]
    filtered = lmmse_estimate(h_norm, r_hh_norm, noise_var)
    return filtered * np.sqrt(report["signal_power_est"])


# %%
def dft_denoise_estimate(h: ComplexMatrix, noise_var: float) -> ComplexMatrix:
    """Transform-domain baseline: zero every noise-like angle-delay coefficient.

    A coefficient of T(H) carries noise power P·σ²/N_c; entries whose power
    stays below ln(P·N_c) times that level are set to zero before inverting.

    >>> from isac.channel import single_path_scene, true_csi
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=64)
    >>> scene = single_path_scene(30.0, 5 * 2.4397 * 4, cfg)
    >>> h = true_csi(scene, cfg)
    >>> np.allclose(dft_denoise_estimate(h, 0.0), h)
    True
    >>> rng = np.random.default_rng(0)
    >>> noisy = h + 0.3 * (rng.normal(size=h.shape) + 1j * rng.normal(size=h.shape))
    >>> cleaned = dft_denoise_estimate(noisy, 0.18)
    >>> bool(np.linalg.norm(cleaned - h) < np.linalg.norm(noisy - h))
    True

    """
    t = isac_transform(h)
    p, nc = t.shape[-2:]
    threshold = np.log(p * nc) * p * noise_var / nc
    return isac_inverse(np.where(np.abs(t) ** 2 > threshold, t, 0.0))

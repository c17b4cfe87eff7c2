"""QAM transport over the beamformed channel and bit error rate measurement.

Bits map to Gray-coded QAM points with unit mean energy. Per axis the labels are

    1 bit:  0 → −1, 1 → +1                    (scaled by 1/√2)
    2 bits: 00 → −3, 01 → −1, 11 → +1, 10 → +3 (scaled by 1/√10)

with the first half of each symbol's bits on the in-phase axis.
"""

# %% Imports
import logging
from typing import TypedDict

import numpy as np
from scipy import special

from isac.channel import (
    ChannelScene,
    complex_noise,
    link_config,
    observe_packet,
    snr_to_power,
    true_csi,
)
from isac.cnn import EnhancerModel, enhance
from isac.config import MIN_CHANNEL_GAIN, QAM_ORDERS, SystemConfig
from isac.estimate import (
    detect_num_paths,
    ls_estimate_packet,
    normalized_lmmse_estimate,
)
from isac.numerics import ComplexMatrix, herm_eig
from isac.sensing import beamformers, estimate_aoa

logger = logging.getLogger(__name__)

QPSK_ORDER = 4

AXIS_LEVELS = {
    1: {(0,): -1, (1,): 1},
    2: {(0, 0): -3, (0, 1): -1, (1, 1): 1, (1, 0): 3},
}


class QamConstellation(TypedDict):
    """Points indexed by integer label, plus the bit pattern of each label."""

    order: int
    points: np.ndarray
    labels: np.ndarray


class BerCount(TypedDict):
    """Bit error tally of one run."""

    bit_errors: int
    total_bits: int
    skipped_subcarriers: int
    ber: float


# %% Constellations
def qam_constellation(order: int) -> QamConstellation:
    """Gray-coded square QAM constellation with unit mean energy.

    >>> qpsk = qam_constellation(4)
    >>> np.round(qpsk["points"] * np.sqrt(2)).tolist()
    [(-1-1j), (-1+1j), (1-1j), (1+1j)]
    >>> qam16 = qam_constellation(16)
    >>> bool(abs(np.mean(np.abs(qam16["points"]) ** 2) - 1.0) <= 1e-12)
    True
    >>> qam16["labels"][np.argmin(np.abs(qam16["points"] - (3 - 3j) / np.sqrt(10)))]
    array([1, 0, 0, 0])

    # Gray adjacency: nearest neighbours differ in exactly one bit
    >>> d = np.abs(qam16["points"][:, None] - qam16["points"][None, :])
    >>> step = 2 / np.sqrt(10)
    >>> pairs = np.argwhere(np.isclose(d, step))
    >>> {int(np.sum(qam16["labels"][i] != qam16["labels"][j])) for i, j in pairs}
    {1}
    >>> qam_constellation(8)
    Traceback (most recent call last):
        ...
    ValueError: Unsupported QAM order 8, expected one of (4, 16)

    """
    if order not in QAM_ORDERS:
        raise ValueError(f"Unsupported QAM order {order}, expected one of {QAM_ORDERS}")
    bits_per_axis = int(np.log2(order)) // 2
    levels = AXIS_LEVELS[bits_per_axis]
    labels = (np.arange(order)[:, None] >> np.arange(2 * bits_per_axis)[::-1]) & 1
    in_phase = [levels[tuple(row[:bits_per_axis])] for row in labels]
    quadrature = [levels[tuple(row[bits_per_axis:])] for row in labels]
    points = np.array(in_phase) + 1j * np.array(quadrature)
    points = points / np.sqrt(np.mean(np.abs(points) ** 2))
    return QamConstellation(order=order, points=points, labels=labels)


def bits_per_symbol(constellation: QamConstellation) -> int:
    """Number of bits carried by one symbol."""
    return constellation["labels"].shape[1]


def modulate(bits: np.ndarray, constellation: QamConstellation) -> np.ndarray:
    """Map a bit array (length a multiple of log2(order)) to QAM symbols.

    >>> modulate(np.array([1, 0, 0, 0]), qam_constellation(16)) * np.sqrt(10)
    array([3.-3.j])
    >>> modulate(np.array([1, 0, 1]), qam_constellation(4))
    Traceback (most recent call last):
        ...
    ValueError: Bit count 3 is not a multiple of 2

    """
    width = bits_per_symbol(constellation)
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % width:
        raise ValueError(f"Bit count {bits.size} is not a multiple of {width}")
    indices = bits.reshape(-1, width) @ (1 << np.arange(width)[::-1])
    return constellation["points"][indices]


def demodulate_ml(
    y: np.ndarray, h_est: np.ndarray, p_t: float, constellation: QamConstellation
) -> np.ndarray:
    """Maximum-likelihood detection argmin_d |y/(√P_t·ĥ) − d|², returned as bits.

    Args:
        y: Combined received samples
        h_est: Channel estimate for every sample (broadcast against ``y``)
        p_t: Transmit power
        constellation: Constellation used by the transmitter

    Returns:
        Bit array of length ``y.size × log2(order)``

    Raises:
        ValueError: If any channel estimate magnitude is below 1e-15

    >>> qam16 = qam_constellation(16)
    >>> bits = np.random.default_rng(0).integers(0, 2, 64)
    >>> symbols = modulate(bits, qam16)
    >>> h = np.exp(1j * np.linspace(0, 3, symbols.size))
    >>> np.array_equal(demodulate_ml(2.0 * h * symbols, h, 4.0, qam16), bits)
    True
    >>> demodulate_ml(symbols[:2], np.array([1.0, 0.0]), 1.0, qam16)
    Traceback (most recent call last):
        ...
    ValueError: Channel estimate below 1e-15 on 1 of 2 samples

    # Every label of both orders, 1000 times each
    >>> for order in (4, 16):
    ...     qam = qam_constellation(order)
    ...     bits = np.tile(qam["labels"], (1000, 1)).ravel()
    ...     rx = demodulate_ml(modulate(bits, qam), np.ones(1), 1.0, qam)
    ...     print(order, bool(np.array_equal(rx, bits)))
    4 True
    16 True

    """
    y = np.asarray(y)
    h_est = np.broadcast_to(h_est, y.shape)
    unusable = np.abs(h_est) < MIN_CHANNEL_GAIN
    if unusable.any():
        raise ValueError(
            f"Channel estimate below {MIN_CHANNEL_GAIN:g} on "
            f"{int(unusable.sum())} of {unusable.size} samples"
        )
    equalized = (y / (np.sqrt(p_t) * h_est)).ravel()
    distances = np.abs(equalized[:, None] - constellation["points"][None, :])
    return constellation["labels"][np.argmin(distances, axis=1)].ravel()


def qpsk_ber_theory(ebn0: float | np.ndarray) -> float | np.ndarray:
    """Gray QPSK bit error rate Q(√(2·Eb/N0)) for a linear Eb/N0.

    With unit-energy symbols and complex noise variance N0 the symbol SNR is
    Es/N0 = 2·Eb/N0.

    >>> round(float(qpsk_ber_theory(10.0)), 8)
    3.87e-06
    >>> float(qpsk_ber_theory(0.0))
    0.5

    """
    return 0.5 * special.erfc(np.sqrt(np.asarray(ebn0)))


# %% Link simulation
def combining_vector(
    h_est: ComplexMatrix, cfg: SystemConfig, num_paths: int | None = None
) -> np.ndarray:
    """Receive beamformer of the strongest path found in a CSI estimate.

    Paths are located with MUSIC on the estimate itself, ``num_paths`` of them or
    as many as the estimate's eigenvalues show. The beamformer whose filtered
    response carries the most power is returned. When MUSIC fails the principal
    eigenvector is used instead.

    >>> from isac.channel import make_static_scene, steering_matrix
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=32)
    >>> w = combining_vector(true_csi(make_static_scene(cfg), cfg), cfg)
    >>> a = steering_matrix(np.array([30.0]), cfg)[:, 0]
    >>> bool(abs(w.conj() @ a - 1) <= 1e-6)
    True
    >>> w = combining_vector(true_csi(make_static_scene(cfg), cfg), cfg, num_paths=1)
    >>> bool(abs(w.conj() @ a) / np.linalg.norm(w) >= 0.999 * np.sqrt(8))
    True

    """
    nc = h_est.shape[1]
    _, vectors = herm_eig(h_est @ h_est.conj().T / nc)
    if num_paths is None:
        num_paths = detect_num_paths(h_est)
    try:
        weights = beamformers(estimate_aoa(h_est, num_paths, cfg), cfg)
    except (ValueError, np.linalg.LinAlgError) as err:
        logger.debug(f"Falling back to the principal eigenvector: {err}")
        return vectors[:, 0]
    powers = np.sum(np.abs(weights.conj().T @ h_est) ** 2, axis=1)
    return weights[:, int(np.argmax(powers))]


def qpsk_ber_reference(
    scene: ChannelScene, cfg: SystemConfig, snr_db: float, packet_index: int = 0
) -> float:
    """Closed-form 4-QAM BER of one packet combined with the perfect-CSI beamformer.

    The post-combining SNR of subcarrier n is P_t·|w^H·h_n|²/(σ²·‖w‖²); the
    result averages the Gray QPSK BER over subcarriers.

    >>> from isac.channel import single_path_scene
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=16, noise_variance_w=1.0)
    >>> scene = single_path_scene(0.0, 10.0, cfg, attenuation=1.0)
    >>> ber = qpsk_ber_reference(scene, cfg, 10 * np.log10(2.5), 0)
    >>> bool(np.isclose(ber, qpsk_ber_theory(10.0)))
    True

    """
    p_t = snr_to_power(snr_db, scene, cfg)
    h = true_csi(scene, cfg, packet_index)
    w = combining_vector(h, cfg)
    gain = np.abs(w.conj() @ h) ** 2 / np.vdot(w, w).real
    post_snr = p_t * gain / cfg["noise_variance_w"]
    return float(np.mean(qpsk_ber_theory(post_snr / 2)))


def estimate_csi(
    h_true: ComplexMatrix,
    h_ls: ComplexMatrix,
    csi_source: str,
    model: EnhancerModel | None = None,
    r_hh_norm: ComplexMatrix | None = None,
) -> ComplexMatrix:
    """CSI seen by the receiver for one source: perfect, ls, lmmse or enhanced.

    Raises:
        ValueError: If the source is unknown or its model/autocorrelation is missing

    >>> h = np.ones((8, 16), dtype=complex)
    >>> estimate_csi(h, 2 * h, "ls")[0, 0]
    np.complex128(2+0j)
    >>> estimate_csi(h, 2 * h, "enhanced")
    Traceback (most recent call last):
        ...
    ValueError: CSI source 'enhanced' needs a trained model
    >>> estimate_csi(h, h, "oracle")
    Traceback (most recent call last):
        ...
    ValueError: Unknown CSI source 'oracle'

    """
    if csi_source == "perfect":
        return h_true
    if csi_source == "ls":
        return h_ls
    if csi_source == "lmmse":
        if r_hh_norm is None:
            raise ValueError("CSI source 'lmmse' needs an autocorrelation matrix")
        return normalized_lmmse_estimate(h_ls, r_hh_norm)
    if csi_source == "enhanced":
        if model is None:
            raise ValueError("CSI source 'enhanced' needs a trained model")
        return enhance(model, h_ls)
    raise ValueError(f"Unknown CSI source '{csi_source}'")


class BerPoint(TypedDict):
    """CSI source, per-antenna SNR γ in dB and minimum data symbols of one BER point."""

    csi_source: str
    snr_db: float
    num_symbols: int


class BerRunParams(TypedDict, total=False):
    """Optional inputs of ``count_bit_errors``."""

    order: int
    model: EnhancerModel | None
    r_hh_norm: ComplexMatrix | None
    first_packet: int


def count_bit_errors(
    scene: ChannelScene,
    cfg: SystemConfig,
    point: BerPoint,
    rng: np.random.Generator,
    params: BerRunParams | None = None,
) -> BerCount:
    """Simulate data packets over one scene and count demodulation bit errors.

    Each packet gets a fresh pilot observation, CSI estimate and combining
    vector, then carries P_s OFDM symbols of data on every subcarrier. Packets
    are sent until ``num_symbols`` data symbols have gone out. Every source
    combines over the path count detected on the packet's LS estimate. Subcarriers whose
    combined channel estimate falls below 1e-15 are skipped and counted.

    Args:
        scene: Propagation paths, evolved per packet by their Doppler
        cfg: System configuration, transmit power is set from the SNR
        point: CSI source (perfect, ls, lmmse or enhanced), SNR and symbol count
        rng: Random stream for pilots, data and noise
        params: QAM order, trained model, normalised autocorrelation and the
            packet index of the first packet

    Returns:
        BerCount with totals over all packets

    >>> from isac.channel import make_static_scene
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=16, noise_variance_w=0.0)
    >>> scene = make_static_scene(cfg)
    >>> rng = np.random.default_rng(0)
    >>> point = BerPoint(csi_source="perfect", snr_db=10.0, num_symbols=500)
    >>> result = count_bit_errors(scene, cfg, point, rng, {"order": 16})
    >>> result["bit_errors"], result["total_bits"] >= 2000, result["skipped_subcarriers"]
    (0, True, 0)

    """
    params = params or {}
    constellation = qam_constellation(params.get("order", QPSK_ORDER))
    width = bits_per_symbol(constellation)
    nc, p = cfg["num_subcarriers"], cfg["num_antennas"]
    symbols_per_packet = cfg["symbols_per_packet"]
    num_packets = max(1, -(-point["num_symbols"] // (symbols_per_packet * nc)))
    link_cfg = link_config(cfg, point["snr_db"], scene)
    p_t = link_cfg["transmit_power_w"]

    errors = bits = skipped = 0
    first_packet = params.get("first_packet", 0)
    for packet in range(first_packet, first_packet + num_packets):
        h = true_csi(scene, link_cfg, packet)
        h_ls = ls_estimate_packet(observe_packet(h, link_cfg, rng), link_cfg)
        h_est = estimate_csi(
            h, h_ls, point["csi_source"], params.get("model"), params.get("r_hh_norm")
        )
        w = combining_vector(h_est, link_cfg, detect_num_paths(h_ls))
        channel = w.conj() @ h
        channel_est = w.conj() @ h_est

        usable = np.abs(channel_est) >= MIN_CHANNEL_GAIN
        skipped += int(nc - usable.sum())
        tx_bits = rng.integers(0, 2, (symbols_per_packet, int(usable.sum()), width))
        data = modulate(tx_bits.ravel(), constellation).reshape(tx_bits.shape[:2])
        noise = complex_noise(
            rng, (symbols_per_packet, p, nc), link_cfg["noise_variance_w"]
        )
        combined_noise = np.einsum("p,spn->sn", w.conj(), noise)[:, usable]
        y = np.sqrt(p_t) * channel[usable] * data + combined_noise
        rx_bits = demodulate_ml(y, channel_est[usable], p_t, constellation)
        errors += int(np.sum(rx_bits != tx_bits.ravel()))
        bits += tx_bits.size

    if skipped:
        logger.warning(f"⚠ Skipped {skipped} subcarriers with unusable channel estimates")
    return BerCount(
        bit_errors=errors,
        total_bits=bits,
        skipped_subcarriers=skipped,
        ber=errors / bits if bits else float("nan"),
    )


def ber_run(
    scene: ChannelScene,
    cfg: SystemConfig,
    point: BerPoint,
    rng: np.random.Generator,
    params: BerRunParams | None = None,
) -> float:
    """Bit error rate of one CSI source at one SNR, deterministic per ``rng`` seed.

    >>> from isac.channel import make_static_scene
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=16, noise_variance_w=0.0)
    >>> point = BerPoint(csi_source="perfect", snr_db=0.0, num_symbols=200)
    >>> ber_run(make_static_scene(cfg), cfg, point, np.random.default_rng())
    0.0
    >>> cfg = default_system_config(num_subcarriers=16)
    >>> scene = make_static_scene(cfg)
    >>> point = BerPoint(csi_source="ls", snr_db=0.0, num_symbols=200)
    >>> first = ber_run(scene, cfg, point, np.random.default_rng(2))
    >>> first == ber_run(scene, cfg, point, np.random.default_rng(2))
    True

    # BER falls as the SNR rises
    >>> bers = [
    ...     ber_run(scene, cfg, BerPoint(csi_source="ls", snr_db=snr, num_symbols=20_000),
    ...             np.random.default_rng(3))
    ...     for snr in (-10.0, -5.0, 0.0)
    ... ]
    >>> bers[0] > bers[1] > bers[2]
    True

    """
    counts = count_bit_errors(scene, cfg, point, rng, params)
    return counts["ber"]

"""Acceptance checks with a printed pass/fail report.

Fast checks cover the transform, the complex layers, the gradients, the biased
FFT inequality, the path-count detector and LMMSE against LS. The full run adds desk-scale
training, sensing and BER trends and a reproducibility run of the whole
pipeline; those share one trained enhancer.
"""

# %% Imports
import copy
import logging
import tempfile
import time
from collections.abc import Callable
from pathlib import Path
from typing import TypedDict
from unittest import mock

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy import optimize

from isac import config
from isac.channel import (
    complex_noise,
    keyed_rng,
    link_config,
    make_static_scene,
    observe_packet,
    single_path_scene,
    true_csi,
)
from isac.cnn import (
    ComplexConvLayer,
    EnhancerModel,
    TrainRecord,
    backward,
    complex_conv,
    complex_linear,
    forward,
    init_model,
    loss,
    parameters,
)
from isac.comm import (
    QPSK_ORDER,
    BerPoint,
    ber_run,
    demodulate_ml,
    modulate,
    qam_constellation,
    qpsk_ber_theory,
)
from isac.config import (
    DYNAMIC_RANGE_BOUNDS_M,
    STATIC_LOS_AOA_DEG,
    STATIC_LOS_RANGE_M,
    STATIC_NLOS_AOA_DEG,
    ExperimentConfig,
    SystemConfig,
    default_system_config,
    experiment_output_dir,
    range_grid_interval,
)
from isac.estimate import (
    detect_num_paths,
    estimate_num_paths,
    ls_estimate_packet,
    normalize,
)
from isac.experiments import (
    aggregate_records,
    ber_rows,
    cmd_ber,
    cmd_eval,
    cmd_generate,
    cmd_report,
    cmd_sense,
    cmd_train,
    fit_enhancer,
    sensing_records,
    simulate_splits,
)
from isac.numerics import herm_eig
from isac.processors import (
    CsiDataset,
    MetricRow,
    estimate_variants,
    generate_dataset,
    nmse_rows,
    normalized_autocorrelation,
)
from isac.sensing import (
    biased_fft_config,
    biased_fft_range_estimate,
    estimate_aoa,
    fft_range_estimate,
    sense,
    spatial_filter,
)
from isac.transform import isac_inverse, isac_transform

logger = logging.getLogger(__name__)

TRANSFORM_TOLERANCE = 1e-10
LAYER_TOLERANCE = 1e-12
GRADIENT_TOLERANCE = 1e-5
FINITE_DIFFERENCE_STEP = 1e-6
GRADIENT_UNIT_FLOOR = 1.0
KINK_SEPARATION = 1e-6
MAX_KINK_SHARE = 0.01
LAYER_CASES = 200
SWEEP_BIAS_STEPS = (2, 4, 10, 50)
SWEEP_RANGES = 10_000
QUICK_SWEEP_RANGES = 1_000
TREND_BIAS_STEPS = (10, 50, 200)
MONTE_CARLO_TRIALS = 200
REQUIRED_GAIN_DB = 10.0
CONVERGENCE_EPOCH = 30
CONVERGENCE_MARGIN = 0.1
AOA_TOLERANCE_DEG = 1e-2
RANGE_MSE_MARGIN = 0.1
MAX_SENSING_FAILURE_RATE = 0.05
BER_SNRS_DB = (0.0, 5.0, 10.0, 15.0)
MIN_BER_BITS = 100_000
SCALAR_EBN0_DB = (0.0, 4.0, 8.0)
SCALAR_BITS = 200_000
BINOMIAL_SIGMAS = 3.0
SIGNAL_TO_NOISE_FLOOR = 10.0
PROFILES_PER_PATH_COUNT = 100
NOISY_SCENES_PER_PATH_COUNT = 100
NOISY_SCENE_VARIANCE = 0.1
MIN_NOISY_PATH_COUNT_RATE = 0.95
# Packets past every dataset the pipeline draws for a config
VALIDATION_PACKET_OFFSET = 1_000_000


class CheckResult(TypedDict):
    """Outcome of one acceptance check."""

    name: str
    passed: bool
    detail: str
    seconds: float


class DeskRun(TypedDict):
    """Enhancer trained in memory plus the data it was trained and tested on."""

    model: EnhancerModel
    records: list[TrainRecord]
    train: CsiDataset
    test: CsiDataset


# %% Helpers
def range_tone(
    range_m: float, num_subcarriers: int, grid_interval_m: float
) -> np.ndarray:
    """Noiseless single-path filtered response of a target at ``range_m``.

    >>> tone = range_tone(3 * 2.5, 8, 2.5)
    >>> int(np.argmax(np.abs(np.fft.ifft(tone))))
    3

    """
    n = np.arange(num_subcarriers)
    return np.exp(-2j * np.pi * n * range_m / (num_subcarriers * grid_interval_m))


def wrapped_error(estimate: float, truth: float, period: float) -> float:
    """Signed error on a circle of circumference ``period``.

    >>> wrapped_error(99.0, 1.0, 100.0)
    -2.0

    """
    return (estimate - truth + period / 2) % period - period / 2


def music_range_estimate(
    h_filtered: np.ndarray, grid_interval_m: float, num_paths: int = 1
) -> float:
    """Delay-domain MUSIC range of the strongest path in a filtered response.

    The subcarrier axis is split into overlapping windows of N_c/2 entries whose
    sample covariance gives the noise subspace. The null-space projection of the
    delay steering vector is searched on a grid of Δr/64 and refined with a
    bounded scalar minimisation.

    >>> tone = range_tone(40.0, 64, 9.759)
    >>> bool(abs(music_range_estimate(tone, 9.759) - 40.0) < 1e-3)
    True

    """
    nc = len(h_filtered)
    window = nc // 2
    snapshots = sliding_window_view(np.asarray(h_filtered, dtype=complex), window)
    covariance = snapshots.T @ snapshots.conj() / len(snapshots)
    _, vectors = herm_eig(covariance)
    noise = vectors[:, num_paths:]
    unambiguous = nc * grid_interval_m
    k = np.arange(window)

    def projection(range_m: np.ndarray | float) -> np.ndarray:
        steering = np.exp(-2j * np.pi * np.outer(k, np.atleast_1d(range_m)) / unambiguous)
        return np.sum(np.abs(noise.conj().T @ steering) ** 2, axis=0)

    step = grid_interval_m / 64
    candidates = np.arange(0.0, unambiguous, step)
    best = candidates[int(np.argmin(projection(candidates)))]
    refined = optimize.minimize_scalar(
        lambda r: float(projection(r)[0]),
        bounds=(best - step, best + step),
        method="bounded",
        options={"xatol": 1e-9 * unambiguous},
    )
    return float(refined.x) % unambiguous


def _conv_oracle(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-size complex cross-correlation by explicit shifted sums."""
    c_out, c_in, size, _ = kernels.shape
    pad = size // 2
    height, width = x.shape[-2:]
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.empty((c_out, height, width), dtype=complex)
    for o in range(c_out):
        acc = np.full((height, width), bias[o], dtype=complex)
        for c in range(c_in):
            for di in range(size):
                for dj in range(size):
                    window = padded[c, di : di + height, dj : dj + width]
                    acc += kernels[o, c, di, dj] * window
        out[o] = acc
    return out


def _complex_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def _snr_rows(rows: list[MetricRow], snr_db: float) -> dict[str, float]:
    """Metric value per variant at the tabulated SNR nearest ``snr_db``."""
    snrs = sorted({row["snr_db"] for row in rows})
    nearest = min(snrs, key=lambda s: abs(s - snr_db))
    return {row["variant"]: row["value"] for row in rows if row["snr_db"] == nearest}


# %% Fast checks
def check_transform_round_trip(rng: np.random.Generator) -> tuple[bool, str]:
    """Inverse transform recovers 100 random 8×64 and 100 random 8×256 matrices.

    >>> check_transform_round_trip(np.random.default_rng(0))[0]
    True

    """
    worst = 0.0
    for nc in (64, 256):
        for _ in range(100):
            h = _complex_normal(rng, (8, nc))
            back = isac_inverse(isac_transform(h))
            worst = max(worst, float(np.linalg.norm(back - h) / np.linalg.norm(h)))
    return worst <= TRANSFORM_TOLERANCE, f"worst relative error {worst:.1e}"


def check_layer_oracle(rng: np.random.Generator) -> tuple[bool, str]:
    """Complex linear and conv layers agree with direct complex arithmetic."""
    worst = 0.0
    for case in range(LAYER_CASES):
        if case % 2:
            n_out, n_in = rng.integers(1, 9, size=2)
            w = _complex_normal(rng, (n_out, n_in))
            x = _complex_normal(rng, (n_in,))
            b = _complex_normal(rng, (n_out,))
            got, expected = complex_linear(x, w, b), w @ x + b
        else:
            c_out, c_in = rng.integers(1, 5, size=2)
            height, width = rng.integers(2, 13, size=2)
            layer = ComplexConvLayer(
                kernels=_complex_normal(rng, (c_out, c_in, 3, 3)),
                bias=_complex_normal(rng, (c_out,)),
            )
            x = _complex_normal(rng, (c_in, height, width))
            got = complex_conv(x, layer)
            expected = _conv_oracle(x, layer["kernels"], layer["bias"])
        scale = max(1.0, float(np.abs(expected).max()))
        worst = max(worst, float(np.abs(got - expected).max()) / scale)
    return worst <= LAYER_TOLERANCE, f"{LAYER_CASES} cases, worst error {worst:.1e}"


def check_gradients(rng: np.random.Generator) -> tuple[bool, str]:
    """Analytic gradients match central finite differences on a 1×8×16 input.

    Every real and imaginary parameter component must agree within 1e-5 of
    max(|analytic|, |numeric|, 1). Away from CLReLU kinks the loss is quadratic
    in any single parameter, so its second differences at ±h and ±2h agree; a
    component where they do not straddles a kink, is counted instead of
    compared, and such components may make up at most 1% of the total.
    """
    model = init_model((2, 2), rng)
    x = _complex_normal(rng, (1, 8, 16))
    target = _complex_normal(rng, (1, 8, 16))
    gradient, _ = backward(model, x, target)
    base = loss(target, forward(model, x))
    step = FINITE_DIFFERENCE_STEP

    errors, kinks = [], 0
    for array, grad in zip(parameters(model), parameters(gradient), strict=True):
        for index in np.ndindex(array.shape):
            original = array[index]
            for unit, part in ((1.0, grad[index].real), (1j, grad[index].imag)):
                shifted = {}
                for k in (-2, -1, 1, 2):
                    array[index] = original + k * unit * step
                    shifted[k] = loss(target, forward(model, x))
                array[index] = original
                numeric = (shifted[1] - shifted[-1]) / (2 * step)
                scale = max(abs(part), abs(numeric), GRADIENT_UNIT_FLOOR)
                curvatures = (
                    shifted[2] - 2 * shifted[1] + base,
                    shifted[1] - 2 * base + shifted[-1],
                    base - 2 * shifted[-1] + shifted[-2],
                )
                if np.ptp(curvatures) / step > KINK_SEPARATION * scale:
                    kinks += 1
                    continue
                errors.append(abs(part - numeric) / scale)

    worst = max(errors)
    total = len(errors) + kinks
    passed = worst <= GRADIENT_TOLERANCE and kinks <= MAX_KINK_SHARE * total
    return passed, (
        f"{total} real parameters, worst component error {worst:.1e}, "
        f"{kinks} across a kink"
    )


def check_biased_fft_inequality(
    system: SystemConfig, rng: np.random.Generator, num_ranges: int = SWEEP_RANGES
) -> tuple[bool, str]:
    """Biased FFT beats the plain grid estimate on noiseless off-grid ranges.

    Strict improvement is required for ranges at least Δr/(N_r+1) from the
    nearest grid point, and a lower mean error over the whole sweep; the share
    of samples where the biased estimate is not better is reported.
    """
    nc = system["num_subcarriers"]
    grid = range_grid_interval(system)
    unambiguous = nc * grid
    ranges = rng.uniform(grid, unambiguous / 2, num_ranges)
    offsets = np.abs(ranges / grid - np.round(ranges / grid)) * grid

    passed, parts = True, []
    for steps in SWEEP_BIAS_STEPS:
        estimator = biased_fft_config(system, steps)
        plain, biased = np.empty(num_ranges), np.empty(num_ranges)
        for i, range_m in enumerate(ranges):
            tone = range_tone(range_m, nc, grid)
            plain_estimate = fft_range_estimate(tone, grid)
            biased_estimate = biased_fft_range_estimate(tone, estimator)
            plain[i] = abs(wrapped_error(plain_estimate, range_m, unambiguous))
            biased[i] = abs(wrapped_error(biased_estimate, range_m, unambiguous))
        far = offsets >= grid / (steps + 1)
        strict = bool(np.all(biased[far] < plain[far]))
        better_mean = bool(biased.mean() < plain.mean())
        passed = passed and strict and better_mean
        parts.append(f"N_r={steps}: {np.mean(biased >= plain):.1%} not better")
    return passed, f"{num_ranges} ranges; " + ", ".join(parts)


def check_path_count_detector(rng: np.random.Generator) -> tuple[bool, str]:
    """Exact path counts on flat-floor eigenvalue profiles and scale-free normalisation.

    Noisy one- and two-path scenes, their subcarriers taken as snapshots, must
    also get the right count in at least 95% of draws.

    >>> check_path_count_detector(np.random.default_rng(0))[0]
    True

    """
    p = 8
    misses = 0
    for num_paths in (1, 2, 3):
        for _ in range(PROFILES_PER_PATH_COUNT):
            floor = 10 ** rng.uniform(-6, 2)
            signal = floor * SIGNAL_TO_NOISE_FLOOR * (1 + 9 * rng.random(num_paths))
            profile = np.full(p, floor)
            profile[:num_paths] += np.sort(signal)[::-1]
            misses += estimate_num_paths(profile) != num_paths

    system = default_system_config()
    angles = np.arange(-60.0, 61.0, 20.0)
    noisy_hits = {}
    for num_paths in (1, 2):
        hits = 0
        for _ in range(NOISY_SCENES_PER_PATH_COUNT):
            scenes = [
                single_path_scene(aoa, rng.uniform(5, 150), system, attenuation=0.5**k)
                for k, aoa in enumerate(rng.choice(angles, num_paths, replace=False))
            ]
            clean = sum(true_csi(scene, system) for scene in scenes)
            noisy = clean + complex_noise(rng, clean.shape, NOISY_SCENE_VARIANCE)
            hits += detect_num_paths(noisy) == num_paths
        noisy_hits[num_paths] = hits / NOISY_SCENES_PER_PATH_COUNT

    system = default_system_config(num_subcarriers=64)
    h = true_csi(make_static_scene(system), system) + 1e-6 * _complex_normal(rng, (8, 64))
    h_norm, _ = normalize(h)
    drift = max(
        float(np.abs(normalize(scale * h)[0] - h_norm).max()) for scale in (1e-6, 1e3)
    )
    passed = (
        misses == 0
        and min(noisy_hits.values()) >= MIN_NOISY_PATH_COUNT_RATE
        and drift <= TRANSFORM_TOLERANCE
    )
    rates = ", ".join(f"L={n}: {rate:.0%}" for n, rate in noisy_hits.items())
    return passed, (
        f"{misses} wrong path counts, noisy scenes exact {rates}, "
        f"normalisation drift {drift:.1e}"
    )


def check_lmmse_gain(cfg: ExperimentConfig) -> tuple[bool, str]:
    """LMMSE is never worse than LS: lower mean NMSE at every BER-suite SNR.

    The LMMSE filter uses the autocorrelation of the same samples' normalised
    true CSI and each sample's eigenvalue noise floor.
    """
    trial_cfg = copy.deepcopy(cfg)
    trial_cfg["data"]["snr_list_db"] = list(BER_SNRS_DB)
    data = generate_dataset(trial_cfg, MONTE_CARLO_TRIALS, VALIDATION_PACKET_OFFSET)
    variants = estimate_variants(data, r_hh_norm=normalized_autocorrelation(data))
    ls_rows = nmse_rows(data, variants["ls"], "ls")
    lmmse_rows = nmse_rows(data, variants["lmmse"], "lmmse")
    passed = all(
        lmmse["value"] <= ls["value"]
        for ls, lmmse in zip(ls_rows, lmmse_rows, strict=True)
    )
    pairs = ", ".join(
        f"{ls['snr_db']:g} dB {lmmse['value']:.1f}/{ls['value']:.1f}"
        for ls, lmmse in zip(ls_rows, lmmse_rows, strict=True)
    )
    return passed, f"NMSE dB LMMSE/LS over {MONTE_CARLO_TRIALS} trials: {pairs}"


# %% Desk-scale checks
def train_desk_enhancer(cfg: ExperimentConfig) -> DeskRun:
    """Generate the experiment's datasets and train its enhancer in memory."""
    splits = simulate_splits(cfg)
    model, records = fit_enhancer(cfg, splits["train"], splits["eval"])
    return DeskRun(
        model=model, records=records, train=splits["train"], test=splits["test"]
    )


def check_desk_training(run: DeskRun, snr_db: float = 10.0) -> tuple[bool, str]:
    """Enhancer output beats its LS input by 10 dB and training converges by epoch 30."""
    variants = estimate_variants(run["test"], run["model"])
    rows = [
        row
        for name in ("ls", "enhanced")
        for row in nmse_rows(run["test"], variants[name], name)
    ]
    at_snr = _snr_rows(rows, snr_db)
    gain = at_snr["ls"] - at_snr["enhanced"]

    curve = 10 ** (np.array([r["eval_nmse_db"] for r in run["records"]]) / 10)
    close = np.flatnonzero(np.abs(curve - curve[-1]) <= CONVERGENCE_MARGIN * curve[-1])
    converged_at = int(close[0]) + 1
    passed = gain >= REQUIRED_GAIN_DB and converged_at <= CONVERGENCE_EPOCH
    return passed, (
        f"gain {gain:.1f} dB over LS at {snr_db:g} dB, "
        f"within 10% of final eval NMSE from epoch {converged_at}"
    )


def check_biased_fft_trend(
    cfg: ExperimentConfig, snr_db: float = 10.0
) -> tuple[bool, str]:
    """Noisy single-path range MSE falls as N_r grows and beats Δr²/12."""
    system = cfg["system"]
    seed = cfg["experiment"]["seed"]
    nc = system["num_subcarriers"]
    grid = range_grid_interval(system)
    unambiguous = nc * grid
    estimators = {steps: biased_fft_config(system, steps) for steps in TREND_BIAS_STEPS}

    errors: dict[str | int, list[float]] = {"fft": []}
    errors.update({steps: [] for steps in TREND_BIAS_STEPS})
    for trial in range(MONTE_CARLO_TRIALS):
        rng = keyed_rng(seed, "trials", trial)
        range_m = rng.uniform(*DYNAMIC_RANGE_BOUNDS_M)
        scene = single_path_scene(rng.uniform(-60.0, 60.0), range_m, system)
        link = link_config(system, snr_db, scene)
        h_ls = ls_estimate_packet(observe_packet(true_csi(scene, link), link, rng), link)
        filtered = spatial_filter(h_ls, estimate_aoa(h_ls, 1, link), 0, link)
        errors["fft"].append(
            wrapped_error(fft_range_estimate(filtered, grid), range_m, unambiguous) ** 2
        )
        for steps, estimator in estimators.items():
            estimate = biased_fft_range_estimate(filtered, estimator)
            errors[steps].append(wrapped_error(estimate, range_m, unambiguous) ** 2)

    mse = {key: float(np.mean(values)) for key, values in errors.items()}
    ordered = [mse[steps] for steps in sorted(TREND_BIAS_STEPS, reverse=True)]
    baseline = grid**2 / 12
    passed = all(a < b for a, b in zip(ordered, ordered[1:])) and ordered[-1] < baseline
    summary = ", ".join(f"{key}: {value:.3g}" for key, value in mse.items())
    return passed, f"range MSE m² ({summary}), Δr²/12 = {baseline:.3g}"


def check_music_pipeline(
    cfg: ExperimentConfig, model: EnhancerModel, snr_db: float = 5.0
) -> tuple[bool, str]:
    """Noiseless static scene recovery plus enhanced-versus-LS AoA and range MSE.

    Enhanced CSI must cut the AoA MSE by the required gain and keep the LoS range
    MSE within 10% of LS. Both variants must sense the LoS path on all but 5% of
    the samples.
    """
    system = cfg["system"]
    steps = max(TREND_BIAS_STEPS)
    step_m = range_grid_interval(system) / steps
    h = true_csi(make_static_scene(system), system)
    report = sense(h, system, steps, num_paths=2)
    angles = np.array(report["aoa"]["angles_deg"])
    aoa_error = float(
        np.abs(np.sort(angles) - [STATIC_LOS_AOA_DEG, STATIC_NLOS_AOA_DEG]).max()
    )
    los = int(np.argmin(np.abs(angles - STATIC_LOS_AOA_DEG)))
    range_error = abs(report["ranges_m"][los] - STATIC_LOS_RANGE_M)
    filtered = report["beamformers"][:, los].conj() @ h
    music_error = abs(
        music_range_estimate(filtered, range_grid_interval(system)) - STATIC_LOS_RANGE_M
    )

    noisy_cfg = copy.deepcopy(cfg)
    noisy_cfg["data"]["snr_list_db"] = [snr_db]
    data = generate_dataset(noisy_cfg, MONTE_CARLO_TRIALS, VALIDATION_PACKET_OFFSET)
    variants = estimate_variants(data, model)
    records, failures = sensing_records(
        noisy_cfg, data, {name: variants[name] for name in ("ls", "enhanced")}
    )
    rows = aggregate_records(records)
    aoa_mse = {r["variant"]: r["value"] for r in rows if r["metric"] == "aoa_mse_deg2"}
    range_mse = {r["variant"]: r["value"] for r in rows if r["metric"] == "range_mse_m2"}
    failure_rate = max(
        r["value"] for r in rows if r["metric"] == "sensing_failure_rate"
    )
    gain = 10 * np.log10(aoa_mse["ls"] / aoa_mse["enhanced"])
    widest = max(noisy_cfg["sensing"]["bias_steps"])
    range_ls, range_enhanced = (range_mse[f"{v} nr{widest}"] for v in ("ls", "enhanced"))

    passed = (
        aoa_error <= AOA_TOLERANCE_DEG
        and range_error <= step_m
        and music_error <= step_m
        and gain >= REQUIRED_GAIN_DB
        and range_enhanced <= (1 + RANGE_MSE_MARGIN) * range_ls
        and failure_rate <= MAX_SENSING_FAILURE_RATE
    )
    return passed, (
        f"AoA error {aoa_error:.1e}°, LoS range error {range_error:.3f} m "
        f"(MUSIC oracle {music_error:.3f} m, r_δ {step_m:.3f} m), "
        f"AoA MSE gain {gain:.1f} dB at {snr_db:g} dB, LoS range MSE "
        f"{range_enhanced:.3g}/{range_ls:.3g} m² enhanced/LS, "
        f"{failures} sensing failures ({failure_rate:.1%} worst variant)"
    )


def check_ber_suite(cfg: ExperimentConfig, model: EnhancerModel) -> tuple[bool, str]:
    """Noiseless zero BER, enhanced no worse than LS, BER non-increasing in SNR.

    Scalar QPSK must also match theory.
    """
    seed = cfg["experiment"]["seed"]
    system = cfg["system"]
    packet_symbols = system["symbols_per_packet"] * system["num_subcarriers"]

    quiet = SystemConfig(**{**system, "noise_variance_w": 0.0})
    point = BerPoint(csi_source="perfect", snr_db=10.0, num_symbols=4 * packet_symbols)
    noiseless = [
        ber_run(make_static_scene(quiet), quiet, point,
                keyed_rng(seed, "trials", MONTE_CARLO_TRIALS + order), {"order": order})
        for order in (4, 16)
    ]

    link_cfg = copy.deepcopy(cfg)
    link_cfg["comm"].update(
        orders=[QPSK_ORDER],
        sources=["ls", "enhanced"],
        snr_list_db=list(BER_SNRS_DB),
        num_symbols=MIN_BER_BITS // 2,
    )
    rows = ber_rows(link_cfg, model)
    per_snr = {}
    for row in rows:
        per_snr.setdefault(row["snr_db"], {})[row["variant"]] = row["value"]
    enhanced_ok = all(v["enhanced"] <= v["ls"] for v in per_snr.values())
    monotone = all(
        per_snr[low][source] >= per_snr[high][source]
        for low, high in zip(sorted(per_snr), sorted(per_snr)[1:])
        for source in ("ls", "enhanced")
    )
    min_bits = min(row["sample_count"] for row in rows if row["variant"] != "theory")

    constellation = qam_constellation(QPSK_ORDER)
    deviations = []
    for ebn0_db in SCALAR_EBN0_DB:
        rng = keyed_rng(seed, "trials", 2 * MONTE_CARLO_TRIALS + int(ebn0_db))
        ebn0 = 10 ** (ebn0_db / 10)
        bits = rng.integers(0, 2, SCALAR_BITS)
        symbols = modulate(bits, constellation)
        y = symbols + complex_noise(rng, symbols.shape, 1 / (2 * ebn0))
        rx = demodulate_ml(y, np.ones(symbols.shape), 1.0, constellation)
        measured = float(np.mean(rx != bits))
        expected = float(qpsk_ber_theory(ebn0))
        sigma = np.sqrt(expected * (1 - expected) / SCALAR_BITS)
        deviations.append(abs(measured - expected) / sigma)

    passed = (
        all(ber == 0.0 for ber in noiseless)
        and enhanced_ok
        and monotone
        and min_bits >= MIN_BER_BITS
        and max(deviations) <= BINOMIAL_SIGMAS
    )
    pairs = ", ".join(
        f"{snr:g} dB {v['enhanced']:.2e}/{v['ls']:.2e}" for snr, v in per_snr.items()
    )
    return passed, (
        f"noiseless BER {noiseless}, enhanced/LS {pairs}, "
        f"monotone in SNR {monotone}, "
        f"scalar QPSK within {max(deviations):.2f} σ"
    )


def _reproducibility_config(cfg: ExperimentConfig) -> ExperimentConfig:
    small = copy.deepcopy(cfg)
    small["experiment"]["name"] = "reproducibility"
    small["system"]["num_subcarriers"] = 16
    small["data"].update(snr_list_db=[10.0], samples_per_snr=8, test_samples_per_snr=4)
    small["train"].update(epochs=2, batch_size=4)
    small["sensing"]["bias_steps"] = [10]
    small["comm"].update(
        orders=[QPSK_ORDER],
        sources=["ls", "enhanced"],
        snr_list_db=[10.0],
        num_symbols=small["system"]["symbols_per_packet"] * 16,
    )
    return small


def check_reproducibility(cfg: ExperimentConfig) -> tuple[bool, str]:
    """Two pipeline runs with one seed write byte-identical artifacts."""
    small = _reproducibility_config(cfg)
    runs = []
    for _ in range(2):
        with (
            tempfile.TemporaryDirectory() as tmp,
            mock.patch.object(config, "OUTPUTS_DIR", Path(tmp)),
        ):
            for command in (cmd_generate, cmd_train, cmd_eval, cmd_sense, cmd_ber):
                command(small)
            cmd_report(small)
            output_dir = experiment_output_dir(small)
            runs.append(
                {
                    path.name: path.read_bytes()
                    for path in sorted(output_dir.iterdir())
                    if path.suffix in (".csv", ".ckpt", ".bin")
                }
            )
    differing = sorted(name for name in runs[0] if runs[0][name] != runs[1].get(name))
    passed = not differing and runs[0].keys() == runs[1].keys()
    detail = f"{len(runs[0])} artifacts compared"
    if differing:
        detail += f", differing: {', '.join(differing)}"
    return passed, detail


# %% Runner
def _run_check(name: str, check: Callable[[], tuple[bool, str]]) -> CheckResult:
    logger.info(f"Running {name}...")
    start = time.perf_counter()
    try:
        passed, detail = check()
    except (ValueError, KeyError, np.linalg.LinAlgError) as err:
        passed, detail = False, f"raised {type(err).__name__}: {err}"
    seconds = time.perf_counter() - start
    mark = "✓" if passed else "✗"
    logger.info(f"{mark} {name}: {detail} ({seconds:.1f} s)")
    return CheckResult(name=name, passed=passed, detail=detail, seconds=seconds)


def run_validation(cfg: ExperimentConfig, quick: bool = False) -> list[CheckResult]:
    """Run the acceptance checks for a config, the fast subset when ``quick``."""
    seed = cfg["experiment"]["seed"]
    system = cfg["system"]

    def rng(index: int) -> np.random.Generator:
        return keyed_rng(seed, "trials", VALIDATION_PACKET_OFFSET + index)

    sweep_ranges = QUICK_SWEEP_RANGES if quick else SWEEP_RANGES
    checks: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
        ("transform round trip", lambda: check_transform_round_trip(rng(1))),
        ("complex layer oracle", lambda: check_layer_oracle(rng(2))),
        ("gradient check", lambda: check_gradients(rng(3))),
        (
            "biased FFT inequality",
            lambda: check_biased_fft_inequality(system, rng(5), sweep_ranges),
        ),
        ("path-count detector", lambda: check_path_count_detector(rng(9))),
        ("LMMSE versus LS", lambda: check_lmmse_gain(cfg)),
    ]
    results = [_run_check(name, check) for name, check in checks]
    if quick:
        return results

    logger.info("Training the desk-scale enhancer shared by the remaining checks...")
    run = train_desk_enhancer(cfg)
    checks = [
        ("desk training", lambda: check_desk_training(run)),
        ("biased FFT trend", lambda: check_biased_fft_trend(cfg)),
        ("MUSIC pipeline", lambda: check_music_pipeline(cfg, run["model"])),
        ("BER suite", lambda: check_ber_suite(cfg, run["model"])),
        ("reproducibility", lambda: check_reproducibility(cfg)),
    ]
    results.extend(_run_check(name, check) for name, check in checks)
    return results


def format_report(results: list[CheckResult]) -> str:
    """Results as a fixed-width table.

    >>> result = CheckResult(name="gradient check", passed=False, detail="", seconds=1.5)
    >>> report = format_report([result])
    >>> "FAIL" in report, "gradient check" in report
    (True, True)

    """
    df = pd.DataFrame(results, columns=["name", "passed", "detail", "seconds"])
    df["passed"] = df["passed"].map({True: "PASS", False: "FAIL"})
    df = df.rename(columns={"name": "check", "passed": "result"})
    return df.to_string(index=False, float_format=lambda v: f"{v:.2f}")

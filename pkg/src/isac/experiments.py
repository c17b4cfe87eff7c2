"""Experiment commands: generate, train, eval, sense, ber and report.

Every command reads and writes artifacts in the experiment's output directory,
so the commands can run one after another or be rerun on their own.
"""

# %% Imports
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from isac.channel import ChannelScene, keyed_rng
from isac.cnn import EnhancerModel, TrainRecord, init_model, train
from isac.comm import QPSK_ORDER, BerPoint, count_bit_errors, qpsk_ber_reference
from isac.config import (
    CHECKPOINT_FILE,
    DATASET_SPLITS,
    METRIC_CSVS,
    TRAINING_CSV,
    ExperimentConfig,
    SystemConfig,
    experiment_output_dir,
    range_grid_interval,
)
from isac.estimate import detect_num_paths
from isac.loaders import CheckpointInfo, load_checkpoint, load_dataset
from isac.processors import (
    CsiDataset,
    MetricRow,
    estimate_variants,
    generate_dataset,
    match_angles,
    metrics_frame,
    nmse_rows,
    normalized_autocorrelation,
    normalized_pairs,
    scene_for_packet,
    split_dataset,
    training_frame,
    training_set,
)
from isac.sensing import (
    biased_fft_config,
    biased_fft_range_estimate,
    fft_range_estimate,
    sense,
)
from isac.writers import save_checkpoint, write_csv, write_dataset, write_report

logger = logging.getLogger(__name__)


# %% Helpers
def dataset_path(cfg: ExperimentConfig, split: str) -> Path:
    """Location of one dataset split."""
    return experiment_output_dir(cfg) / f"{split}.bin"


def check_dimensions(
    info: CheckpointInfo, p: int, nc: int, allow_size_mismatch: bool
) -> None:
    """Reject CSI the checkpoint was not trained for.

    >>> info = CheckpointInfo(num_antennas=8, num_subcarriers=64)
    >>> check_dimensions(info, 8, 64, False)
    >>> check_dimensions(info, 8, 128, True)
    >>> check_dimensions(info, 8, 128, False)
    Traceback (most recent call last):
        ...
    ValueError: Checkpoint was trained on 8 × 64 CSI but the data is 8 × 128
    >>> check_dimensions(info, 4, 64, True)
    Traceback (most recent call last):
        ...
    ValueError: Checkpoint was trained on 8 × 64 CSI but the data is 4 × 64

    """
    trained = (info["num_antennas"], info["num_subcarriers"])
    if trained == (p, nc):
        return
    message = (
        f"Checkpoint was trained on {trained[0]} × {trained[1]} CSI "
        f"but the data is {p} × {nc}"
    )
    if allow_size_mismatch and trained[0] == p:
        logger.warning(f"⚠ {message}; continuing because eval.allow_size_mismatch is set")
        return
    raise ValueError(message)


def _load_model(cfg: ExperimentConfig, p: int, nc: int) -> EnhancerModel:
    model, info = load_checkpoint(experiment_output_dir(cfg) / CHECKPOINT_FILE)
    check_dimensions(info, p, nc, cfg["eval"]["allow_size_mismatch"])
    return model


def aggregate_records(records: list[dict]) -> list[MetricRow]:
    """Mean value and sample count per (SNR, metric, variant), first-seen order."""
    if not records:
        return []
    df = pd.DataFrame(records)
    grouped = df.groupby(["snr_db", "metric", "variant"], sort=False)["value"]
    summary = grouped.agg(value="mean", sample_count="size").reset_index()
    return [
        MetricRow(
            snr_db=float(row.snr_db),
            metric=row.metric,
            variant=row.variant,
            value=float(row.value),
            sample_count=int(row.sample_count),
        )
        for row in summary.itertuples(index=False)
    ]


# %% Pipeline steps
def simulate_splits(cfg: ExperimentConfig) -> dict[str, CsiDataset]:
    """Train, eval and test datasets of an experiment, keyed by split name.

    The first ``samples_per_snr`` packets per SNR are shuffled and split into
    train and eval sets; the test set is drawn from the packets after them.
    """
    data = cfg["data"]
    seed = cfg["experiment"]["seed"]
    pool = generate_dataset(cfg, data["samples_per_snr"])
    train_set, eval_set = split_dataset(
        pool, data["train_fraction"], keyed_rng(seed, "split")
    )
    test_set = generate_dataset(
        cfg, data["test_samples_per_snr"], first_packet=len(pool["snr_db"])
    )
    return dict(zip(DATASET_SPLITS, (train_set, eval_set, test_set), strict=True))


def fit_enhancer(
    cfg: ExperimentConfig, train_data: CsiDataset, eval_data: CsiDataset
) -> tuple[EnhancerModel, list[TrainRecord]]:
    """Initialise and train the enhancer with the experiment's hyperparameters."""
    seed = cfg["experiment"]["seed"]
    hyper = cfg["train"]
    model = init_model(
        tuple(hyper["hidden_channels"]),
        keyed_rng(seed, "init"),
        slope=hyper["slope"],
        identity_shortcuts=hyper["identity_shortcuts"],
    )
    logger.info(
        f"Training {tuple(hyper['hidden_channels'])} enhancer for {hyper['epochs']} "
        f"epochs on {len(train_data['snr_db'])} samples..."
    )
    return train(
        model, training_set(train_data, eval_data), hyper, keyed_rng(seed, "batches")
    )


# %% Commands
def cmd_generate(cfg: ExperimentConfig) -> dict[str, Path]:
    """Simulate the train, eval and test datasets and write them to disk."""
    seed = cfg["experiment"]["seed"]
    logger.info(f"Generating {cfg['experiment']['scene']} datasets (seed {seed})...")
    splits = simulate_splits(cfg)
    paths = {
        name: write_dataset(split, dataset_path(cfg, name))
        for name, split in splits.items()
    }
    sizes = ", ".join(f"{len(split['snr_db'])} {name}" for name, split in splits.items())
    logger.info(f"✓ Datasets written: {sizes} samples")
    return paths


def cmd_train(cfg: ExperimentConfig) -> Path:
    """Train the enhancer on the train split and save a checkpoint plus training.csv."""
    train_data = load_dataset(dataset_path(cfg, "train"))
    eval_data = load_dataset(dataset_path(cfg, "eval"))
    _, p, nc = train_data["noisy"].shape
    trained, records = fit_enhancer(cfg, train_data, eval_data)

    output_dir = experiment_output_dir(cfg)
    info = CheckpointInfo(num_antennas=p, num_subcarriers=nc)
    checkpoint = save_checkpoint(trained, info, output_dir / CHECKPOINT_FILE)
    write_csv(training_frame(records), output_dir / TRAINING_CSV)
    if records:
        logger.info(f"✓ Final eval NMSE {records[-1]['eval_nmse_db']:.2f} dB")
    return checkpoint


def cmd_eval(cfg: ExperimentConfig) -> Path:
    """NMSE per SNR of every estimator variant on the test split."""
    test_data = load_dataset(dataset_path(cfg, "test"))
    _, p, nc = test_data["noisy"].shape
    model = _load_model(cfg, p, nc)
    r_hh_norm = normalized_autocorrelation(load_dataset(dataset_path(cfg, "train")))

    variants = estimate_variants(test_data, model, r_hh_norm)
    rows = [
        row
        for variant, estimates in variants.items()
        for row in nmse_rows(test_data, estimates, variant)
    ]
    for row in rows:
        logger.info(
            f"  {row['variant']:>8} at {row['snr_db']:5.1f} dB: {row['value']:8.2f} dB"
        )
    return write_csv(
        metrics_frame(rows), experiment_output_dir(cfg) / METRIC_CSVS["nmse"]
    )


def sensing_records(
    cfg: ExperimentConfig, dataset: CsiDataset, variants: dict[str, np.ndarray]
) -> tuple[list[dict], int]:
    """Squared AoA and LoS range errors of every sample and CSI variant.

    Every variant of a sample is sensed with the path count detected on its LS
    estimate, unless the configuration fixes one. Each attempt also adds a
    ``sensing_failure_rate`` record, 1.0 when sensing raised or the LoS path went
    unresolved, so failed samples stay in the sample count.

    Returns:
        Tuple of (metric records, number of failed sample/variant pairs)
    """
    system = cfg["system"]
    bias_steps = cfg["sensing"]["bias_steps"]
    fixed_paths = cfg["sensing"]["num_paths"] or None
    grid = range_grid_interval(system)
    configs = [biased_fft_config(system, steps) for steps in bias_steps]
    path_counts = [
        fixed_paths or detect_num_paths(h_ls) for h_ls in dataset["noisy"]
    ]

    records, failures = [], 0
    for variant, estimates in variants.items():
        for index, h in enumerate(estimates):
            snr_db = float(dataset["snr_db"][index])
            sensed = _sense_sample(
                h, dataset["scenes"][index], path_counts[index], system, bias_steps[0]
            )
            failed = sensed is None
            failures += failed
            records.append(
                {"snr_db": snr_db, "metric": "sensing_failure_rate",
                 "variant": variant, "value": float(failed)}
            )
            if failed:
                logger.debug(f"LoS not sensed on sample {index} ({variant})")
                continue

            errors, filtered, true_range = sensed
            records.extend(
                {"snr_db": snr_db, "metric": "aoa_mse_deg2",
                 "variant": variant, "value": error}
                for error in errors
            )
            ranges = {f"{variant} fft": fft_range_estimate(filtered, grid)}
            for steps, config in zip(bias_steps, configs, strict=True):
                ranges[f"{variant} nr{steps}"] = biased_fft_range_estimate(
                    filtered, config
                )
            records.extend(
                {"snr_db": snr_db, "metric": "range_mse_m2",
                 "variant": name, "value": (estimate - true_range) ** 2}
                for name, estimate in ranges.items()
            )
    return records, failures


def _sense_sample(
    h: np.ndarray,
    scene: ChannelScene,
    num_paths: int,
    system: SystemConfig,
    bias_steps: int,
) -> tuple[list[float], np.ndarray, float] | None:
    """Matched squared AoA errors, LoS-filtered response and true LoS range.

    None when sensing raises or no estimate is paired with the LoS path.
    """
    true_aoa = [path["aoa_deg"] for path in scene["paths"]]
    try:
        report = sense(h, system, bias_steps, num_paths)
    except (ValueError, np.linalg.LinAlgError) as err:
        logger.debug(f"Sensing failed: {err}")
        return None

    estimated = report["aoa"]["angles_deg"]
    errors, los_slot = [], None
    for est_index, true_index in match_angles(estimated, true_aoa):
        errors.append((estimated[est_index] - true_aoa[true_index]) ** 2)
        if true_index == 0:
            los_slot = est_index
    if los_slot is None:
        return None
    filtered = report["beamformers"][:, los_slot].conj() @ h
    return errors, filtered, scene["paths"][0]["range_m"]


def cmd_sense(cfg: ExperimentConfig) -> Path:
    """AoA and LoS range MSE per SNR from perfect, baseline and enhanced CSI."""
    test_data = load_dataset(dataset_path(cfg, "test"))
    _, p, nc = test_data["noisy"].shape
    model = _load_model(cfg, p, nc)
    r_hh_norm = normalized_autocorrelation(load_dataset(dataset_path(cfg, "train")))

    _, targets = normalized_pairs(test_data)
    variants = {"perfect": targets, **estimate_variants(test_data, model, r_hh_norm)}
    logger.info(
        f"Sensing {len(test_data['snr_db'])} samples with "
        f"N_r in {cfg['sensing']['bias_steps']}..."
    )
    records, failures = sensing_records(cfg, test_data, variants)
    if failures:
        logger.warning(f"⚠ LoS not sensed on {failures} sample/variant pairs")
    return write_csv(
        metrics_frame(aggregate_records(records)),
        experiment_output_dir(cfg) / METRIC_CSVS["sensing"],
    )


def ber_rows(
    cfg: ExperimentConfig,
    model: EnhancerModel | None = None,
    r_hh_norm: np.ndarray | None = None,
) -> list[MetricRow]:
    """BER per SNR for every constellation and CSI source, plus the 4-QAM theory.

    Packet t of every point uses the scene of packet t and the link noise stream
    of (t, SNR), shared by every source and order.
    """
    seed = cfg["experiment"]["seed"]
    system = cfg["system"]
    comm = cfg["comm"]
    nc = system["num_subcarriers"]
    packet_symbols = system["symbols_per_packet"] * nc
    num_packets = max(1, -(-comm["num_symbols"] // packet_symbols))
    snr_list = comm["snr_list_db"]
    logger.info(
        f"Simulating {num_packets} packets per point over {len(snr_list)} SNRs..."
    )

    scenes = [scene_for_packet(cfg, packet) for packet in range(num_packets)]
    rows: list[MetricRow] = []
    for snr_index, snr_db in enumerate(snr_list):
        for order in comm["orders"]:
            for source in comm["sources"]:
                errors = bits = 0
                for packet, scene in enumerate(scenes):
                    trial = packet * len(snr_list) + snr_index
                    rng = keyed_rng(seed, "link_noise", trial)
                    point = BerPoint(csi_source=source, snr_db=snr_db, num_symbols=1)
                    counts = count_bit_errors(
                        scene, system, point, rng,
                        {"order": order, "model": model, "r_hh_norm": r_hh_norm,
                         "first_packet": packet},
                    )
                    errors += counts["bit_errors"]
                    bits += counts["total_bits"]
                ber = errors / bits if bits else float("nan")
                rows.append(
                    MetricRow(snr_db=float(snr_db), metric=f"ber_qam{order}",
                              variant=source, value=ber, sample_count=bits)
                )
                logger.info(
                    f"  {order:>2}-QAM {source:>8} at {snr_db:5.1f} dB: "
                    f"BER {ber:.3e}"
                )
        if QPSK_ORDER in comm["orders"] and system["noise_variance_w"] > 0:
            theory = np.mean(
                [
                    qpsk_ber_reference(scene, system, snr_db, packet)
                    for packet, scene in enumerate(scenes)
                ]
            )
            rows.append(
                MetricRow(snr_db=float(snr_db), metric="ber_qam4", variant="theory",
                          value=float(theory), sample_count=num_packets)
            )
    return rows


def cmd_ber(cfg: ExperimentConfig) -> Path:
    """Simulate the BER curves and write ber.csv."""
    system = cfg["system"]
    sources = cfg["comm"]["sources"]
    p, nc = system["num_antennas"], system["num_subcarriers"]
    model = _load_model(cfg, p, nc) if "enhanced" in sources else None
    r_hh_norm = None
    if "lmmse" in sources:
        train_data = load_dataset(dataset_path(cfg, "train"))
        r_hh_norm = normalized_autocorrelation(train_data)
    rows = ber_rows(cfg, model, r_hh_norm)
    return write_csv(metrics_frame(rows), experiment_output_dir(cfg) / METRIC_CSVS["ber"])


def cmd_report(cfg: ExperimentConfig) -> tuple[Path, Path]:
    """Concatenate the metric CSVs into report.csv and the report workbook."""
    output_dir = experiment_output_dir(cfg)
    frames = []
    for name, file_name in METRIC_CSVS.items():
        path = output_dir / file_name
        if path.exists():
            frames.append(pd.read_csv(path))
        else:
            logger.warning(f"⚠ No {name} metrics at {path}, leaving them out")
    metrics = pd.concat(frames, ignore_index=True) if frames else metrics_frame([])
    training_path = output_dir / TRAINING_CSV
    training = pd.read_csv(training_path) if training_path.exists() else None
    return write_report(metrics, training, output_dir)

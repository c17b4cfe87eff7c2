"""Dataset assembly, estimator variants and metric-table shaping."""

# %% Imports
import logging
from typing import TypedDict

import numpy as np
import pandas as pd
from scipy import optimize

from isac.channel import (
    ChannelScene,
    draw_reflection,
    keyed_rng,
    link_config,
    make_dynamic_scene,
    make_static_scene,
    observe_packet,
    true_csi,
)
from isac.cnn import EnhancerModel, TrainingSet, TrainRecord, forward, nmse_db
from isac.config import CSV_COLUMNS, ExperimentConfig
from isac.estimate import (
    dft_denoise_estimate,
    lmmse_estimate,
    ls_estimate_packet,
    normalize,
    sample_autocorrelation,
)

logger = logging.getLogger(__name__)


class CsiDataset(TypedDict):
    """Stacked samples, one packet each, with the scene that produced them."""

    snr_db: np.ndarray
    signal_power: np.ndarray
    packet_index: np.ndarray
    noisy: np.ndarray
    true: np.ndarray
    scenes: list[ChannelScene]


class MetricRow(TypedDict):
    """One row of a metric CSV."""

    snr_db: float
    metric: str
    variant: str
    value: float
    sample_count: int


# %% Dataset assembly
def scene_for_packet(cfg: ExperimentConfig, packet: int) -> ChannelScene:
    """Ground-truth scene of one packet.

    The scatterer's reflecting factor is drawn once per seed; dynamic scenes redraw
    the UE range and velocity from the packet's own stream.

    >>> from isac.config import default_experiment_config
    >>> cfg = default_experiment_config()
    >>> cfg["experiment"]["scene"] = "static"
    >>> scene_for_packet(cfg, 0) == scene_for_packet(cfg, 7)
    True
    >>> cfg["experiment"]["scene"] = "dynamic"
    >>> a, b = scene_for_packet(cfg, 0), scene_for_packet(cfg, 1)
    >>> a["paths"][0]["range_m"] != b["paths"][0]["range_m"]
    True
    >>> a["paths"][1] == b["paths"][1]
    True

    """
    seed = cfg["experiment"]["seed"]
    system = cfg["system"]
    if cfg["experiment"]["scene"] == "static":
        return make_static_scene(system, keyed_rng(seed, "reflection"))
    beta = draw_reflection(keyed_rng(seed, "reflection"))
    return make_dynamic_scene(keyed_rng(seed, "scene", packet), system, beta)


def generate_dataset(
    cfg: ExperimentConfig, samples_per_snr: int, first_packet: int = 0
) -> CsiDataset:
    """Simulate LS estimates of consecutive packets at every configured SNR.

    Packets are numbered from ``first_packet`` in SNR-major order; each packet's
    scene and pilot noise come from streams keyed by its number.

    Args:
        cfg: Experiment configuration
        samples_per_snr: Packets per SNR value
        first_packet: Index of the first packet

    Returns:
        CsiDataset with ``len(snr_list_db) × samples_per_snr`` samples

    >>> from isac.config import default_experiment_config
    >>> cfg = default_experiment_config()
    >>> cfg["system"]["num_subcarriers"] = 16
    >>> cfg["data"]["snr_list_db"] = [10.0]
    >>> data = generate_dataset(cfg, 2)
    >>> data["noisy"].shape, data["packet_index"].tolist()
    ((2, 8, 16), [0, 1])
    >>> again = generate_dataset(cfg, 2)
    >>> bool(np.array_equal(data["noisy"], again["noisy"]))
    True

    # Noiseless runs return the true CSI as the LS estimate
    >>> cfg["system"]["noise_variance_w"] = 0.0
    >>> quiet = generate_dataset(cfg, 2)
    >>> error = np.abs(quiet["noisy"] - quiet["true"]).max()
    >>> bool(error <= 1e-9 * np.abs(quiet["true"]).max())
    True
    >>> bool(np.all(quiet["signal_power"] > 0))
    True

    """
    system = cfg["system"]
    seed = cfg["experiment"]["seed"]
    snr_tags, powers, packets, noisy, true, scenes = [], [], [], [], [], []
    packet = first_packet
    for snr_db in cfg["data"]["snr_list_db"]:
        logger.info(f"Generating {samples_per_snr} packets at {snr_db:g} dB...")
        for _ in range(samples_per_snr):
            scene = scene_for_packet(cfg, packet)
            link = link_config(system, snr_db, scene)
            h = true_csi(scene, link, packet)
            y = observe_packet(h, link, keyed_rng(seed, "noise", packet))
            h_ls = ls_estimate_packet(y, link)
            _, report = normalize(h_ls)

            snr_tags.append(float(snr_db))
            powers.append(report["signal_power_est"])
            packets.append(packet)
            noisy.append(h_ls)
            true.append(h)
            scenes.append(scene)
            packet += 1

    shape = (0, system["num_antennas"], system["num_subcarriers"])
    return CsiDataset(
        snr_db=np.array(snr_tags, dtype=float),
        signal_power=np.array(powers, dtype=float),
        packet_index=np.array(packets, dtype=np.int64),
        noisy=np.array(noisy) if noisy else np.zeros(shape, dtype=complex),
        true=np.array(true) if true else np.zeros(shape, dtype=complex),
        scenes=scenes,
    )


def subset(dataset: CsiDataset, indices: np.ndarray) -> CsiDataset:
    """Samples at ``indices``, in that order."""
    indices = np.asarray(indices, dtype=np.int64)
    return CsiDataset(
        snr_db=dataset["snr_db"][indices],
        signal_power=dataset["signal_power"][indices],
        packet_index=dataset["packet_index"][indices],
        noisy=dataset["noisy"][indices],
        true=dataset["true"][indices],
        scenes=[dataset["scenes"][i] for i in indices],
    )


def split_dataset(
    dataset: CsiDataset, train_fraction: float, rng: np.random.Generator
) -> tuple[CsiDataset, CsiDataset]:
    """Shuffle and cut into (train, eval) with the first share going to training.

    >>> data = CsiDataset(snr_db=np.arange(8.0), signal_power=np.ones(8),
    ...                   packet_index=np.arange(8), noisy=np.zeros((8, 1, 1)),
    ...                   true=np.zeros((8, 1, 1)), scenes=[{}] * 8)
    >>> train, held = split_dataset(data, 0.75, np.random.default_rng(0))
    >>> len(train["snr_db"]), len(held["snr_db"])
    (6, 2)
    >>> merged = np.concatenate([train["snr_db"], held["snr_db"]])
    >>> sorted(merged.tolist()) == list(range(8))
    True

    """
    order = rng.permutation(len(dataset["snr_db"]))
    cut = int(round(train_fraction * len(order)))
    return subset(dataset, order[:cut]), subset(dataset, order[cut:])


def normalized_pairs(dataset: CsiDataset) -> tuple[np.ndarray, np.ndarray]:
    """Enhancer inputs and targets, both divided by each sample's √ρ_h²."""
    scale = np.sqrt(dataset["signal_power"])[:, None, None]
    return dataset["noisy"] / scale, dataset["true"] / scale


def training_set(train: CsiDataset, held_out: CsiDataset) -> TrainingSet:
    """Normalised training and evaluation pairs for ``cnn.train``."""
    train_inputs, train_targets = normalized_pairs(train)
    eval_inputs, eval_targets = normalized_pairs(held_out)
    return TrainingSet(
        train_inputs=train_inputs,
        train_targets=train_targets,
        eval_inputs=eval_inputs,
        eval_targets=eval_targets,
    )


# %% Estimator variants
def estimate_variants(
    dataset: CsiDataset,
    model: EnhancerModel | None = None,
    r_hh_norm: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Normalised CSI estimates of every available variant.

    ``ls`` and ``dft`` are always present; ``lmmse`` needs the normalised
    autocorrelation and ``enhanced`` a trained model.

    >>> from isac.config import default_experiment_config
    >>> cfg = default_experiment_config()
    >>> cfg["system"]["num_subcarriers"] = 16
    >>> cfg["data"]["snr_list_db"] = [10.0]
    >>> data = generate_dataset(cfg, 2)
    >>> sorted(estimate_variants(data))
    ['dft', 'ls']

    """
    inputs, _ = normalized_pairs(dataset)
    noise_vars = []
    for h_ls in dataset["noisy"]:
        _, report = normalize(h_ls)
        noise_vars.append(report["noise_var_est"] / report["signal_power_est"])

    variants = {
        "ls": inputs,
        "dft": np.array(
            [
                dft_denoise_estimate(h, var)
                for h, var in zip(inputs, noise_vars, strict=True)
            ]
        ),
    }
    if r_hh_norm is not None:
        variants["lmmse"] = np.array(
            [
                lmmse_estimate(h, r_hh_norm, var)
                for h, var in zip(inputs, noise_vars, strict=True)
            ]
        )
    if model is not None:
        variants["enhanced"] = forward(model, inputs)
    return variants


def normalized_autocorrelation(dataset: CsiDataset) -> np.ndarray:
    """Antenna autocorrelation of the normalised true CSI of a dataset."""
    _, targets = normalized_pairs(dataset)
    return sample_autocorrelation(targets)


# %% Metric tables
def nmse_rows(
    dataset: CsiDataset, estimates: np.ndarray, variant: str
) -> list[MetricRow]:
    """Energy-weighted NMSE per SNR in the normalised domain, floored at -120 dB.

    >>> data = CsiDataset(snr_db=np.array([5.0, 5.0, 10.0]), signal_power=np.ones(3),
    ...                   packet_index=np.arange(3), noisy=np.zeros((3, 1, 2)),
    ...                   true=np.ones((3, 1, 2)), scenes=[{}] * 3)
    >>> rows = nmse_rows(data, np.ones((3, 1, 2)) * 0.5, "ls")
    >>> [(r["snr_db"], round(r["value"], 4), r["sample_count"]) for r in rows]
    [(5.0, -6.0206, 2), (10.0, -6.0206, 1)]
    >>> nmse_rows(data, np.ones((3, 1, 2)), "ls")[0]["value"]
    -120.0

    """
    _, targets = normalized_pairs(dataset)
    rows = []
    for snr_db in np.unique(dataset["snr_db"]):
        mask = dataset["snr_db"] == snr_db
        rows.append(
            MetricRow(
                snr_db=float(snr_db),
                metric="nmse_db",
                variant=variant,
                value=nmse_db(targets[mask], estimates[mask]),
                sample_count=int(mask.sum()),
            )
        )
    return rows


def match_angles(
    estimated_deg: list[float], true_deg: list[float]
) -> list[tuple[int, int]]:
    """Pair estimated and true AoAs minimising the total absolute error.

    >>> match_angles([59.0, 31.0], [30.0, 59.5])
    [(0, 1), (1, 0)]
    >>> match_angles([29.0], [30.0, 59.5])
    [(0, 0)]

    """
    cost = np.abs(np.subtract.outer(np.asarray(estimated_deg), np.asarray(true_deg)))
    rows, cols = optimize.linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols, strict=True)]


def metrics_frame(rows: list[MetricRow]) -> pd.DataFrame:
    """Rows as a DataFrame with the CSV column order.

    >>> metrics_frame([]).columns.tolist()
    ['snr_db', 'metric', 'variant', 'value', 'sample_count']

    """
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def training_frame(records: list[TrainRecord]) -> pd.DataFrame:
    """Per-epoch training records as a DataFrame."""
    return pd.DataFrame(records, columns=["epoch", "train_nmse_db", "eval_nmse_db"])


def pivot_metrics(df: pd.DataFrame, metrics: tuple[str, ...]) -> pd.DataFrame:
    """SNR rows by variant columns for the selected metrics.

    Columns are named ``variant`` for one metric and ``metric variant`` otherwise.

    >>> df = metrics_frame([
    ...     MetricRow(snr_db=0.0, metric="ber_qam4", variant="ls", value=0.1,
    ...               sample_count=10),
    ...     MetricRow(snr_db=0.0, metric="ber_qam16", variant="ls", value=0.3,
    ...               sample_count=10),
    ...     MetricRow(snr_db=5.0, metric="ber_qam4", variant="ls", value=0.01,
    ...               sample_count=10),
    ... ])
    >>> pivot_metrics(df, ("ber_qam4",)).to_dict("list")
    {'snr_db': [0.0, 5.0], 'ls': [0.1, 0.01]}
    >>> pivot_metrics(df, ("ber_qam4", "ber_qam16")).columns.tolist()
    ['snr_db', 'ber_qam4 ls', 'ber_qam16 ls']

    """
    selected = df[df["metric"].isin(metrics)].copy()
    if selected.empty:
        return pd.DataFrame(columns=["snr_db"])
    if len(metrics) == 1:
        selected["column"] = selected["variant"]
    else:
        selected["column"] = selected["metric"] + " " + selected["variant"]
    order = list(dict.fromkeys(selected["column"]))
    table = selected.pivot_table(
        index="snr_db", columns="column", values="value", aggfunc="first"
    )
    table = table.reindex(columns=order).reset_index()
    table.columns.name = None
    return table

"""Configuration for ISAC simulation constants, schemas, and experiment settings."""

import copy
import os
import tomllib
from pathlib import Path
from typing import Any, TypedDict

BASE_DIR = Path(__file__).parent.parent.parent
DATA_DIR = BASE_DIR / "data"
CONFIGS_DIR = BASE_DIR / "configs"
OUTPUT_DIR_ENV = "ISAC_OUTPUT_DIR"
OUTPUTS_DIR = Path(os.environ.get(OUTPUT_DIR_ENV, DATA_DIR / "outputs"))

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact

# System defaults (carrier, numerology, array, noise)
CARRIER_FREQ_HZ = 28e9
SUBCARRIER_SPACING_HZ = 480e3
NUM_SUBCARRIERS = 256
NUM_ANTENNAS = 8
SYMBOLS_PER_PACKET = 14
NOISE_VARIANCE_W = 4.9177e-12
CODEBOOK_LENGTH = 14

# Static scene geometry
STATIC_LOS_AOA_DEG = 30.0
STATIC_NLOS_AOA_DEG = 59.5
STATIC_LOS_RANGE_M = 91.26
STATIC_NLOS_RANGES_M = (28.7, 71.6)

# Dynamic scene draws
DYNAMIC_RANGE_BOUNDS_M = (5.0, 150.0)
DYNAMIC_VELOCITY_BOUNDS_MPS = (-10.0, 10.0)

# Estimation
PATH_COUNT_EPSILON = 0.5
EIGEN_GAP_FLOOR = 1e-12  # relative to the largest eigenvalue
HERMITIAN_TOLERANCE = 1e-9
RANK_TOLERANCE = 1e-10

# CNN
KERNEL_SIZE = 3
HIDDEN_CHANNELS = (4, 4)
LEAKY_SLOPE = 0.01
LEARNING_RATE = 1e-3
DESK_BATCH_SIZE = 8
ADAM_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8

# Sensing
AOA_GRID_STEP_DEG = 0.5
NEWTON_STEP_DEG = 1e-4
NEWTON_TOLERANCE_DEG = 1e-5
NEWTON_MAX_ITERATIONS = 20

# Communication
MIN_CHANNEL_GAIN = 1e-15

# Reporting
NMSE_FLOOR_DB = -120.0
CSV_COLUMNS = ["snr_db", "metric", "variant", "value", "sample_count"]
CSV_FLOAT_FORMAT = "%.10g"

# Binary artifacts
DATASET_MAGIC = b"ISACCSI1"
DATASET_VERSION = 1
CHECKPOINT_MAGIC = b"ISACCNN1"
CHECKPOINT_VERSION = 1
SAMPLE_HEADER_WIDTH = 4  # snr_db, signal power, path count, packet index
PATH_RECORD_WIDTH = 5  # aoa, range, doppler, attenuation re/im

# Artifact file names inside an experiment directory
DATASET_SPLITS = ("train", "eval", "test")
CHECKPOINT_FILE = "model.ckpt"
TRAINING_CSV = "training.csv"
METRIC_CSVS = {"nmse": "nmse.csv", "sensing": "sensing.csv", "ber": "ber.csv"}
REPORT_CSV = "report.csv"
REPORT_XLSX = "report.xlsx"
REPORT_SHEETS = {
    "NMSE": ("nmse_db",),
    "BER": ("ber_qam4", "ber_qam16"),
    "AoA": ("aoa_mse_deg2",),
    "Range": ("range_mse_m2",),
    "Failures": ("sensing_failure_rate",),
}
HEADER_FILL_COLOR = "DDEBF7"

SCENE_KINDS = ("static", "dynamic")
CSI_SOURCES = ("perfect", "ls", "lmmse", "enhanced")
QAM_ORDERS = (4, 16)

# Keys of the independent random streams derived from the experiment seed
RNG_STREAMS = {
    "scene": 0,
    "noise": 1,
    "split": 2,
    "init": 3,
    "batches": 4,
    "link_noise": 5,
    "trials": 6,
    "reflection": 7,
}


class SystemConfig(TypedDict):
    """Physical-layer parameters shared by every module."""

    carrier_freq_hz: float
    subcarrier_spacing_hz: float
    num_subcarriers: int
    num_antennas: int
    antenna_spacing_m: float
    symbols_per_packet: int
    symbol_duration_s: float
    noise_variance_w: float
    transmit_power_w: float
    codebook_length: int


class ExperimentSection(TypedDict):
    """Experiment identity and reproducibility settings."""

    name: str
    seed: int
    scene: str


class DataSection(TypedDict):
    """Dataset generation settings."""

    snr_list_db: list[float]
    samples_per_snr: int
    test_samples_per_snr: int
    train_fraction: float
    eval_fraction: float


class TrainSection(TypedDict):
    """Enhancer training hyperparameters."""

    epochs: int
    batch_size: int
    learning_rate: float
    hidden_channels: list[int]
    slope: float
    identity_shortcuts: bool


class EvalSection(TypedDict):
    """Evaluation settings."""

    allow_size_mismatch: bool


class SensingSection(TypedDict):
    """Sensing sweep settings."""

    bias_steps: list[int]
    num_paths: int


class CommSection(TypedDict):
    """BER sweep settings."""

    orders: list[int]
    sources: list[str]
    snr_list_db: list[float]
    num_symbols: int


class ExperimentConfig(TypedDict):
    """Complete experiment description, one section per concern."""

    experiment: ExperimentSection
    system: SystemConfig
    data: DataSection
    train: TrainSection
    eval: EvalSection
    sensing: SensingSection
    comm: CommSection


def default_system_config(**overrides: Any) -> SystemConfig:
    """Build the default system configuration, optionally overriding fields.

    The antenna spacing defaults to half the carrier wavelength and the OFDM
    symbol duration to ``1/Δf``.

    >>> cfg = default_system_config(num_subcarriers=64)
    >>> cfg["num_subcarriers"], cfg["num_antennas"]
    (64, 8)
    >>> round(cfg["antenna_spacing_m"] * 1e3, 4)
    5.3534
    >>> default_system_config(num_rows=3)
    Traceback (most recent call last):
        ...
    KeyError: "Unknown system setting: 'num_rows'"

    """
    carrier = overrides.get("carrier_freq_hz", CARRIER_FREQ_HZ)
    spacing = overrides.get("subcarrier_spacing_hz", SUBCARRIER_SPACING_HZ)
    cfg = SystemConfig(
        carrier_freq_hz=carrier,
        subcarrier_spacing_hz=spacing,
        num_subcarriers=NUM_SUBCARRIERS,
        num_antennas=NUM_ANTENNAS,
        antenna_spacing_m=SPEED_OF_LIGHT / carrier / 2,
        symbols_per_packet=SYMBOLS_PER_PACKET,
        symbol_duration_s=1.0 / spacing,
        noise_variance_w=NOISE_VARIANCE_W,
        transmit_power_w=1.0,
        codebook_length=CODEBOOK_LENGTH,
    )
    for key, value in overrides.items():
        if key not in cfg:
            raise KeyError(f"Unknown system setting: '{key}'")
        cfg[key] = value
    validate_system_config(cfg)
    return cfg


def validate_system_config(cfg: SystemConfig) -> None:
    """Check that a system configuration is physically meaningful.

    >>> cfg = default_system_config()
    >>> cfg["antenna_spacing_m"] = 0.0
    >>> validate_system_config(cfg)
    Traceback (most recent call last):
        ...
    ValueError: antenna_spacing_m must be positive, got 0.0

    """
    for key in (
        "carrier_freq_hz",
        "subcarrier_spacing_hz",
        "antenna_spacing_m",
        "symbol_duration_s",
        "transmit_power_w",
    ):
        if not cfg[key] > 0:
            raise ValueError(f"{key} must be positive, got {cfg[key]}")
    counts = ("num_subcarriers", "num_antennas", "symbols_per_packet", "codebook_length")
    for key in counts:
        if int(cfg[key]) < 1:
            raise ValueError(f"{key} must be at least 1, got {cfg[key]}")
    if cfg["noise_variance_w"] < 0:
        raise ValueError(f"noise_variance_w must be >= 0, got {cfg['noise_variance_w']}")


def wavelength(cfg: SystemConfig) -> float:
    """Carrier wavelength λ = c / f_c in metres.

    >>> round(wavelength(default_system_config()) * 1e3, 4)
    10.7069

    """
    return SPEED_OF_LIGHT / cfg["carrier_freq_hz"]


def packet_interval(cfg: SystemConfig) -> float:
    """Packet interval T_s^p = P_s · T_s in seconds."""
    return cfg["symbols_per_packet"] * cfg["symbol_duration_s"]


def range_grid_interval(cfg: SystemConfig) -> float:
    """Delay-domain grid interval Δr = c / (N_c · Δf) in metres.

    >>> cfg = default_system_config()
    >>> round(range_grid_interval(cfg), 4)
    2.4397

    """
    return SPEED_OF_LIGHT / (cfg["num_subcarriers"] * cfg["subcarrier_spacing_hz"])


DEFAULT_EXPERIMENT: dict[str, dict[str, Any]] = {
    "experiment": {"name": "desk", "seed": 2024, "scene": "dynamic"},
    "system": {
        "carrier_freq_hz": CARRIER_FREQ_HZ,
        "subcarrier_spacing_hz": SUBCARRIER_SPACING_HZ,
        "num_subcarriers": 64,
        "num_antennas": NUM_ANTENNAS,
        "antenna_spacing_m": SPEED_OF_LIGHT / CARRIER_FREQ_HZ / 2,
        "symbols_per_packet": SYMBOLS_PER_PACKET,
        "symbol_duration_s": 1.0 / SUBCARRIER_SPACING_HZ,
        "noise_variance_w": NOISE_VARIANCE_W,
        "transmit_power_w": 1.0,
        "codebook_length": CODEBOOK_LENGTH,
    },
    "data": {
        "snr_list_db": [0.0, 5.0, 10.0, 15.0],
        "samples_per_snr": 200,
        "test_samples_per_snr": 100,
        "train_fraction": 0.75,
        "eval_fraction": 0.25,
    },
    "train": {
        "epochs": 30,
        "batch_size": DESK_BATCH_SIZE,
        "learning_rate": LEARNING_RATE,
        "hidden_channels": list(HIDDEN_CHANNELS),
        "slope": LEAKY_SLOPE,
        "identity_shortcuts": True,
    },
    "eval": {"allow_size_mismatch": False},
    "sensing": {"bias_steps": [10, 50, 200], "num_paths": 0},
    "comm": {
        "orders": list(QAM_ORDERS),
        "sources": list(CSI_SOURCES),
        "snr_list_db": [0.0, 5.0, 10.0, 15.0],
        "num_symbols": 50_000,
    },
}


def default_experiment_config() -> ExperimentConfig:
    """Return a fresh copy of the desk-scale experiment configuration.

    >>> cfg = default_experiment_config()
    >>> cfg["system"]["num_subcarriers"], cfg["data"]["snr_list_db"]
    (64, [0.0, 5.0, 10.0, 15.0])

    """
    return copy.deepcopy(DEFAULT_EXPERIMENT)  # type: ignore[return-value]


def merge_config(base: dict[str, Any], updates: dict[str, Any]) -> dict[str, Any]:
    """Merge a parsed config file into a base config, rejecting unknown keys.

    >>> merged = merge_config(default_experiment_config(), {"train": {"epochs": 3}})
    >>> merged["train"]["epochs"], merged["train"]["batch_size"]
    (3, 8)
    >>> merge_config(default_experiment_config(), {"training": {"epochs": 3}})
    Traceback (most recent call last):
        ...
    KeyError: "Unknown config section: 'training'"
    >>> merge_config(default_experiment_config(), {"train": {"epoch": 3}})
    Traceback (most recent call last):
        ...
    KeyError: "Unknown config key: 'train.epoch'"

    """
    merged = copy.deepcopy(base)
    for section, values in updates.items():
        if section not in merged:
            raise KeyError(f"Unknown config section: '{section}'")
        if not isinstance(values, dict):
            raise ValueError(f"Config section '{section}' must be a table")
        for key, value in values.items():
            if key not in merged[section]:
                raise KeyError(f"Unknown config key: '{section}.{key}'")
            merged[section][key] = value
    return merged


def parse_override(assignment: str) -> dict[str, dict[str, Any]]:
    """Parse a ``section.key=value`` override into a nested update.

    The value is read as a TOML literal; bare words fall back to strings.

    >>> parse_override("train.epochs=5")
    {'train': {'epochs': 5}}
    >>> parse_override("data.snr_list_db=[0, 5]")
    {'data': {'snr_list_db': [0, 5]}}
    >>> parse_override("experiment.scene=static")
    {'experiment': {'scene': 'static'}}
    >>> parse_override("epochs=5")
    Traceback (most recent call last):
        ...
    ValueError: Override must look like section.key=value, got 'epochs=5'

    """
    target, sep, raw_value = assignment.partition("=")
    section, dot, key = target.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ValueError(f"Override must look like section.key=value, got '{assignment}'")
    try:
        value = tomllib.loads(f"value = {raw_value.strip()}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw_value.strip()
    return {section: {key: value}}


def validate_experiment_config(cfg: ExperimentConfig) -> None:
    """Check the cross-field invariants of an experiment configuration.

    >>> cfg = default_experiment_config()
    >>> validate_experiment_config(cfg)
    >>> cfg["data"]["eval_fraction"] = 0.5
    >>> validate_experiment_config(cfg)
    Traceback (most recent call last):
        ...
    ValueError: Split fractions must sum to 1, got 0.75 + 0.5
    >>> cfg = default_experiment_config()
    >>> cfg["experiment"]["scene"] = "urban"
    >>> validate_experiment_config(cfg)
    Traceback (most recent call last):
        ...
    ValueError: Unknown scene kind 'urban', expected one of ('static', 'dynamic')

    """
    data = cfg["data"]
    if abs(data["train_fraction"] + data["eval_fraction"] - 1.0) > 1e-12:
        raise ValueError(
            "Split fractions must sum to 1, got "
            f"{data['train_fraction']} + {data['eval_fraction']}"
        )
    if cfg["experiment"]["scene"] not in SCENE_KINDS:
        raise ValueError(
            f"Unknown scene kind '{cfg['experiment']['scene']}', "
            f"expected one of {SCENE_KINDS}"
        )
    if not isinstance(cfg["experiment"]["seed"], int):
        seed = cfg["experiment"]["seed"]
        raise ValueError(f"experiment.seed must be an integer, got {seed!r}")
    for source in cfg["comm"]["sources"]:
        if source not in CSI_SOURCES:
            raise ValueError(
                f"Unknown CSI source '{source}', expected one of {CSI_SOURCES}"
            )
    for order in cfg["comm"]["orders"]:
        if order not in QAM_ORDERS:
            raise ValueError(
                f"Unsupported QAM order {order}, expected one of {QAM_ORDERS}"
            )
    for steps in cfg["sensing"]["bias_steps"]:
        if steps < 2 or steps % 2:
            raise ValueError(f"Bias step counts must be even and >= 2, got {steps}")
    if len(cfg["train"]["hidden_channels"]) != 2:  # noqa: PLR2004
        raise ValueError("train.hidden_channels must list exactly two channel counts")
    validate_system_config(cfg["system"])


def experiment_output_dir(cfg: ExperimentConfig) -> Path:
    """Directory holding every artifact of one experiment."""
    return OUTPUTS_DIR / cfg["experiment"]["name"]

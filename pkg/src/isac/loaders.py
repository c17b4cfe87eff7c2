"""Loading experiment configs, datasets and checkpoints."""

# %% Imports
import logging
import tomllib
import zlib
from pathlib import Path
from typing import TypedDict

import numpy as np

from isac.channel import ChannelScene, PathParams
from isac.cnn import EnhancerModel, init_model, model_layers
from isac.config import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    DATASET_MAGIC,
    DATASET_VERSION,
    PATH_RECORD_WIDTH,
    SAMPLE_HEADER_WIDTH,
    SCENE_KINDS,
    SPEED_OF_LIGHT,
    ExperimentConfig,
    default_experiment_config,
    merge_config,
    parse_override,
    validate_experiment_config,
)
from isac.processors import CsiDataset

logger = logging.getLogger(__name__)

MAGIC_SIZE = 8
VERSION_SIZE = 2
COUNT_SIZE = 4
CRC_SIZE = 4
DATASET_COUNTS = 5  # samples, antennas, subcarriers, max paths, scene kind
CHECKPOINT_COUNTS = 4  # C1, C2, antennas, subcarriers
SCENE_CODES = (*SCENE_KINDS, "single")


class CheckpointInfo(TypedDict):
    """CSI dimensions a checkpoint was trained on."""

    num_antennas: int
    num_subcarriers: int


# %% Config
def load_experiment_config(
    config_path: Path, overrides: list[str] | None = None
) -> ExperimentConfig:
    """Read a TOML experiment file, merge it over the defaults and apply overrides.

    Args:
        config_path: Path to the TOML file
        overrides: ``section.key=value`` assignments applied after the file

    Returns:
        Validated ExperimentConfig

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the file has no ``experiment.seed`` or fails validation
        KeyError: If the file or an override names an unknown section or key

    >>> import tempfile
    >>> with tempfile.TemporaryDirectory() as tmp:
    ...     path = Path(tmp) / "exp.toml"
    ...     _ = path.write_text('[experiment]\\nseed = 5\\n[train]\\nepochs = 2\\n')
    ...     cfg = load_experiment_config(path, ["train.batch_size=4"])
    >>> cfg["experiment"]["seed"], cfg["train"]["epochs"], cfg["train"]["batch_size"]
    (5, 2, 4)

    # Error case: seed missing
    >>> with tempfile.TemporaryDirectory() as tmp:
    ...     path = Path(tmp) / "exp.toml"
    ...     _ = path.write_text('[train]\\nepochs = 2\\n')
    ...     load_experiment_config(path)
    Traceback (most recent call last):
        ...
    ValueError: Config file exp.toml must set experiment.seed

    # Error case: missing file
    >>> load_experiment_config(Path("configs/missing.toml"))
    Traceback (most recent call last):
        ...
    FileNotFoundError: Config file not found: configs/missing.toml

    """
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")
    with config_path.open("rb") as handle:
        parsed = tomllib.load(handle)
    if "seed" not in parsed.get("experiment", {}):
        raise ValueError(f"Config file {config_path.name} must set experiment.seed")

    merged = merge_config(dict(default_experiment_config()), parsed)
    for assignment in overrides or []:
        merged = merge_config(merged, parse_override(assignment))
    cfg = ExperimentConfig(**merged)
    validate_experiment_config(cfg)
    return cfg


# %% Binary artifacts
def _read_checked(file_path: Path, magic: bytes, version: int) -> bytes:
    """Return the body between the header and the CRC after validating both."""
    if not file_path.exists():
        raise FileNotFoundError(f"Artifact not found: {file_path}")
    blob = file_path.read_bytes()
    if len(blob) < MAGIC_SIZE + VERSION_SIZE + CRC_SIZE:
        raise ValueError(f"{file_path.name} is truncated ({len(blob)} bytes)")
    if blob[:MAGIC_SIZE] != magic:
        raise ValueError(
            f"{file_path.name} has magic {blob[:MAGIC_SIZE]!r}, expected {magic!r}"
        )
    found = int(np.frombuffer(blob, "<u2", 1, MAGIC_SIZE)[0])
    if found != version:
        raise ValueError(
            f"{file_path.name} has format version {found}, expected {version}"
        )
    body, stored = blob[:-CRC_SIZE], int(np.frombuffer(blob[-CRC_SIZE:], "<u4")[0])
    if zlib.crc32(body) != stored:
        raise ValueError(f"{file_path.name} failed its CRC32 check")
    return body[MAGIC_SIZE + VERSION_SIZE :]


def _unpack_complex(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return np.ascontiguousarray(values).view("<c16").astype(complex).reshape(shape)


def _scene_from_record(kind: str, num_paths: int, record: np.ndarray) -> ChannelScene:
    paths = [
        PathParams(
            aoa_deg=float(row[0]),
            range_m=float(row[1]),
            doppler_hz=float(row[2]),
            attenuation=complex(row[3], row[4]),
            delay_s=float(row[1]) / SPEED_OF_LIGHT,
        )
        for row in record[:num_paths]
    ]
    return ChannelScene(kind=kind, paths=paths, num_paths=num_paths)


def load_dataset(file_path: Path) -> CsiDataset:
    """Read a dataset file written by ``writers.write_dataset``.

    Path delays are not stored; they are rebuilt as range / c, which is exact
    for LoS paths and for the summed two-hop range of NLoS paths.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the magic, version, size or checksum is wrong

    >>> import tempfile
    >>> from isac.writers import write_dataset
    >>> from isac.processors import generate_dataset
    >>> from isac.config import default_experiment_config
    >>> cfg = default_experiment_config()
    >>> cfg["system"]["num_subcarriers"] = 16
    >>> cfg["data"]["snr_list_db"] = [5.0]
    >>> data = generate_dataset(cfg, 3)
    >>> with tempfile.TemporaryDirectory() as tmp:
    ...     path = write_dataset(data, Path(tmp) / "train.bin")
    ...     loaded = load_dataset(path)
    ...     blob = bytearray(path.read_bytes())
    ...     blob[40] ^= 0xFF
    ...     _ = path.write_bytes(bytes(blob))
    ...     load_dataset(path)
    Traceback (most recent call last):
        ...
    ValueError: train.bin failed its CRC32 check
    >>> bool(np.array_equal(loaded["noisy"], data["noisy"]))
    True
    >>> loaded["scenes"][0]["paths"][0]["aoa_deg"]
    30.0

    """
    body = _read_checked(file_path, DATASET_MAGIC, DATASET_VERSION)
    counts = np.frombuffer(body, "<u4", DATASET_COUNTS)
    num_samples, p, nc, max_paths, kind_code = (int(c) for c in counts)
    payload = np.frombuffer(body, "<f8", offset=DATASET_COUNTS * COUNT_SIZE)
    width = SAMPLE_HEADER_WIDTH + PATH_RECORD_WIDTH * max_paths + 4 * p * nc
    if payload.size != num_samples * width:
        raise ValueError(
            f"{file_path.name} holds {payload.size} values, header promises "
            f"{num_samples} samples of {width}"
        )
    rows = payload.reshape(num_samples, width)
    paths_end = SAMPLE_HEADER_WIDTH + PATH_RECORD_WIDTH * max_paths
    csi_size = 2 * p * nc

    kind = SCENE_CODES[kind_code]
    scenes = []
    for row in rows:
        record = row[SAMPLE_HEADER_WIDTH:paths_end].reshape(max_paths, PATH_RECORD_WIDTH)
        scenes.append(_scene_from_record(kind, int(row[2]), record))

    logger.info(f"Loaded {num_samples} samples ({p} × {nc}) from {file_path.name}")
    return CsiDataset(
        snr_db=rows[:, 0].copy(),
        signal_power=rows[:, 1].copy(),
        packet_index=rows[:, 3].astype(np.int64),
        noisy=_unpack_complex(
            rows[:, paths_end : paths_end + csi_size], (num_samples, p, nc)
        ),
        true=_unpack_complex(rows[:, paths_end + csi_size :], (num_samples, p, nc)),
        scenes=scenes,
    )


def load_checkpoint(file_path: Path) -> tuple[EnhancerModel, CheckpointInfo]:
    """Read enhancer weights and the CSI size they were trained on.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the magic, version, size or checksum is wrong

    >>> import tempfile
    >>> from isac.writers import save_checkpoint
    >>> model = init_model((2, 3), np.random.default_rng(0))
    >>> info = CheckpointInfo(num_antennas=8, num_subcarriers=64)
    >>> with tempfile.TemporaryDirectory() as tmp:
    ...     path = save_checkpoint(model, info, Path(tmp) / "model.ckpt")
    ...     loaded, loaded_info = load_checkpoint(path)
    >>> loaded["hidden_channels"], loaded_info["num_subcarriers"]
    ((2, 3), 64)
    >>> kernels = loaded["block2"][1]["kernels"]
    >>> bool(np.array_equal(kernels, model["block2"][1]["kernels"]))
    True
    >>> load_checkpoint(Path("missing.ckpt"))
    Traceback (most recent call last):
        ...
    FileNotFoundError: Artifact not found: missing.ckpt

    """
    body = _read_checked(file_path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    c1, c2, p, nc = (int(c) for c in np.frombuffer(body, "<u4", CHECKPOINT_COUNTS))
    values = np.frombuffer(body, "<f8", offset=CHECKPOINT_COUNTS * COUNT_SIZE)
    slope, weights = float(values[0]), values[1:]

    model = init_model((c1, c2), slope=slope)
    expected = sum(
        2 * (layer["kernels"].size + layer["bias"].size) for layer in model_layers(model)
    )
    if weights.size != expected:
        raise ValueError(
            f"{file_path.name} holds {weights.size} weights, "
            f"a ({c1}, {c2}) enhancer needs {expected}"
        )
    offset = 0
    for layer in model_layers(model):
        for key in ("kernels", "bias"):
            size = 2 * layer[key].size
            chunk = np.ascontiguousarray(weights[offset : offset + size])
            layer[key] = chunk.view("<c16").astype(complex).reshape(layer[key].shape)
            offset += size
    logger.info(f"Loaded ({c1}, {c2}) enhancer trained on {p} × {nc} CSI")
    return model, CheckpointInfo(num_antennas=p, num_subcarriers=nc)

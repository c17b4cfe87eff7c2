"""Binary artifact, CSV and Excel report output."""

# %% Imports
import logging
import zlib
from pathlib import Path

import numpy as np
import pandas as pd
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter
from openpyxl.workbook import Workbook
from openpyxl.worksheet.worksheet import Worksheet

from isac.cnn import EnhancerModel, model_layers
from isac.config import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    CSV_FLOAT_FORMAT,
    DATASET_MAGIC,
    DATASET_VERSION,
    HEADER_FILL_COLOR,
    PATH_RECORD_WIDTH,
    REPORT_CSV,
    REPORT_SHEETS,
    REPORT_XLSX,
)
from isac.loaders import SCENE_CODES, CheckpointInfo
from isac.processors import CsiDataset, pivot_metrics

logger = logging.getLogger(__name__)

MIN_COLUMN_WIDTH = 10


# %% Binary artifacts
def _write_checked(file_path: Path, magic: bytes, version: int, body: bytes) -> Path:
    """Write magic, version, body and a trailing CRC32 of everything before it."""
    file_path.parent.mkdir(parents=True, exist_ok=True)
    blob = magic + np.array([version], dtype="<u2").tobytes() + body
    crc = np.array([zlib.crc32(blob)], dtype="<u4").tobytes()
    file_path.write_bytes(blob + crc)
    return file_path


def _interleaved(values: np.ndarray) -> np.ndarray:
    """Complex stack as real/imag interleaved little-endian doubles, row-major."""
    return np.ascontiguousarray(values, dtype="<c16").view("<f8")


def write_dataset(dataset: CsiDataset, file_path: Path) -> Path:
    """Write a dataset in the ``ISACCSI1`` binary layout.

    Header: magic, u16 version, then u32 sample count, antennas, subcarriers,
    max paths and scene kind. Each sample is a row of f64 values: SNR, signal
    power, path count and packet index, one (AoA, range, Doppler, Re b, Im b)
    record per path slot, then the noisy and true CSI, real/imag interleaved,
    antenna-major. A CRC32 of everything before it closes the file.

    >>> import tempfile
    >>> data = CsiDataset(snr_db=np.zeros(0), signal_power=np.zeros(0),
    ...                   packet_index=np.zeros(0, dtype=np.int64),
    ...                   noisy=np.zeros((0, 8, 4), dtype=complex),
    ...                   true=np.zeros((0, 8, 4), dtype=complex), scenes=[])
    >>> with tempfile.TemporaryDirectory() as tmp:
    ...     size = write_dataset(data, Path(tmp) / "empty.bin").stat().st_size
    >>> size
    34

    """
    num_samples, p, nc = dataset["noisy"].shape
    max_paths = max((scene["num_paths"] for scene in dataset["scenes"]), default=0)
    kind = dataset["scenes"][0]["kind"] if dataset["scenes"] else SCENE_CODES[0]

    path_records = np.zeros((num_samples, max_paths, PATH_RECORD_WIDTH))
    for row, scene in zip(path_records, dataset["scenes"], strict=True):
        for slot, path in enumerate(scene["paths"]):
            row[slot] = (
                path["aoa_deg"],
                path["range_m"],
                path["doppler_hz"],
                complex(path["attenuation"]).real,
                complex(path["attenuation"]).imag,
            )
    sample_header = np.column_stack(
        [
            dataset["snr_db"],
            dataset["signal_power"],
            [scene["num_paths"] for scene in dataset["scenes"]],
            dataset["packet_index"],
        ]
    )
    payload = np.hstack(
        [
            sample_header,
            path_records.reshape(num_samples, max_paths * PATH_RECORD_WIDTH),
            _interleaved(dataset["noisy"]).reshape(num_samples, 2 * p * nc),
            _interleaved(dataset["true"]).reshape(num_samples, 2 * p * nc),
        ]
    ).astype("<f8")
    counts = [num_samples, p, nc, max_paths, SCENE_CODES.index(kind)]
    body = np.array(counts, dtype="<u4").tobytes() + payload.tobytes()
    logger.info(f"Writing {num_samples} samples to {file_path.name}")
    return _write_checked(file_path, DATASET_MAGIC, DATASET_VERSION, body)


def save_checkpoint(model: EnhancerModel, info: CheckpointInfo, file_path: Path) -> Path:
    """Write enhancer weights in the ``ISACCNN1`` binary layout.

    Header: magic, u16 version, u32 C1, C2, antennas and subcarriers, then f64
    leaky slope and every layer's kernels and bias (block1, shortcut1, block2,
    shortcut2) as interleaved real/imag doubles, closed by a CRC32.
    """
    c1, c2 = model["hidden_channels"]
    counts = [c1, c2, info["num_antennas"], info["num_subcarriers"]]
    weights = [
        _interleaved(layer[key]).ravel()
        for layer in model_layers(model)
        for key in ("kernels", "bias")
    ]
    values = np.concatenate([[model["slope"]], *weights]).astype("<f8")
    body = np.array(counts, dtype="<u4").tobytes() + values.tobytes()
    logger.info(f"Saving ({c1}, {c2}) enhancer to {file_path.name}")
    return _write_checked(file_path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, body)


# %% Tables
def write_csv(df: pd.DataFrame, file_path: Path) -> Path:
    """Write a table with the fixed float format and LF line endings.

    >>> import tempfile
    >>> df = pd.DataFrame({"snr_db": [5.0], "value": [1 / 3]})
    >>> with tempfile.TemporaryDirectory() as tmp:
    ...     text = write_csv(df, Path(tmp) / "m.csv").read_text()
    >>> text
    'snr_db,value\\n5,0.3333333333\\n'

    """
    file_path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(file_path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"✓ Wrote {len(df)} rows to {file_path.name}")
    return file_path


def _write_sheet(workbook: Workbook, title: str, df: pd.DataFrame) -> Worksheet:
    """Append a sheet with a styled header row and the frame's values."""
    sheet = workbook.create_sheet(title)
    sheet.append([str(column) for column in df.columns])
    for row in df.itertuples(index=False):
        sheet.append([None if pd.isna(value) else value for value in row])

    fill = PatternFill(
        start_color=HEADER_FILL_COLOR, end_color=HEADER_FILL_COLOR, fill_type="solid"
    )
    for cell in sheet[1]:
        cell.font = Font(bold=True)
        cell.alignment = Alignment(horizontal="center", wrap_text=True)
        cell.fill = fill
    for index, column in enumerate(df.columns, start=1):
        width = max(MIN_COLUMN_WIDTH, len(str(column)) + 2)
        sheet.column_dimensions[get_column_letter(index)].width = width
    sheet.freeze_panes = "A2"
    return sheet


def write_report(
    metrics: pd.DataFrame, training: pd.DataFrame | None, output_dir: Path
) -> tuple[Path, Path]:
    """Write ``report.csv`` with every metric row and a figure-ready workbook.

    The workbook has a Training sheet (one row per epoch) and one sheet per
    metric family with SNR rows and one column per variant.

    >>> import tempfile
    >>> from openpyxl import load_workbook
    >>> from isac.processors import MetricRow, metrics_frame
    >>> metrics = metrics_frame([
    ...     MetricRow(snr_db=5.0, metric="nmse_db", variant="ls", value=-3.0,
    ...               sample_count=4),
    ...     MetricRow(snr_db=5.0, metric="nmse_db", variant="enhanced", value=-15.5,
    ...               sample_count=4),
    ... ])
    >>> with tempfile.TemporaryDirectory() as tmp:
    ...     csv_path, xlsx_path = write_report(metrics, None, Path(tmp))
    ...     workbook = load_workbook(xlsx_path)
    >>> workbook.sheetnames
    ['Training', 'NMSE', 'BER', 'AoA', 'Range', 'Failures']
    >>> [cell.value for cell in workbook["NMSE"][2]]
    [5.0, -3.0, -15.5]
    >>> workbook["NMSE"]["B1"].font.bold
    True

    """
    csv_path = write_csv(metrics, output_dir / REPORT_CSV)

    workbook = Workbook()
    workbook.remove(workbook.active)
    if training is None:
        training = pd.DataFrame(columns=["epoch", "train_nmse_db", "eval_nmse_db"])
    _write_sheet(workbook, "Training", training)
    for title, metric_names in REPORT_SHEETS.items():
        _write_sheet(workbook, title, pivot_metrics(metrics, metric_names))

    xlsx_path = output_dir / REPORT_XLSX
    xlsx_path.parent.mkdir(parents=True, exist_ok=True)
    workbook.save(xlsx_path)
    logger.info(f"✓ Report workbook saved to {xlsx_path}")
    return csv_path, xlsx_path

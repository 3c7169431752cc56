"""
Binary and CSV file formats.

IQ files (DDIQ): 32-byte little-endian header (magic 'DDIQ', u32 version,
f64 sample rate, u64 sample count, 8 pad bytes) followed by interleaved
float32 I/Q pairs.

CSF files (DDCF): 32-byte header (magic 'DDCF', u32 rows N, u32 columns
l_tau+1, u32 version, f64 delay resolution, f64 doppler resolution) followed
by row-major complex64 cells.

Tables (CSF, estimates, profiles, statistics) are written as CSV through pandas.
"""

import logging
import struct
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from .core import FrameConfig
from .estimation import PathEstimate
from .exceptions import FileFormatError
from .receiver import Csf
from .waveform import IqBuffer

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

IQ_MAGIC = b'DDIQ'
CSF_MAGIC = b'DDCF'
FORMAT_VERSION = 1
HEADER_BYTES = 32
ESTIMATE_COLUMNS = ['path_index', 'delay_s', 'doppler_hz', 'gain_db', 'phase_rad',
                    'k_I', 'l_I', 'k_F', 'l_F']

_IQ_HEADER = struct.Struct('<4sIdQ8x')
_CSF_HEADER = struct.Struct('<4sIIIdd')


def _read_header(path: Path, layout: struct.Struct, magic: bytes) -> tuple:
    try:
        with open(path, 'rb') as f:
            raw = f.read(HEADER_BYTES)
    except OSError as e:
        raise FileFormatError(f"Cannot read {path}: {e}", path=str(path))
    if len(raw) < HEADER_BYTES:
        raise FileFormatError(
            f"Truncated header in {path}", path=str(path),
            expected_bytes=HEADER_BYTES, actual_bytes=len(raw),
        )
    fields = layout.unpack(raw[:layout.size])
    if fields[0] != magic:
        raise FileFormatError(
            f"Bad magic {fields[0]!r} in {path}, expected {magic!r}", path=str(path)
        )
    return fields


# ==================== IQ ====================


def write_iq(buf: IqBuffer, path: PathLike) -> Path:
    """
    Write samples as a DDIQ file.

    Args:
        buf: Samples to write
        path: Destination file

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    interleaved = np.empty(2 * len(buf), dtype='<f4')
    interleaved[0::2] = buf.samples.real
    interleaved[1::2] = buf.samples.imag
    with open(path, 'wb') as f:
        f.write(_IQ_HEADER.pack(IQ_MAGIC, FORMAT_VERSION, float(buf.sample_rate), len(buf)))
        interleaved.tofile(f)
    logger.info(f"Wrote {len(buf)} samples to {path}")
    return path


def read_iq(path: PathLike) -> IqBuffer:
    """
    Read a DDIQ file.

    Raises:
        FileFormatError: On bad magic, unknown version, or a payload whose size
            does not match the header sample count
    """
    path = Path(path)
    _, version, sample_rate, count = _read_header(path, _IQ_HEADER, IQ_MAGIC)
    if version != FORMAT_VERSION:
        raise FileFormatError(f"Unsupported IQ file version {version}", path=str(path))
    expected = HEADER_BYTES + 8 * count
    actual = path.stat().st_size
    if actual != expected:
        problem = 'truncated' if actual < expected else 'has trailing bytes'
        raise FileFormatError(
            f"IQ payload {problem} in {path}", path=str(path),
            expected_bytes=expected, actual_bytes=actual,
        )
    with open(path, 'rb') as f:
        f.seek(HEADER_BYTES)
        interleaved = np.fromfile(f, dtype='<f4', count=2 * count)
    samples = interleaved[0::2].astype(np.float64) + 1j * interleaved[1::2].astype(np.float64)
    logger.debug(f"Read {count} samples at {sample_rate:.0f} Hz from {path}")
    return IqBuffer(samples, sample_rate)


# ==================== CSF ====================


def write_csf(csf: Csf, path: PathLike) -> Path:
    """Write a CSF as a DDCF file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows, cols = csf.data.shape
    with open(path, 'wb') as f:
        f.write(_CSF_HEADER.pack(
            CSF_MAGIC, rows, cols, FORMAT_VERSION,
            csf.cfg.delay_resolution, csf.cfg.doppler_resolution,
        ))
        csf.data.astype('<c8').tofile(f)
    logger.info(f"Wrote CSF {rows}x{cols} to {path}")
    return path


def read_csf(path: PathLike, cfg: FrameConfig) -> Csf:
    """
    Read a DDCF file against the frame configuration it was measured with.

    Raises:
        FileFormatError: On bad magic, truncation or a shape/resolution mismatch
    """
    path = Path(path)
    _, rows, cols, version, delta_tau, delta_nu = _read_header(path, _CSF_HEADER, CSF_MAGIC)
    if version != FORMAT_VERSION:
        raise FileFormatError(f"Unsupported CSF file version {version}", path=str(path))
    if (rows, cols) != (cfg.N, cfg.l_tau + 1):
        raise FileFormatError(
            f"CSF shape {(rows, cols)} does not match configuration {(cfg.N, cfg.l_tau + 1)}",
            path=str(path),
        )
    if not np.isclose(delta_tau, cfg.delay_resolution) or not np.isclose(delta_nu, cfg.doppler_resolution):
        raise FileFormatError("CSF resolutions do not match configuration", path=str(path))
    expected = HEADER_BYTES + 8 * rows * cols
    actual = path.stat().st_size
    if actual < expected:
        raise FileFormatError(
            f"CSF payload truncated in {path}", path=str(path),
            expected_bytes=expected, actual_bytes=actual,
        )
    with open(path, 'rb') as f:
        f.seek(HEADER_BYTES)
        data = np.fromfile(f, dtype='<c8', count=rows * cols).reshape(rows, cols)
    return Csf(data, cfg)


# ==================== CSV ====================


def _write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def csf_to_csv(csf: Csf, path: PathLike) -> Path:
    """Long-form CSF table: doppler_hz, delay_s, power_db, phase_rad."""
    return _write_frame(csf.to_frame(), path)


def estimates_frame(estimates: Sequence[PathEstimate]) -> pd.DataFrame:
    records = [e.to_record(i) for i, e in enumerate(estimates)]
    return pd.DataFrame(records, columns=ESTIMATE_COLUMNS)


def estimates_to_csv(estimates: Sequence[PathEstimate], path: PathLike) -> Path:
    return _write_frame(estimates_frame(estimates), path)


def table_to_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write any result table (profiles, statistics, sweeps)."""
    return _write_frame(frame, path)


def _load_estimates_table(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise FileFormatError(f"Cannot read estimates from {path}: {e}", path=str(path))
    missing = [c for c in ESTIMATE_COLUMNS if c not in frame.columns]
    if missing:
        raise FileFormatError(
            f"Estimates file {path} missing columns: {', '.join(missing)}", path=str(path)
        )
    return frame


def read_estimates(path: PathLike) -> List[PathEstimate]:
    """
    Load path estimates written by estimates_to_csv.

    Raises:
        FileFormatError: If the file cannot be read or is missing columns
    """
    return _estimates_from_frame(_load_estimates_table(Path(path)))


def read_estimates_by_frame(path: PathLike) -> Dict[int, List[PathEstimate]]:
    """Load multi-frame estimates grouped by their frame_index column (0 if absent)."""
    frame = _load_estimates_table(Path(path))
    if 'frame_index' not in frame.columns:
        return {0: _estimates_from_frame(frame)}
    return {
        int(index): _estimates_from_frame(group)
        for index, group in frame.groupby('frame_index', sort=True)
    }


def _estimates_from_frame(frame: pd.DataFrame) -> List[PathEstimate]:
    estimates = []
    for row in frame.itertuples(index=False):
        gain = 10.0 ** (row.gain_db / 20.0)
        estimates.append(PathEstimate(
            gain=gain,
            phase=float(row.phase_rad),
            delay=float(row.delay_s),
            doppler=float(row.doppler_hz),
            integer_taps=(int(row.k_I), int(row.l_I)),
            fractional_taps=(float(row.k_F), float(row.l_F)),
            complex_gain=gain * np.exp(1j * row.phase_rad),
        ))
    return estimates

"""Dataset persistence and plain-text configuration files.

Dataset layout (little-endian):

    magic   8 bytes  b"CSIDSET1"
    version u16      currently 1
    N       u16
    K       u16
    count   u32
    payload count * 2 * N * K float32 values; per sample the real plane
            then the imaginary plane, each row-major N x K.

Config files are flat ``key = value`` lines (``#`` comments allowed) with
optional ``[section]`` headers; parsing is done with :mod:`configparser`.
"""

from __future__ import annotations

import configparser
import struct
from pathlib import Path

import numpy as np

__all__ = ["write_dataset", "read_dataset", "DatasetFormatError", "load_config"]

MAGIC = b"CSIDSET1"
VERSION = 1
_HEADER = struct.Struct("<8sHHHI")


class DatasetFormatError(ValueError):
    """Bad magic, version, or truncated payload."""


def write_dataset(path, samples: np.ndarray) -> None:
    """Write complex samples of shape (count, N, K) as 32-bit planes."""
    samples = np.asarray(samples)
    if samples.ndim != 3:
        raise ValueError(f"expected (count, N, K) samples, got {samples.shape}")
    count, n, k = samples.shape
    planes = np.stack(
        [samples.real.astype("<f4"), samples.imag.astype("<f4")], axis=1
    )  # (count, 2, N, K)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, k, count))
        fh.write(planes.tobytes())


def read_dataset(path) -> np.ndarray:
    """Read a dataset back; returns complex64-precision values as complex128."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, version, n, k, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    expect = _HEADER.size + count * 2 * n * k * 4
    if len(raw) != expect:
        raise DatasetFormatError(
            f"{path}: payload size {len(raw)} != expected {expect}"
        )
    planes = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    planes = planes.reshape(count, 2, n, k).astype(np.float64)
    return planes[:, 0] + 1j * planes[:, 1]


def planes_from_complex(samples: np.ndarray, dtype=np.float64) -> np.ndarray:
    """(count, N, K) complex -> (count, 2, N, K) real/imaginary planes."""
    return np.stack([samples.real, samples.imag], axis=1).astype(dtype)


def complex_from_planes(planes: np.ndarray) -> np.ndarray:
    return planes[:, 0].astype(np.float64) + 1j * planes[:, 1].astype(np.float64)


def load_config(path) -> dict[str, dict[str, str]]:
    """Parse a key-value config file into {section: {key: value}}.

    Keys before any section header land in the "" section, so flat files
    without headers remain valid.
    """
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    try:
        parser.read_string("[__root__]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ValueError(f"{path}: {exc}") from exc
    out: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        name = "" if section == "__root__" else section
        out[name] = dict(parser.items(section))
    return out

"""On-disk formats: IRF CSV files and the SPLF binary frame stream.

SPLF layout (little-endian)::

    magic   4s   b"SPLF"
    version u16
    rows    u16
    cols    u16
    n_bins  u32
    frames  u32
    then, per frame, rows*cols*n_bins u16 counts (pixels row-major, bins fastest)
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Irf, normalize_irf

MAGIC = b"SPLF"
VERSION = 1
_HEADER = struct.Struct("<4sHHHII")
HEADER_SIZE = _HEADER.size


class FormatError(ValueError):
    pass


def read_irf_csv(path, bin_width: float = 1.0) -> Irf:
    """Single-column CSV, one sample per line."""
    return normalize_irf(_read_columns(path)[:, 0], bin_width=bin_width)


def read_multiband_irf_csv(path, bin_width: float = 1.0) -> list[Irf]:
    """L columns, one per spectral band."""
    cols = _read_columns(path)
    return [normalize_irf(cols[:, i], bin_width=bin_width) for i in range(cols.shape[1])]


def _read_columns(path) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    if data.size == 0:
        raise FormatError(f"{path}: no IRF samples")
    return data


def write_irf_csv(path, irfs) -> None:
    if isinstance(irfs, Irf):
        irfs = [irfs]
    data = np.column_stack([irf.samples for irf in irfs])
    np.savetxt(path, data, delimiter=",", fmt="%.17g")


@dataclass(frozen=True)
class SplfHeader:
    rows: int
    cols: int
    n_bins: int
    n_frames: int
    version: int = VERSION

    @property
    def frame_size(self) -> int:
        return self.rows * self.cols * self.n_bins * 2

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.version, self.rows, self.cols, self.n_bins, self.n_frames)

    @classmethod
    def unpack(cls, raw: bytes) -> "SplfHeader":
        if len(raw) < HEADER_SIZE:
            raise FormatError(f"truncated SPLF header ({len(raw)} of {HEADER_SIZE} bytes)")
        magic, version, rows, cols, n_bins, n_frames = _HEADER.unpack(raw[:HEADER_SIZE])
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported SPLF version {version}")
        return cls(rows, cols, n_bins, n_frames, version)


class SplfWriter:
    """Streams frames to disk; the frame count in the header is patched on close."""

    def __init__(self, path, rows: int, cols: int, n_bins: int):
        self.path = Path(path)
        self.header = SplfHeader(rows, cols, n_bins, 0)
        self._fh = open(self.path, "wb")
        self._fh.write(self.header.pack())
        self.n_written = 0

    def write(self, frame: np.ndarray) -> None:
        h = self.header
        frame = np.asarray(frame)
        if frame.shape != (h.rows, h.cols, h.n_bins):
            raise ValueError(f"frame shape {frame.shape} != {(h.rows, h.cols, h.n_bins)}")
        if frame.size and (frame.min() < 0 or frame.max() > 0xFFFF):
            raise ValueError("counts do not fit in u16")
        self._fh.write(frame.astype("<u2").tobytes())
        self.n_written += 1

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.seek(0)
        h = self.header
        self._fh.write(SplfHeader(h.rows, h.cols, h.n_bins, self.n_written).pack())
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SplfReader:
    """Iterates frames of shape (rows, cols, n_bins) in file order.

    A trailing partial frame, or fewer frames than the header promises, sets
    ``truncated`` once iteration finishes; complete frames are still yielded.
    """

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "rb") as fh:
            self.header = SplfHeader.unpack(fh.read(HEADER_SIZE))
        self.truncated = False

    def __iter__(self):
        h = self.header
        n = 0
        with open(self.path, "rb") as fh:
            fh.seek(HEADER_SIZE)
            while n < h.n_frames:
                raw = fh.read(h.frame_size)
                if len(raw) < h.frame_size:
                    self.truncated = True
                    return
                n += 1
                yield np.frombuffer(raw, dtype="<u2").reshape(h.rows, h.cols, h.n_bins).astype(np.int64)

    def __len__(self):
        return self.header.n_frames


def write_splf(path, frames) -> int:
    frames = iter(frames)
    first = next(frames, None)
    if first is None:
        raise ValueError("write_splf needs at least one frame to infer the shape")
    rows, cols, n_bins = np.shape(first)
    with SplfWriter(path, rows, cols, n_bins) as w:
        w.write(first)
        for f in frames:
            w.write(f)
    return w.n_written


def read_splf(path) -> tuple[SplfHeader, np.ndarray]:
    """Whole file in memory; shape (frames, rows, cols, n_bins)."""
    r = SplfReader(path)
    h = r.header
    frames = list(r)
    if not frames:
        return h, np.zeros((0, h.rows, h.cols, h.n_bins), dtype=np.int64)
    return h, np.stack(frames)

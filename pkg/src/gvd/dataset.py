"""Labeled latent-video datasets and their binary file format.

Layout (little-endian)::

    "GVDS"  u32 version=1  u32 F  u32 D  u32 class_count  u64 record_count
    record_count x ( u32 class_id, F*D float32, frame-major )
    optional: "SLBL"  u32 class_count  record_count*class_count float32

Latents are held as float32 in memory so that a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError

MAGIC = b"GVDS"
SOFT_MAGIC = b"SLBL"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIQ")
HEADER_SIZE = _HEADER.size  # 28


@dataclass
class VideoDataset:
    labels: np.ndarray  # (N,) int
    videos: np.ndarray  # (N, F, D) float32
    n_classes: int
    soft_labels: np.ndarray | None = None  # (N, n_classes) float32

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.videos = np.asarray(self.videos, dtype=np.float32)
        if self.videos.ndim != 3:
            raise DimensionError(f"videos must be (N, F, D), got shape {self.videos.shape}")
        if len(self.labels) != len(self.videos):
            raise DimensionError("labels and videos differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DimensionError("class id out of range")
        if self.soft_labels is not None:
            self.soft_labels = np.asarray(self.soft_labels, dtype=np.float32)
            if self.soft_labels.shape != (len(self.labels), self.n_classes):
                raise DimensionError("soft labels must be (N, n_classes)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def frames(self) -> int:
        return self.videos.shape[1]

    @property
    def dim(self) -> int:
        return self.videos.shape[2]

    def flat(self) -> np.ndarray:
        """Records as float64 rows of length F*D."""
        return self.videos.reshape(len(self), -1).astype(np.float64)

    def of_class(self, c: int) -> np.ndarray:
        return self.videos[self.labels == c]

    def subset(self, idx) -> VideoDataset:
        idx = np.asarray(idx)
        soft = None if self.soft_labels is None else self.soft_labels[idx]
        return VideoDataset(self.labels[idx], self.videos[idx], self.n_classes, soft)

    def equals(self, other: VideoDataset) -> bool:
        if self.n_classes != other.n_classes or self.videos.shape != other.videos.shape:
            return False
        if (self.soft_labels is None) != (other.soft_labels is None):
            return False
        same = np.array_equal(self.labels, other.labels) and self.videos.tobytes() == other.videos.tobytes()
        if same and self.soft_labels is not None:
            same = self.soft_labels.tobytes() == other.soft_labels.tobytes()
        return same


def file_size(n_records: int, frames: int, dim: int, n_classes: int | None = None) -> int:
    """Expected byte size; pass ``n_classes`` when a soft-label block is present."""
    size = HEADER_SIZE + n_records * (4 + 4 * frames * dim)
    if n_classes is not None:
        size += 4 + 4 + 4 * n_records * n_classes
    return size


def to_bytes(d: VideoDataset) -> bytes:
    n = len(d)
    header = _HEADER.pack(MAGIC, VERSION, d.frames, d.dim, d.n_classes, n)
    rec = np.empty(n, dtype=[("cid", "<u4"), ("x", "<f4", (d.frames * d.dim,))])
    rec["cid"] = d.labels
    rec["x"] = d.videos.reshape(n, d.frames * d.dim)
    parts = [header, rec.tobytes()]
    if d.soft_labels is not None:
        parts.append(SOFT_MAGIC + struct.pack("<I", d.n_classes))
        parts.append(d.soft_labels.astype("<f4").tobytes())
    return b"".join(parts)


def from_bytes(buf: bytes) -> VideoDataset:
    if len(buf) < HEADER_SIZE:
        raise FormatError("truncated header", len(buf))
    magic, version, F, D, n_classes, n = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    rec_size = 4 + 4 * F * D
    body_end = HEADER_SIZE + n * rec_size
    if len(buf) < body_end:
        raise FormatError(f"truncated record block (expected {n} records)", len(buf))
    rec = np.frombuffer(buf, dtype=[("cid", "<u4"), ("x", "<f4", (F * D,))], count=n, offset=HEADER_SIZE)
    labels = rec["cid"].astype(np.int64)
    bad = np.flatnonzero(labels >= n_classes)
    if len(bad):
        raise FormatError(f"class id {labels[bad[0]]} >= class_count {n_classes}", HEADER_SIZE + int(bad[0]) * rec_size)
    videos = rec["x"].reshape(n, F, D).astype(np.float32)

    soft = None
    pos = body_end
    if len(buf) > pos:
        if len(buf) < pos + 8:
            raise FormatError("truncated soft-label header", len(buf))
        if buf[pos : pos + 4] != SOFT_MAGIC:
            raise FormatError(f"bad soft-label magic {buf[pos:pos + 4]!r}", pos)
        (sc,) = struct.unpack_from("<I", buf, pos + 4)
        if sc != n_classes:
            raise FormatError(f"soft-label class_count {sc} != {n_classes}", pos + 4)
        need = pos + 8 + 4 * n * sc
        if len(buf) < need:
            raise FormatError("truncated soft-label block", len(buf))
        if len(buf) > need:
            raise FormatError("trailing bytes after soft-label block", need)
        soft = np.frombuffer(buf, dtype="<f4", count=n * sc, offset=pos + 8).reshape(n, sc).astype(np.float32)
    return VideoDataset(labels, videos, n_classes, soft)


def save_dataset(d: VideoDataset, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(d))


def load_dataset(path: str | Path) -> VideoDataset:
    return from_bytes(Path(path).read_bytes())

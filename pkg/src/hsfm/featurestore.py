"""Grouped feature datasets and their bit-exact binary file format.

A dataset is rows of (embedding, class label, group id) in a frozen
feature space.  The on-disk format (HSFM-FS) is little-endian and fully
deterministic: serializing the same dataset always yields the same byte
stream, and a read/write round trip is the identity.

Layout (all integers little-endian u32):

    bytes  0..3   magic "HSFM"
    bytes  4..7   format version (currently 1)
    bytes  8..11  n      number of rows
    bytes 12..15  d      embedding dimension
    bytes 16..19  C      class count
    bytes 20..23  G      group count
    bytes 24..31  reserved, zero
    payload       n*d float32 features (row-major), n u32 labels, n u32 groups
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .validation import owned_array

MAGIC = b"HSFM"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIIII8s")
HEADER_SIZE = _HEADER.size  # 32 bytes


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """Immutable rows of (embedding, class label, group id).

    features: (n, d) float32, all finite
    labels:   (n,) uint32, each < class_count
    groups:   (n,) uint32, each < group_count
    """

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    class_count: int
    group_count: int

    def __post_init__(self) -> None:
        feats = owned_array(self.features, np.float32)
        if feats.ndim != 2:
            raise ValidationError(f"features: expected a 2-D array, got ndim={feats.ndim}")
        n, d = feats.shape
        if d < 1:
            raise ValidationError("features: embedding dimension must be >= 1")
        if not isinstance(self.class_count, (int, np.integer)) or self.class_count < 2:
            raise ValidationError(f"class_count: expected an integer >= 2, got {self.class_count!r}")
        if not isinstance(self.group_count, (int, np.integer)) or self.group_count < 1:
            raise ValidationError(f"group_count: expected an integer >= 1, got {self.group_count!r}")
        labels = _check_ids(self.labels, n, int(self.class_count), "label")
        groups = _check_ids(self.groups, n, int(self.group_count), "group")
        if n:
            finite = np.isfinite(feats).all(axis=1)
            if not finite.all():
                row = int(np.flatnonzero(~finite)[0])
                raise ValidationError(f"non-finite feature value at row {row}")
        object.__setattr__(self, "features", _freeze(feats))
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "groups", _freeze(groups))
        object.__setattr__(self, "class_count", int(self.class_count))
        object.__setattr__(self, "group_count", int(self.group_count))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureDataset):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and self.group_count == other.group_count
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.groups, other.groups)
        )

    def take(self, rows) -> "FeatureDataset":
        """New dataset containing the given rows, in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureDataset(
            self.features[rows],
            self.labels[rows],
            self.groups[rows],
            self.class_count,
            self.group_count,
        )


def _check_ids(values, n: int, bound: int, kind: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValidationError(f"{kind}s: expected a 1-D array, got ndim={arr.ndim}")
    if arr.shape[0] != n:
        raise ValidationError(f"{kind}s: expected {n} entries, got {arr.shape[0]}")
    if arr.size and arr.dtype.kind not in "iu":
        raise ValidationError(f"{kind}s: expected integer entries, got dtype {arr.dtype}")
    if arr.size:
        wide = arr.astype(np.int64, copy=False)
        bad = np.flatnonzero((wide < 0) | (wide >= bound))
        if bad.size:
            row = int(bad[0])
            raise ValidationError(
                f"{kind} {int(wide[row])} out of range [0, {bound}) at row {row}"
            )
    return owned_array(arr, np.uint32)


@dataclass(frozen=True)
class DatasetSplit:
    """Train/val/test triple over one feature space.

    All three parts must agree on dimension, class count, and group count.
    """

    train: FeatureDataset
    val: FeatureDataset
    test: FeatureDataset

    def __post_init__(self) -> None:
        for name, part in (("val", self.val), ("test", self.test)):
            if (
                part.dim != self.train.dim
                or part.class_count != self.train.class_count
                or part.group_count != self.train.group_count
            ):
                raise ValidationError(
                    f"split mismatch: {name} has (d={part.dim}, C={part.class_count}, "
                    f"G={part.group_count}) but train has (d={self.train.dim}, "
                    f"C={self.train.class_count}, G={self.train.group_count})"
                )


def write_features(path, ds: FeatureDataset) -> None:
    """Serialize ``ds`` to ``path`` in the HSFM-FS format.

    Raises ValidationError before touching the file if the dataset is
    invalid; I/O failures propagate as OSError naming the path.
    """
    if ds.n and not np.isfinite(ds.features).all():
        row = int(np.flatnonzero(~np.isfinite(ds.features).all(axis=1))[0])
        raise ValidationError(f"non-finite feature value at row {row}")
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, ds.n, ds.dim, ds.class_count, ds.group_count, b"\x00" * 8
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ds.features.astype("<f4", copy=False).tobytes())
        fh.write(ds.labels.astype("<u4", copy=False).tobytes())
        fh.write(ds.groups.astype("<u4", copy=False).tobytes())


def read_features(path) -> FeatureDataset:
    """Read an HSFM-FS file back into a validated FeatureDataset."""
    data = Path(path).read_bytes()
    if len(data) < HEADER_SIZE:
        if data[:4] == MAGIC:
            raise FormatError(
                f"{path}: truncated header: expected {HEADER_SIZE} bytes, found {len(data)}"
            )
        raise FormatError(f"{path}: not an HSFM-FS file")
    magic, version, n, d, class_count, group_count, _reserved = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: not an HSFM-FS file")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported HSFM-FS version {version} (expected {FORMAT_VERSION})"
        )
    expected = n * d * 4 + n * 4 + n * 4
    actual = len(data) - HEADER_SIZE
    if actual != expected:
        raise FormatError(
            f"{path}: payload length mismatch: expected {expected} bytes, found {actual}"
        )
    offset = HEADER_SIZE
    features = np.frombuffer(data, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
    offset += n * d * 4
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=offset)
    offset += n * 4
    groups = np.frombuffer(data, dtype="<u4", count=n, offset=offset)
    try:
        return FeatureDataset(features, labels, groups, int(class_count), int(group_count))
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def group_sizes(ds: FeatureDataset) -> np.ndarray:
    """Per-group row counts, length G; sums to n."""
    return np.bincount(ds.groups.astype(np.int64), minlength=ds.group_count)

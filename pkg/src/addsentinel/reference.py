"""Per-class reference distributions fitted on labeled training features.

A fitted model is immutable. Persistence uses a little-endian binary format:
magic "ADDREF01", u32 dim, u32 class count, then per class u32 class id,
u64 sample count, dim f64 mean entries, dim*dim f64 covariance entries in
row-major order, followed by a CRC32 of everything after the magic.
"""

from __future__ import annotations

import struct
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ChecksumMismatch,
    ClassTooSmall,
    DimensionMismatch,
    FormatVersionMismatch,
    IoFailure,
    LabelOutOfRange,
)
from .stats import Moments, estimate_moments
from .validation import as_feature_matrix, as_labels

MAGIC = b"ADDREF01"


@dataclass(frozen=True)
class ReferenceModel:
    """K per-class Gaussian references over a d-dimensional feature space."""

    dim: int
    classes: tuple[tuple[int, Moments], ...]
    created_at: float = field(default_factory=time.time)
    label_names: tuple[str, ...] | None = None

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(cid for cid, _ in self.classes)

    def stats_for(self, class_id: int) -> Moments:
        for cid, stats in self.classes:
            if cid == class_id:
                return stats
        raise KeyError(class_id)

    def as_dict(self) -> dict[int, Moments]:
        return dict(self.classes)


def fit_reference(features, labels, *, num_classes: int | None = None,
                  label_names=None) -> ReferenceModel:
    """Fit one Gaussian per class from ground-truth-labeled features.

    Every class 0..K-1 must hold at least two samples. K is ``num_classes``
    when given, otherwise ``max(labels) + 1``.
    """
    X = as_feature_matrix(features, name="features")
    y = as_labels(labels, n=X.shape[0], name="labels")
    if y.size and y.min() < 0:
        raise LabelOutOfRange(f"negative label {y.min()}")
    k = int(y.max()) + 1 if num_classes is None else int(num_classes)
    if y.size and y.max() >= k:
        raise LabelOutOfRange(f"label {y.max()} out of range for {k} classes")
    classes = []
    for cid in range(k):
        members = X[y == cid]
        if members.shape[0] < 2:
            raise ClassTooSmall(cid, members.shape[0])
        classes.append((cid, estimate_moments(members)))
    names = tuple(label_names) if label_names is not None else None
    return ReferenceModel(dim=X.shape[1], classes=tuple(classes), label_names=names)


def pooled_moments(model: ReferenceModel) -> Moments:
    """Global moments over all training samples, recombined from class stats.

    Exact for the biased covariance estimator: per-class second raw moments
    compose additively, so this equals a direct fit on the pooled samples up
    to summation order.
    """
    d = model.dim
    total = sum(stats.count for _, stats in model.classes)
    mean = np.zeros(d)
    second = np.zeros((d, d))
    for _, stats in model.classes:
        mean += stats.count * stats.mean
        second += stats.count * (stats.cov + np.outer(stats.mean, stats.mean))
    mean /= total
    cov = second / total - np.outer(mean, mean)
    return Moments(mean=mean, cov=0.5 * (cov + cov.T), count=total)


def save_reference(model: ReferenceModel, path) -> None:
    payload = bytearray()
    payload += struct.pack("<II", model.dim, model.num_classes)
    for cid, stats in model.classes:
        payload += struct.pack("<IQ", cid, stats.count)
        payload += np.ascontiguousarray(stats.mean, dtype="<f8").tobytes()
        payload += np.ascontiguousarray(stats.cov, dtype="<f8").tobytes()
    crc = zlib.crc32(bytes(payload))
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(bytes(payload))
            fh.write(struct.pack("<I", crc))
    except OSError as exc:
        raise IoFailure(f"cannot write reference model: {exc}") from exc


def load_reference(path) -> ReferenceModel:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read reference model: {exc}") from exc
    if len(blob) < len(MAGIC) + 12 or blob[: len(MAGIC)] != MAGIC:
        raise FormatVersionMismatch("bad magic bytes; not an ADDREF01 file")
    payload, tail = blob[len(MAGIC):-4], blob[-4:]
    (stored_crc,) = struct.unpack("<I", tail)
    if zlib.crc32(payload) != stored_crc:
        raise ChecksumMismatch("payload CRC32 does not match")
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(payload):
            raise IoFailure("truncated reference model payload")
        out = payload[off:off + n]
        off += n
        return out

    dim, k = struct.unpack("<II", take(8))
    classes = []
    for _ in range(k):
        cid, count = struct.unpack("<IQ", take(12))
        mean = np.frombuffer(take(8 * dim), dtype="<f8").astype(np.float64)
        cov = np.frombuffer(take(8 * dim * dim), dtype="<f8").astype(np.float64)
        classes.append((int(cid), Moments(mean=mean, cov=cov.reshape(dim, dim),
                                          count=int(count))))
    if off != len(payload):
        raise IoFailure("trailing bytes after reference model payload")
    return ReferenceModel(dim=int(dim), classes=tuple(classes))

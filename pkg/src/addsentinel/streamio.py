"""Query stream files and key=value config files.

Stream format, little-endian: magic "ADDQRY01", u32 dim, then one record per
query of (u16 account-id byte length, account-id utf-8 bytes, dim f32
features, i32 ground-truth label or -1).
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import DataError, FormatVersionMismatch, IoFailure

MAGIC = b"ADDQRY01"


def write_stream(path, features, labels=None, accounts="stream") -> None:
    """Write one record per row of ``features``.

    ``accounts`` is a single id applied to every record or a per-record
    sequence; ``labels`` defaults to -1 (no ground truth).
    """
    feats = np.ascontiguousarray(np.asarray(features, dtype=np.float64), dtype="<f4")
    if feats.ndim != 2:
        raise DataError("features must be a 2-D array")
    n, d = feats.shape
    if labels is None:
        labels = np.full(n, -1, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DataError(f"need {n} labels, got shape {labels.shape}")
    if isinstance(accounts, str):
        accounts = [accounts] * n
    if len(accounts) != n:
        raise DataError(f"need {n} account ids, got {len(accounts)}")
    try:
        with _atomic_writer(path) as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", d))
            for i in range(n):
                ident = accounts[i].encode("utf-8")
                fh.write(struct.pack("<H", len(ident)))
                fh.write(ident)
                fh.write(feats[i].tobytes())
                fh.write(struct.pack("<i", int(labels[i])))
    except OSError as exc:
        raise IoFailure(f"cannot write stream file: {exc}") from exc


def read_stream(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Return (account ids, float64 features (n, d), int labels (n,))."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read stream file: {exc}") from exc
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise FormatVersionMismatch("bad magic bytes; not an ADDQRY01 file")
    (d,) = struct.unpack_from("<I", blob, len(MAGIC))
    off = len(MAGIC) + 4
    accounts: list[str] = []
    feats: list[np.ndarray] = []
    labels: list[int] = []
    rec_fixed = 4 * d + 4
    while off < len(blob):
        if off + 2 > len(blob):
            raise IoFailure("truncated stream record header")
        (alen,) = struct.unpack_from("<H", blob, off)
        off += 2
        if off + alen + rec_fixed > len(blob):
            raise IoFailure("truncated stream record")
        accounts.append(blob[off:off + alen].decode("utf-8"))
        off += alen
        feats.append(np.frombuffer(blob, dtype="<f4", count=d, offset=off))
        off += 4 * d
        (label,) = struct.unpack_from("<i", blob, off)
        off += 4
        labels.append(label)
    features = np.asarray(feats, dtype=np.float64).reshape(len(feats), d)
    if not np.all(np.isfinite(features)):
        raise DataError("stream file contains non-finite features")
    return accounts, features, np.asarray(labels, dtype=np.int64)


class _atomic_writer:
    """Write to a temp file in the target directory, rename on success."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self._tmp = None
        self._fh = None

    def __enter__(self):
        directory = os.path.dirname(self.path) or "."
        fd, self._tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        self._fh = os.fdopen(fd, "wb")
        return self._fh

    def __exit__(self, exc_type, exc, tb):
        self._fh.close()
        if exc_type is None:
            os.replace(self._tmp, self.path)
        else:
            os.unlink(self._tmp)
        return False


def write_text_atomic(path, text: str) -> None:
    with _atomic_writer(path) as fh:
        fh.write(text.encode("utf-8"))


def read_kv(path) -> dict[str, str]:
    """Parse a key = value config file; '#' starts a comment, later keys win."""
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{lineno}: expected key = value")
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise IoFailure(f"cannot read config file: {exc}") from exc
    return out


def format_kv(pairs) -> str:
    items = pairs.items() if isinstance(pairs, dict) else pairs
    return "".join(f"{k} = {v}\n" for k, v in items)


def write_kv(path, pairs) -> None:
    write_text_atomic(path, format_kv(pairs))

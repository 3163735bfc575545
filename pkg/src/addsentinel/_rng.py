"""Named, independent random substreams derived from one run seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, label: str) -> np.random.Generator:
    """Return a generator for the named substream of ``seed``.

    Distinct labels give statistically independent streams; the same
    (seed, label) pair always gives the identical stream.
    """
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(label.encode("utf-8"))])

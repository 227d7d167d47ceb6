"""Bag-of-words models over hash buckets and log importance weights."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from dsir.errors import EmptyInputError, ModelFormatError, VocabMismatchError
from dsir.features import HashedCounts

DEFAULT_ALPHA = 1e-5
MODEL_MAGIC = b"NGMODEL1"


@dataclass
class NgramDistribution:
    probs: np.ndarray
    smoothing_alpha: float = 0.0
    fitted_from: int = 0

    @property
    def num_buckets(self) -> int:
        return int(self.probs.shape[0])

    def __eq__(self, other):
        if not isinstance(other, NgramDistribution):
            return NotImplemented
        return (self.smoothing_alpha == other.smoothing_alpha
                and self.fitted_from == other.fitted_from
                and np.array_equal(self.probs, other.probs))


class CountAccumulator:
    """Mergeable bucket totals; shards are combined by addition."""

    def __init__(self, num_buckets: int):
        self.counts = np.zeros(num_buckets, dtype=np.int64)

    def add(self, z: HashedCounts) -> None:
        if z.num_buckets != self.counts.shape[0]:
            raise VocabMismatchError(
                f"counts over {z.num_buckets} buckets, accumulator has {self.counts.shape[0]}")
        np.add.at(self.counts, z.indices, z.counts)

    def merge(self, other: "CountAccumulator") -> "CountAccumulator":
        out = CountAccumulator(self.counts.shape[0])
        out.counts = self.counts + other.counts
        return out

    def distribution(self) -> NgramDistribution:
        total = int(self.counts.sum())
        if total == 0:
            raise EmptyInputError("empty training stream")
        return NgramDistribution(self.counts / total, 0.0, total)


def fit(counts: Iterable[HashedCounts], num_buckets: int) -> tuple[np.ndarray, NgramDistribution]:
    """Count bucket frequencies; returns the raw totals and the unsmoothed MLE."""
    acc = CountAccumulator(num_buckets)
    for z in counts:
        acc.add(z)
    return acc.counts, acc.distribution()


def smooth(dist: NgramDistribution, alpha: float = DEFAULT_ALPHA) -> NgramDistribution:
    """Mix with the uniform distribution: ``(1 - alpha) * p + alpha / V``."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if alpha == 0.0:
        return NgramDistribution(dist.probs.copy(), dist.smoothing_alpha, dist.fitted_from)
    v = dist.num_buckets
    probs = (1.0 - alpha) * dist.probs + alpha / v
    return NgramDistribution(probs, alpha, dist.fitted_from)


def log_ratio(target: NgramDistribution, raw: NgramDistribution) -> np.ndarray:
    if target.num_buckets != raw.num_buckets:
        raise VocabMismatchError(
            f"target has {target.num_buckets} buckets, raw has {raw.num_buckets}")
    if np.any(target.probs <= 0) or np.any(raw.probs <= 0):
        raise ValueError("log weights need strictly positive (smoothed) distributions")
    return np.log(target.probs) - np.log(raw.probs)


class LogWeightScorer:
    """Precomputes per-bucket log ratios so each example costs one pass over its buckets."""

    def __init__(self, target: NgramDistribution, raw: NgramDistribution):
        self.num_buckets = target.num_buckets
        self._ratio = log_ratio(target, raw)

    def __call__(self, z: HashedCounts) -> float:
        if z.num_buckets != self.num_buckets:
            raise VocabMismatchError(
                f"features use {z.num_buckets} buckets, models use {self.num_buckets}")
        # fsum is correctly rounded, so the result does not depend on bucket order
        return math.fsum((z.counts * self._ratio[z.indices]).tolist())


def log_weight(z: HashedCounts, target: NgramDistribution, raw: NgramDistribution) -> float:
    return LogWeightScorer(target, raw)(z)


def save_model(path: str | Path, dist: NgramDistribution, **extra) -> None:
    header = {"V": dist.num_buckets, "alpha": dist.smoothing_alpha,
              "fitted_from": dist.fitted_from, **extra}
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.asarray(dist.probs, dtype="<f8").tobytes())


def read_header(fh, magic: bytes) -> dict:
    line = fh.readline().rstrip(b"\n")
    if line != magic:
        raise ModelFormatError(f"bad magic {line[:16]!r}, expected {magic!r}")
    try:
        return json.loads(fh.readline())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"unreadable header: {exc.msg}") from None


def read_doubles(fh, n: int) -> np.ndarray:
    raw = fh.read()
    if len(raw) != 8 * n:
        raise ModelFormatError(f"expected {n} doubles, found {len(raw) / 8:g}")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def load_model(path: str | Path) -> tuple[NgramDistribution, dict]:
    with open(path, "rb") as fh:
        header = read_header(fh, MODEL_MAGIC)
        probs = read_doubles(fh, int(header["V"]))
    return NgramDistribution(probs, float(header["alpha"]), int(header["fitted_from"])), header


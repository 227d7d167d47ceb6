"""Hashed unigram + bigram features over a fixed bucket space."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from dsir.textstats import word_tokens

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba installed
    numba = None

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 20)
def fnv1a64_str(s: str) -> int:
    return fnv1a64(s.encode("utf-8"))


def fnv1a64_many(strings: Sequence[str]) -> np.ndarray:
    """FNV-1a 64 of many strings at once, as a uint64 array.

    Column-wise over the padded byte matrix; matches :func:`fnv1a64` bit for bit.
    """
    encoded = [s.encode("utf-8") for s in strings]
    n = len(encoded)
    out = np.full(n, FNV_OFFSET, dtype=np.uint64)
    if n == 0:
        return out
    lengths = np.fromiter((len(b) for b in encoded), dtype=np.int64, count=n)
    width = int(lengths.max())
    if width == 0:
        return out
    buf = np.zeros((n, width), dtype=np.uint8)
    flat = np.frombuffer(b"".join(encoded), dtype=np.uint8)
    rows = np.repeat(np.arange(n), lengths)
    starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    cols = np.arange(flat.size) - np.repeat(starts, lengths)
    buf[rows, cols] = flat
    prime = np.uint64(FNV_PRIME)
    for j in range(width):
        active = lengths > j
        mixed = (out ^ buf[:, j].astype(np.uint64)) * prime
        out = np.where(active, mixed, out)
    return out


def hash_bucket(ngram: str, num_buckets: int) -> int:
    return fnv1a64_str(ngram) % num_buckets


@dataclass(frozen=True)
class FeatureConfig:
    num_buckets: int = 10_000
    include_bigrams: bool = True

    def __post_init__(self):
        if self.num_buckets < 2:
            raise ValueError(f"num_buckets must be >= 2, got {self.num_buckets}")


class HashedCounts:
    """Sparse bucket counts stored as sorted bucket indices and positive counts."""

    __slots__ = ("indices", "counts", "num_buckets")

    def __init__(self, indices, counts, num_buckets: int):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.num_buckets = int(num_buckets)

    @classmethod
    def from_dict(cls, buckets: dict[int, int], num_buckets: int) -> "HashedCounts":
        items = sorted((b, c) for b, c in buckets.items() if c)
        return cls([b for b, _ in items], [c for _, c in items], num_buckets)

    @classmethod
    def from_buckets(cls, buckets: np.ndarray, num_buckets: int) -> "HashedCounts":
        keys, counts = np.unique(buckets, return_counts=True)
        return cls(keys, counts, num_buckets)

    @property
    def buckets(self) -> dict[int, int]:
        return dict(zip(self.indices.tolist(), self.counts.tolist()))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, HashedCounts):
            return NotImplemented
        return (self.num_buckets == other.num_buckets
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.counts, other.counts))

    def __repr__(self) -> str:
        return f"HashedCounts({self.buckets!r}, num_buckets={self.num_buckets})"

    def __add__(self, other: "HashedCounts") -> "HashedCounts":
        if other.num_buckets != self.num_buckets:
            raise ValueError("cannot add counts over different bucket spaces")
        idx = np.concatenate([self.indices, other.indices])
        cnt = np.concatenate([self.counts, other.counts])
        keys, inv = np.unique(idx, return_inverse=True)
        return HashedCounts(keys, np.bincount(inv, weights=cnt, minlength=keys.shape[0]).astype(np.int64),
                            self.num_buckets)

    def to_dense(self) -> np.ndarray:
        v = np.zeros(self.num_buckets, dtype=np.int64)
        v[self.indices] = self.counts
        return v

    def to_pairs(self) -> list[list[int]]:
        return [[b, c] for b, c in zip(self.indices.tolist(), self.counts.tolist())]


def ngrams(tokens: Sequence[str], include_bigrams: bool = True) -> list[str]:
    grams = list(tokens)
    if include_bigrams:
        grams.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    return grams


def _ngram_hashes_py(tokens: Sequence[str], include_bigrams: bool) -> list[int]:
    return [fnv1a64_str(g) for g in ngrams(tokens, include_bigrams)]


if numba is not None:
    @numba.njit(cache=True, nogil=True)
    def _hash_spans(buf, starts, ends, include_bigrams):  # pragma: no cover - compiled
        n_tok = starts.shape[0]
        n_out = n_tok
        if include_bigrams and n_tok > 1:
            n_out += n_tok - 1
        out = np.empty(n_out, dtype=np.uint64)
        prime = np.uint64(0x100000001B3)
        for t in range(n_tok):
            h = np.uint64(0xCBF29CE484222325)
            for j in range(starts[t], ends[t]):
                h = (h ^ np.uint64(buf[j])) * prime
            out[t] = h
            if include_bigrams and t > 0:
                # "prev cur": continue the previous unigram state over " " + cur
                hb = (out[t - 1] ^ np.uint64(32)) * prime
                for j in range(starts[t], ends[t]):
                    hb = (hb ^ np.uint64(buf[j])) * prime
                out[n_tok + t - 1] = hb
        return out

    @numba.njit(cache=True, nogil=True)
    def _space_spans(buf):  # pragma: no cover - compiled
        # tokens joined by single spaces; 0x20 never occurs inside a token
        n_tok = 1
        for i in range(buf.shape[0]):
            if buf[i] == 32:
                n_tok += 1
        starts = np.empty(n_tok, dtype=np.int64)
        ends = np.empty(n_tok, dtype=np.int64)
        t = 0
        starts[0] = 0
        for i in range(buf.shape[0]):
            if buf[i] == 32:
                ends[t] = i
                t += 1
                starts[t] = i + 1
        ends[t] = buf.shape[0]
        return starts, ends

    @numba.njit(cache=True, nogil=True)
    def _ascii_spans(buf):  # pragma: no cover - compiled
        # lowercases in place; classes: 0 whitespace, 1 letter/digit, 2 other symbol
        n = buf.shape[0]
        cls = np.empty(n, dtype=np.int8)
        for i in range(n):
            c = buf[i]
            if 65 <= c <= 90:
                buf[i] = c + 32
                cls[i] = 1
            elif (97 <= c <= 122) or (48 <= c <= 57):
                cls[i] = 1
            elif c == 32 or (9 <= c <= 13) or (28 <= c <= 31):
                cls[i] = 0
            else:
                cls[i] = 2
        starts = np.empty(n, dtype=np.int64)
        ends = np.empty(n, dtype=np.int64)
        t = 0
        i = 0
        while i < n:
            if cls[i] == 0:
                i += 1
                continue
            j = i + 1
            while j < n and cls[j] == cls[i]:
                j += 1
            starts[t] = i
            ends[t] = j
            t += 1
            i = j
        return starts[:t], ends[:t]

    @numba.njit(cache=True, nogil=True)
    def _count_buckets(hashes, num_buckets):  # pragma: no cover - compiled
        b = np.sort((hashes % np.uint64(num_buckets)).astype(np.int64))
        n_keys = 0
        for i in range(b.shape[0]):
            if i == 0 or b[i] != b[i - 1]:
                n_keys += 1
        keys = np.empty(n_keys, dtype=np.int64)
        counts = np.zeros(n_keys, dtype=np.int64)
        j = -1
        for i in range(b.shape[0]):
            if i == 0 or b[i] != b[i - 1]:
                j += 1
                keys[j] = b[i]
            counts[j] += 1
        return keys, counts

    @numba.njit(cache=True, nogil=True)
    def _featurize_ascii(buf, include_bigrams, num_buckets):  # pragma: no cover - compiled
        starts, ends = _ascii_spans(buf)
        return _count_buckets(_hash_spans(buf, starts, ends, include_bigrams), num_buckets)

    @numba.njit(cache=True, nogil=True)
    def _featurize_joined(buf, include_bigrams, num_buckets):  # pragma: no cover - compiled
        starts, ends = _space_spans(buf)
        return _count_buckets(_hash_spans(buf, starts, ends, include_bigrams), num_buckets)
else:  # pragma: no cover
    _featurize_ascii = _featurize_joined = None


def ngram_hashes(tokens: Sequence[str], include_bigrams: bool = True) -> np.ndarray:
    """FNV-1a 64 of every unigram, then every bigram, of ``tokens``."""
    if numba is None or not tokens:
        return np.array(_ngram_hashes_py(tokens, include_bigrams), dtype=np.uint64)
    buf = np.frombuffer(" ".join(tokens).encode("utf-8"), dtype=np.uint8)
    starts, ends = _space_spans(buf)
    return _hash_spans(buf, starts, ends, include_bigrams)


def featurize(text: str, cfg: FeatureConfig | None = None) -> HashedCounts:
    cfg = cfg or FeatureConfig()
    v = cfg.num_buckets
    if _featurize_ascii is not None and text.isascii():
        # compiled tokenizer; agrees with word_tokens on ASCII input
        keys, counts = _featurize_ascii(np.frombuffer(bytearray(text, "ascii"), dtype=np.uint8),
                                        cfg.include_bigrams, v)
        return HashedCounts(keys, counts, v)
    tokens = word_tokens(text)
    if not tokens:
        return HashedCounts([], [], v)
    if _featurize_joined is not None:
        buf = np.frombuffer(" ".join(tokens).encode("utf-8"), dtype=np.uint8)
        keys, counts = _featurize_joined(buf, cfg.include_bigrams, v)
        return HashedCounts(keys, counts, v)
    buckets = np.array(_ngram_hashes_py(tokens, cfg.include_bigrams), dtype=np.uint64) % np.uint64(v)
    return HashedCounts.from_buckets(buckets.astype(np.int64), v)


def featurize_many(texts: Iterable[str], cfg: FeatureConfig | None = None) -> list[HashedCounts]:
    cfg = cfg or FeatureConfig()
    return [featurize(t, cfg) for t in texts]

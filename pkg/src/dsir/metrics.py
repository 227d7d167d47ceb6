"""KL divergence between hashed n-gram distributions and selection summaries."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from dsir.corpus_io import Example
from dsir.errors import EmptyInputError, VocabMismatchError
from dsir.features import FeatureConfig, featurize
from dsir.ngram_model import DEFAULT_ALPHA, CountAccumulator, NgramDistribution, smooth

KL_MAX_EXAMPLES = 100_000


def kl_divergence(p: NgramDistribution, q: NgramDistribution) -> float:
    """KL(p || q) in nats, with ``0 * log(0 / q) = 0``."""
    pp, qq = np.asarray(p.probs, dtype=np.float64), np.asarray(q.probs, dtype=np.float64)
    if pp.shape != qq.shape:
        raise VocabMismatchError(f"distributions over {pp.shape[0]} and {qq.shape[0]} buckets")
    support = pp > 0
    if np.any(qq[support] <= 0):
        raise ValueError("q has zero mass where p does not; smooth q first")
    terms = pp[support] * (np.log(pp[support]) - np.log(qq[support]))
    return max(math.fsum(terms.tolist()), 0.0)


def dataset_distribution(examples: Iterable[Example], max_examples: int = KL_MAX_EXAMPLES,
                         cfg: FeatureConfig | None = None,
                         alpha: float = DEFAULT_ALPHA) -> NgramDistribution:
    """Smoothed n-gram distribution of the first ``max_examples`` examples."""
    cfg = cfg or FeatureConfig()
    acc = CountAccumulator(cfg.num_buckets)
    seen = 0
    for ex in itertools.islice(examples, max_examples):
        acc.add(featurize(ex.text, cfg))
        seen += 1
    if seen == 0:
        raise EmptyInputError("empty example stream")
    return smooth(acc.distribution(), alpha)


def kl_reduction(target: NgramDistribution, raw: NgramDistribution,
                 selected: NgramDistribution) -> float:
    """``KL(target || raw) - KL(target || selected)``; positive means closer to target."""
    return kl_divergence(target, raw) - kl_divergence(target, selected)


@dataclass(frozen=True)
class SourceHistogram:
    counts: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def fractions(self) -> dict[str, float]:
        n = self.total
        return {s: c / n for s, c in self.counts.items()}

    def to_dict(self) -> dict:
        return {"counts": dict(self.counts), "fractions": self.fractions}


def source_histogram(selection: Iterable[str], source_of: Mapping[str, str]) -> SourceHistogram:
    counts = Counter(source_of[i] for i in selection)
    if not counts:
        raise EmptyInputError("empty selection")
    return SourceHistogram(dict(sorted(counts.items())))


def total_variation(p: Mapping[str, float] | np.ndarray, q: Mapping[str, float] | np.ndarray) -> float:
    if isinstance(p, Mapping):
        keys = sorted(set(p) | set(q))
        p = np.array([p.get(k, 0.0) for k in keys])
        q = np.array([q.get(k, 0.0) for k in keys])
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())

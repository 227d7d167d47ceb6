"""Importance-resampling data selection over hashed n-gram features."""

from dsir.corpus_io import Example, chunk_document, concat_pairs, read_jsonl, write_jsonl
from dsir.errors import DsirError
from dsir.features import FeatureConfig, HashedCounts, featurize, hash_bucket
from dsir.ngram_model import (CountAccumulator, LogWeightScorer, NgramDistribution, fit, log_weight,
                              smooth)
from dsir.selection import gumbel_noise, gumbel_topk, quota_select, random_select, topk_select
from dsir.textstats import QualityConfig, QualityStats, filter_corpus, passes_quality, quality_stats

__version__ = "0.1.0"

__all__ = [
    "CountAccumulator",
    "DsirError",
    "Example",
    "FeatureConfig",
    "HashedCounts",
    "LogWeightScorer",
    "NgramDistribution",
    "QualityConfig",
    "QualityStats",
    "chunk_document",
    "concat_pairs",
    "featurize",
    "filter_corpus",
    "fit",
    "gumbel_noise",
    "gumbel_topk",
    "hash_bucket",
    "log_weight",
    "passes_quality",
    "quality_stats",
    "quota_select",
    "random_select",
    "read_jsonl",
    "smooth",
    "topk_select",
    "write_jsonl",
]

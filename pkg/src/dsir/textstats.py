"""Word tokenization and the four-rule quality filter."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Iterator

from dsir.corpus_io import Example

# letter/digit runs, or runs of anything else that is not whitespace
_TOKEN_RE = re.compile(r"[^\W_]+|(?:[^\w\s]|_)+")
# same tokens when the text has no underscore, and faster
_TOKEN_NO_UNDERSCORE_RE = re.compile(r"\w+|[^\w\s]+")
_NUMERIC_RE = re.compile(r"\d+(?:[.,]\d+)*")
_HAS_ALNUM_RE = re.compile(r"[^\W_]")

RULES = ("length", "repeat", "informativeness", "numeric")


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = resources.files("dsir").joinpath("data/stopwords_en.txt").read_text(encoding="utf-8")
    return frozenset(w for w in text.split("\n") if w)


def word_tokens(text: str) -> list[str]:
    """Lowercased letter/digit runs and symbol runs, in order."""
    text = text.lower()
    if "_" in text:
        return _TOKEN_RE.findall(text)
    return _TOKEN_NO_UNDERSCORE_RE.findall(text)


@dataclass(frozen=True)
class QualityStats:
    word_len: int
    repeat_ratio: float
    informativeness: float
    numeric_ratio: float


@dataclass(frozen=True)
class QualityConfig:
    word_len: tuple[int, int] = (40, 500)
    repeat_ratio: tuple[float, float] = (0.02, 0.2)
    informativeness: tuple[float, float] = (0.3, 0.7)
    numeric_ratio_max: float = 0.2
    stopwords: frozenset[str] = field(default_factory=default_stopwords)

    def __post_init__(self):
        for name in ("word_len", "repeat_ratio", "informativeness"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if not self.stopwords:
            raise ValueError("stopword list is empty")

    @classmethod
    def from_dict(cls, d: dict) -> "QualityConfig":
        kw = {}
        for name in ("word_len", "repeat_ratio", "informativeness"):
            if name in d:
                kw[name] = tuple(d[name])
        if "numeric_ratio_max" in d:
            kw["numeric_ratio_max"] = float(d["numeric_ratio_max"])
        if "stopwords" in d:
            kw["stopwords"] = frozenset(d["stopwords"])
        return cls(**kw)


def is_punctuation(token: str) -> bool:
    return _HAS_ALNUM_RE.search(token) is None


def is_numeric(token: str) -> bool:
    return _NUMERIC_RE.fullmatch(token) is not None


def quality_stats(text: str, stopwords: Iterable[str] | None = None) -> QualityStats:
    stop = default_stopwords() if stopwords is None else stopwords
    tokens = word_tokens(text)
    n = len(tokens)
    if n == 0:
        return QualityStats(0, 0.0, 0.0, 0.0)
    counts = Counter(tokens)
    informative = numeric = 0
    for tok, c in counts.items():
        if tok not in stop and not is_punctuation(tok):
            informative += c
        if is_numeric(tok):
            numeric += c
    return QualityStats(
        word_len=n,
        repeat_ratio=max(counts.values()) / n,
        informativeness=informative / n,
        numeric_ratio=numeric / n,
    )


def passes_quality(stats: QualityStats, cfg: QualityConfig | None = None) -> tuple[bool, str | None]:
    """Return ``(True, None)`` or ``(False, rule)`` for the first rule violated."""
    cfg = cfg or QualityConfig()
    if not cfg.word_len[0] <= stats.word_len <= cfg.word_len[1]:
        return False, "length"
    if not cfg.repeat_ratio[0] <= stats.repeat_ratio <= cfg.repeat_ratio[1]:
        return False, "repeat"
    if not cfg.informativeness[0] <= stats.informativeness <= cfg.informativeness[1]:
        return False, "informativeness"
    if not stats.numeric_ratio < cfg.numeric_ratio_max:
        return False, "numeric"
    return True, None


@dataclass
class FilterReport:
    total: int = 0
    kept: int = 0
    rejected_by_rule: dict[str, int] = field(default_factory=lambda: {r: 0 for r in RULES})

    @property
    def keep_rate(self) -> float:
        return self.kept / self.total if self.total else 0.0

    def record(self, rule: str | None) -> None:
        self.total += 1
        if rule is None:
            self.kept += 1
        else:
            self.rejected_by_rule[rule] += 1

    def merge(self, other: "FilterReport") -> "FilterReport":
        return FilterReport(
            total=self.total + other.total,
            kept=self.kept + other.kept,
            rejected_by_rule={r: self.rejected_by_rule[r] + other.rejected_by_rule[r] for r in RULES},
        )

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "rejected_by_rule": dict(self.rejected_by_rule),
            "keep_rate": self.keep_rate,
        }


def verdict(ex: Example, cfg: QualityConfig) -> str | None:
    ok, rule = passes_quality(quality_stats(ex.text, cfg.stopwords), cfg)
    return None if ok else rule


def filter_corpus(examples: Iterable[Example], cfg: QualityConfig | None = None,
                  report: FilterReport | None = None) -> tuple[Iterator[Example], FilterReport]:
    """Lazily filter ``examples``.

    The returned report fills in as the kept stream is consumed; it is only
    complete once the iterator is exhausted.
    """
    cfg = cfg or QualityConfig()
    report = report if report is not None else FilterReport()

    def _kept():
        for ex in examples:
            rule = verdict(ex, cfg)
            report.record(rule)
            if rule is None:
                yield ex

    return _kept(), report

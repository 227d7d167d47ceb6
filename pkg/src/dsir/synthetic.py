"""Seeded synthetic corpora for demos and tests.

Two "domains" share English function words but draw content words from
disjoint pseudo-word vocabularies with Zipfian frequencies.
"""

from __future__ import annotations

import numpy as np

from dsir.corpus_io import Example
from dsir.textstats import default_stopwords

_SYLLABLES = ["ka", "lo", "mi", "ren", "tu", "sa", "vor", "ne", "qui", "da", "pel", "zo",
              "ash", "bri", "cu", "fen", "gal", "hom", "ix", "jus"]
_FUNCTION = sorted(w for w in default_stopwords() if "'" not in w and len(w) > 1)


def pseudo_words(n: int, rng: np.random.Generator, prefix: str = "") -> list[str]:
    out: set[str] = set()
    words = []
    while len(words) < n:
        k = int(rng.integers(2, 4))
        w = prefix + "".join(rng.choice(_SYLLABLES, size=k))
        if w not in out:
            out.add(w)
            words.append(w)
    return words


class Domain:
    """Emits texts mixing function words with this domain's content words."""

    def __init__(self, name: str, vocab_size: int, seed: int, function_rate: float = 0.45,
                 zipf: float = 1.1):
        rng = np.random.default_rng(seed)
        self.name = name
        self.vocab = pseudo_words(vocab_size, rng, prefix=name[:1])
        ranks = np.arange(1, vocab_size + 1, dtype=np.float64)
        p = ranks ** -zipf
        self.probs = p / p.sum()
        self.function_rate = function_rate

    def text(self, rng: np.random.Generator, n_words: int = 128) -> str:
        is_func = rng.random(n_words) < self.function_rate
        content = rng.choice(len(self.vocab), size=n_words, p=self.probs)
        func = rng.integers(0, len(_FUNCTION), size=n_words)
        return " ".join(_FUNCTION[f] if m else self.vocab[c] for m, c, f in zip(is_func, content, func))


def two_domain_corpus(n: int, target_fraction: float, seed: int, n_words: int = 128,
                      id_prefix: str = "raw") -> list[Example]:
    """Raw corpus where ``target_fraction`` of examples come from the "formal" domain."""
    formal, web = formal_domain(), web_domain()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        dom = formal if rng.random() < target_fraction else web
        out.append(Example(f"{id_prefix}{i:07d}", dom.text(rng, n_words), dom.name))
    return out


def target_corpus(n: int, seed: int, n_words: int = 128) -> list[Example]:
    formal = formal_domain()
    rng = np.random.default_rng(seed)
    return [Example(f"tgt{i:07d}", formal.text(rng, n_words), formal.name) for i in range(n)]


def formal_domain() -> Domain:
    return Domain("formal", 3000, seed=11)


def web_domain() -> Domain:
    return Domain("web", 3000, seed=23)

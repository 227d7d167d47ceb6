"""Selection strategies: Gumbel top-k resampling, noisy thresholding, top-k,
random, and quota-constrained mixing.

All randomness is keyed. Gumbel noise for an example depends only on the
global seed and the example id, so results do not depend on input order,
sharding or thread count. Ties in any ranking are broken by ascending id.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from dsir.errors import InfeasibleQuotaError, SelectionSizeError
from dsir.features import fnv1a64_many

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53
_TWO_M54 = 2.0 ** -54
_U_MAX = 1.0 - 2.0 ** -53  # largest double below 1


@dataclass(frozen=True)
class SelectionScore:
    example_id: str
    log_weight: float
    gumbel: float
    final: float


@dataclass(frozen=True)
class SelectorConfig:
    k: int
    seed: int
    pareto_shape: float = 9.0
    quotas: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.quotas is not None:
            check_quotas(self.quotas)


def splitmix64(x: np.ndarray) -> np.ndarray:
    """One SplitMix64 output for each state in ``x`` (uint64, wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def open_unit(bits: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles strictly inside (0, 1)."""
    u = ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_M53
    return np.minimum(np.maximum(u - _TWO_M54, _TWO_M54), _U_MAX)


def gumbel_from_hashes(seed: int, id_hashes: np.ndarray) -> np.ndarray:
    """Standard Gumbel noise for pre-hashed ids under one seed."""
    with np.errstate(over="ignore"):
        u = open_unit(splitmix64(np.uint64(seed) ^ id_hashes))
    return -np.log(-np.log(u))


def gumbel_noise_many(seed: int, ids: Sequence[str]) -> np.ndarray:
    return gumbel_from_hashes(seed, fnv1a64_many(ids))


def gumbel_noise(seed: int, example_id: str) -> float:
    return float(gumbel_noise_many(seed, [example_id])[0])


def _as_pairs(scores) -> tuple[list[str], np.ndarray]:
    if isinstance(scores, Mapping):
        scores = scores.items()
    ids, values = [], []
    for i, v in scores:
        ids.append(i)
        values.append(v)
    return ids, np.asarray(values, dtype=np.float64)


def _check_k(k: int, n: int) -> None:
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    if k > n:
        raise SelectionSizeError(f"requested k={k} but only {n} candidates")


def top_k_order(values: np.ndarray, ids: Sequence[str], k: int) -> np.ndarray:
    """Indices of the ``k`` largest values, descending, ties by ascending id.

    Candidates are isolated with an introselect partition; only the
    survivors (the k winners plus anything tied at the cut) are sorted.
    """
    n = values.shape[0]
    _check_k(k, n)
    if k == 0:
        return np.empty(0, dtype=np.int64)
    cut = np.partition(values, n - k)[n - k]
    cand = np.flatnonzero(values >= cut)
    id_arr = np.array([ids[i] for i in cand], dtype=object)
    # lexsort: last key is primary
    order = np.lexsort((id_arr.astype(str), -values[cand]))
    return cand[order[:k]]


def gumbel_scores(scores, seed: int) -> list[SelectionScore]:
    ids, lw = _as_pairs(scores)
    if not np.all(np.isfinite(lw)):
        raise ValueError("log weights must be finite")
    g = gumbel_noise_many(seed, ids)
    final = lw + g
    return [SelectionScore(i, float(a), float(b), float(c)) for i, a, b, c in zip(ids, lw, g, final)]


def gumbel_topk(scores, k: int, seed: int, *, return_scores: bool = False):
    """Sample ``k`` ids without replacement from softmax(log_weight).

    ``scores`` is a sequence of ``(id, log_weight)`` pairs or a mapping.
    Each log weight is perturbed by keyed standard Gumbel noise and the ids
    of the ``k`` largest perturbed scores are returned, best first.
    """
    ids, lw = _as_pairs(scores)
    _check_k(k, len(ids))
    if not np.all(np.isfinite(lw)):
        raise ValueError("log weights must be finite")
    g = gumbel_noise_many(seed, ids)
    final = lw + g
    idx = top_k_order(final, ids, k)
    if return_scores:
        return [SelectionScore(ids[i], float(lw[i]), float(g[i]), float(final[i])) for i in idx]
    return [ids[i] for i in idx]


def gumbel_topk_batch(log_weights: Sequence[float], ids: Sequence[str], k: int,
                      seeds: Sequence[int]) -> np.ndarray:
    """Run :func:`gumbel_topk` for many seeds over one small instance.

    Returns an int array of shape ``(len(seeds), k)`` with positions into
    ``ids``. Uses the same keyed noise and tie rule, vectorized over seeds.
    """
    lw = np.asarray(log_weights, dtype=np.float64)
    n = lw.shape[0]
    _check_k(k, n)
    seeds = np.asarray(seeds, dtype=np.uint64)
    h = fnv1a64_many(ids)
    with np.errstate(over="ignore"):
        u = open_unit(splitmix64(seeds[:, None] ^ h[None, :]))
    final = lw[None, :] - np.log(-np.log(u))
    # rank ids once so a stable sort on -final breaks ties by ascending id
    id_rank = np.argsort(np.array(ids, dtype=str), kind="stable")
    permuted = final[:, id_rank]
    order = np.argsort(-permuted, axis=1, kind="stable")[:, :k]
    return id_rank[order]


def swr_oracle(weights: Sequence[float], k: int) -> dict[tuple[int, ...], float]:
    """Exact probability of every ordered k-sequence under sequential sampling
    without replacement with probabilities proportional to ``weights``.
    """
    w = [float(x) for x in weights]
    n = len(w)
    if n > 8:
        raise ValueError("swr_oracle enumerates all sequences; N must be <= 8")
    _check_k(k, n)
    if any(x <= 0 for x in w):
        raise ValueError("weights must be positive")
    total = math.fsum(w)
    out = {}
    for seq in itertools.permutations(range(n), k):
        p = 1.0
        remaining = total
        for i in seq:
            p *= w[i] / remaining
            remaining -= w[i]
        out[seq] = p
    return out


def lomax_sample(u: np.ndarray, shape: float) -> np.ndarray:
    """Inverse CDF of the Lomax (Pareto II, scale 1) distribution."""
    return (1.0 - u) ** (-1.0 / shape) - 1.0


def threshold_pass(probs: np.ndarray, shape: float, rng: np.random.Generator) -> np.ndarray:
    """One noisy-threshold pass: accept where ``rho > 1 - beta``, beta ~ Lomax(shape)."""
    beta = lomax_sample(rng.random(probs.shape[0]), shape)
    return probs > 1.0 - beta


def noisy_threshold_select(probs, k: int, shape: float = 9.0, seed: int = 0) -> list[str]:
    """Heuristic-classification selection with Pareto-noised thresholds.

    Passes over the not-yet-accepted examples repeat, each with freshly drawn
    noise, until at least ``k`` are accepted; then ``k`` of the accepted
    examples are drawn uniformly without replacement. Candidates are sorted
    by id first so the result does not depend on input order.
    """
    ids, rho = _as_pairs(probs)
    order = sorted(range(len(ids)), key=ids.__getitem__)
    ids, rho = [ids[i] for i in order], rho[order]
    _check_k(k, len(ids))
    if np.any((rho < 0) | (rho > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    accepted = np.zeros(len(ids), dtype=bool)
    while accepted.sum() < k:
        pending = np.flatnonzero(~accepted)
        accepted[pending[threshold_pass(rho[pending], shape, rng)]] = True
    chosen = np.flatnonzero(accepted)
    pick = rng.choice(chosen.shape[0], size=k, replace=False)
    return [ids[i] for i in chosen[pick]]


def topk_select(probs, k: int) -> list[str]:
    ids, values = _as_pairs(probs)
    return [ids[i] for i in top_k_order(values, ids, k)]


def random_select(ids: Iterable[str], k: int, seed: int) -> list[str]:
    """Uniform sample of ``k`` ids without replacement (seeded shuffle).

    Ids are sorted first, so the result depends on the id set, not its order.
    """
    pool = sorted(ids)
    _check_k(k, len(pool))
    perm = np.random.default_rng(seed).permutation(len(pool))
    return [pool[i] for i in perm[:k]]


def check_quotas(quotas: Mapping[str, float]) -> None:
    if not quotas:
        raise InfeasibleQuotaError("no quota groups given")
    if any(q < 0 for q in quotas.values()):
        raise InfeasibleQuotaError("quota fractions must be non-negative")
    if abs(math.fsum(quotas.values()) - 1.0) > 1e-9:
        raise InfeasibleQuotaError(f"quota fractions sum to {math.fsum(quotas.values())}, not 1")


def quota_sizes(quotas: Mapping[str, float], k: int) -> dict[str, int]:
    """Per-group counts: round(q * k), rounding residue to the largest-quota group."""
    check_quotas(quotas)
    sizes = {g: int(math.floor(q * k + 0.5)) for g, q in quotas.items()}
    biggest = min(quotas, key=lambda g: (-quotas[g], g))
    sizes[biggest] += k - sum(sizes.values())
    if sizes[biggest] < 0:
        raise InfeasibleQuotaError(f"rounding leaves group {biggest!r} with a negative count")
    return sizes


STRATEGIES: dict[str, Callable] = {
    "gumbel": lambda pairs, k, seed: gumbel_topk(pairs, k, seed),
    "random": lambda pairs, k, seed: random_select([i for i, _ in pairs], k, seed),
}


def quota_select(scores, source_of: Mapping[str, str], quotas: Mapping[str, float], k: int,
                 seed: int, strategy: str = "gumbel") -> list[str]:
    """Run ``strategy`` separately inside each quota group and concatenate.

    Groups are visited in descending quota order (ties by name). Candidates
    whose group has no quota are ignored.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown quota strategy {strategy!r}; choose from {sorted(STRATEGIES)}")
    sizes = quota_sizes(quotas, k)
    ids, values = _as_pairs(scores)
    groups: dict[str, list[tuple[str, float]]] = {g: [] for g in quotas}
    for i, v in zip(ids, values.tolist()):
        g = source_of[i]
        if g in groups:
            groups[g].append((i, v))
    out = []
    for g in sorted(quotas, key=lambda g: (-quotas[g], g)):
        if len(groups[g]) < sizes[g]:
            raise InfeasibleQuotaError(
                f"group {g!r} needs {sizes[g]} examples but has {len(groups[g])}")
        if sizes[g]:
            out.extend(STRATEGIES[strategy](groups[g], sizes[g], seed))
    return out

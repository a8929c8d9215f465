"""Skip-gram with negative sampling over shopping sessions (or text).

Sessions play the role of sentences and product ids the role of words. The
same core trains the description-text baseline.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _sgns
from .datamodel import DataError, EmbeddingSpace, Session, SessionSet, SpaceKind, check_finite

log = logging.getLogger(__name__)

PRODUCT_MIN_COUNT = 1
TEXT_MIN_COUNT = 5


@dataclass(frozen=True)
class TrainConfig:
    dimension: int = 50
    window: int = 10
    epochs: int = 30
    ns_exponent: float = 0.75
    negatives_per_positive: int = 5
    learning_rate_initial: float = 0.025
    #: None picks 1 for sessions and 5 for text.
    min_count: int | None = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be > 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.ns_exponent <= 1.0:
            raise ValueError("ns_exponent must lie in [0, 1]")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.learning_rate_initial <= 0:
            raise ValueError("learning_rate_initial must be > 0")
        if self.min_count is not None and self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class Vocabulary:
    """Items in descending frequency order, ties broken by identifier."""

    items: tuple[str, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(self.items)})

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item: object) -> bool:
        return item in self._index

    def index(self, item: str) -> int:
        return self._index.get(item, -1)

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.items, self.counts))


def _sequences(data: SessionSet | Iterable[Sequence[str]]) -> list[Sequence[str]]:
    if isinstance(data, SessionSet):
        return [s.events for s in data]
    return [list(seq) for seq in data]


def build_vocabulary(data: SessionSet | Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    seqs = _sequences(data)
    if not seqs:
        raise DataError("cannot build a vocabulary from an empty corpus")
    counts = Counter(item for seq in seqs for item in seq)
    kept = sorted(((k, c) for k, c in counts.items() if c >= min_count), key=lambda kc: (-kc[1], kc[0]))
    if not kept:
        raise DataError(f"vocabulary is empty after applying min_count={min_count}")
    return Vocabulary(tuple(k for k, _ in kept), tuple(c for _, c in kept))


def generate_pairs(
    session: Session | Sequence[str],
    window: int,
    rng: np.random.Generator | None = None,
    vocabulary: Vocabulary | None = None,
) -> list[tuple[str, str]]:
    """Enumerate ordered (center, context) pairs for one session.

    The effective window of each center is drawn uniformly from
    ``1..window`` with ``rng``; without ``rng`` the full window is used.
    Out-of-vocabulary items keep their position but never form a pair.
    """
    events = session.events if isinstance(session, Session) else tuple(session)
    n = len(events)
    pairs = []
    for i, center in enumerate(events):
        b = window if rng is None else int(rng.integers(1, window + 1))
        if vocabulary is not None and center not in vocabulary:
            continue
        for j in range(max(0, i - b), min(n, i + b + 1)):
            if j == i or (vocabulary is not None and events[j] not in vocabulary):
                continue
            pairs.append((center, events[j]))
    return pairs


def noise_table(counts: Sequence[int], ns_exponent: float) -> np.ndarray:
    """Cumulative unnormalized sampling weights ``count ** ns_exponent``."""
    return np.cumsum(np.asarray(counts, dtype=np.float64) ** ns_exponent)


def sample_negatives(counts: Sequence[int], ns_exponent: float, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` vocabulary indices from the noise distribution used in training."""
    return _sgns.draw_negatives(noise_table(counts, ns_exponent), n, np.uint64(seed))


def _encode(seqs: list[Sequence[str]], vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.fromiter((len(s) for s in seqs), dtype=np.int64, count=len(seqs))
    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    index = vocab._index
    tokens = np.fromiter(
        (index.get(item, -1) for seq in seqs for item in seq),
        dtype=np.int64,
        count=int(offsets[-1]),
    )
    return tokens, offsets


def _stream_seeds(seed: int, n: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)


def _train(seqs: list[Sequence[str]], config: TrainConfig, kind: SpaceKind, default_min: int) -> EmbeddingSpace:
    min_count = config.min_count if config.min_count is not None else default_min
    if not seqs:
        raise DataError("cannot train on an empty corpus")
    vocab = build_vocabulary(seqs, min_count)
    tokens, offsets = _encode(seqs, vocab)
    dim = config.dimension
    init_rng = np.random.default_rng(config.seed)
    syn0 = (init_rng.random((len(vocab), dim)) - 0.5) / dim
    syn1 = np.zeros((len(vocab), dim))
    cum = noise_table(vocab.counts, config.ns_exponent)
    alpha0 = config.learning_rate_initial
    alpha_min = alpha0 * 1e-4

    workers = min(config.workers, max(len(seqs), 1))
    bounds = np.linspace(0, len(seqs), workers + 1).astype(np.int64)
    seeds = _stream_seeds(config.seed, 2 * workers)
    win_seeds, neg_seeds = seeds[:workers].copy(), seeds[workers:].copy()
    totals = np.array(
        [
            _sgns.count_pairs(tokens, offsets, bounds[w], bounds[w + 1], config.window, config.epochs, win_seeds[w])
            for w in range(workers)
        ],
        dtype=np.int64,
    )
    dones = np.zeros(workers, dtype=np.int64)
    win_states, neg_states = win_seeds.copy(), neg_seeds.copy()

    epoch_losses, epoch_pairs = [], []
    if workers > 1:
        log.warning("training with %d workers: results are not deterministic", workers)
    for _ in range(config.epochs):
        if workers == 1:
            loss, n, dones[0] = _sgns.run_epoch(
                tokens, offsets, 0, len(seqs), syn0, syn1, cum, config.window,
                config.negatives_per_positive, alpha0, alpha_min, totals[0], dones[0],
                win_states[0:1], neg_states[0:1], np.empty(dim),
            )
        else:
            losses = np.zeros(workers)
            pairs = np.zeros(workers, dtype=np.int64)
            _sgns.run_epoch_sharded(
                tokens, offsets, bounds, syn0, syn1, cum, config.window,
                config.negatives_per_positive, alpha0, alpha_min, totals, dones,
                win_states, neg_states, losses, pairs,
            )
            loss, n = float(losses.sum()), int(pairs.sum())
        epoch_losses.append(loss / n if n else 0.0)
        epoch_pairs.append(int(n))
        log.debug("epoch %d: loss %.4f over %d pairs", len(epoch_losses), epoch_losses[-1], n)

    check_finite(syn0)
    meta = {
        "epoch_losses": epoch_losses,
        "epoch_pairs": epoch_pairs,
        "vocabulary": vocab,
        "min_count": min_count,
    }
    return EmbeddingSpace(vocab.items, syn0, kind, meta=meta)


def train(sessions: SessionSet, config: TrainConfig = TrainConfig()) -> EmbeddingSpace:
    """Learn product vectors; the input matrix is returned, context vectors dropped."""
    if len(sessions) == 0:
        raise DataError("cannot train on an empty SessionSet")
    return _train(_sequences(sessions), config, "product", PRODUCT_MIN_COUNT)


def train_text(corpus: Iterable[Sequence[str]], config: TrainConfig = TrainConfig()) -> EmbeddingSpace:
    return _train(_sequences(corpus), config, "text", TEXT_MIN_COUNT)


def nearest_neighbors(space: EmbeddingSpace, key: str, k: int) -> list[tuple[str, float]]:
    if key not in space:
        raise KeyError(f"{key!r} not in embedding space")
    if k <= 0:
        return []
    norms = np.linalg.norm(space.matrix, axis=1)
    norms[norms == 0] = 1.0
    sims = (space.matrix @ space[key]) / (norms * (np.linalg.norm(space[key]) or 1.0))
    ranked = sorted(
        ((other, float(sims[i])) for i, other in enumerate(space.keys) if other != key),
        key=lambda kv: (-kv[1], kv[0]),
    )
    return ranked[:k]

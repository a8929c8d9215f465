"""Query vectors as click-weighted means of product vectors.

A query is represented by the products shoppers clicked after issuing it:
the ``rank`` most-clicked products are averaged, weighted by click count.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .datamodel import ClickEvent, ClickLog, DataError, EmbeddingSpace, label_key, normalize_query


class UnembeddableQuery(ValueError):
    """None of a query's top clicked products has a vector."""


@dataclass(frozen=True)
class ClickHistogram:
    query: str
    counts: Mapping[str, int]

    def __post_init__(self):
        if not self.counts:
            raise DataError(f"histogram for {self.query!r} is empty")
        if any(c < 1 for c in self.counts.values()):
            raise DataError(f"histogram for {self.query!r} has a non-positive count")

    def top(self, k: int) -> list[tuple[str, int]]:
        """The k most clicked products; ties broken by ascending product id."""
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


@dataclass(frozen=True)
class RankConfig:
    rank: int = 5

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")


def aggregate_clicks(log: ClickLog | Iterable[ClickEvent]) -> dict[str, ClickHistogram]:
    grouped: dict[str, Counter] = defaultdict(Counter)
    for event in log:
        grouped[normalize_query(event.query)][event.product_id] += 1
    return {q: ClickHistogram(q, dict(sorted(c.items()))) for q, c in sorted(grouped.items())}


def embed_query(hist: ClickHistogram, products: EmbeddingSpace, config: RankConfig = RankConfig()) -> np.ndarray:
    # Top-k is taken before dropping products without vectors.
    selected = [(pid, c) for pid, c in hist.top(config.rank) if pid in products]
    if not selected:
        raise UnembeddableQuery(f"no clicked product of {hist.query!r} has an embedding")
    # Reducing by the gcd makes count scaling an exact no-op.
    common = math.gcd(*(c for _, c in selected))
    weights = np.array([c // common for _, c in selected], dtype=np.float64)
    vectors = np.stack([products[pid] for pid, _ in selected])
    return weights @ vectors / weights.sum()


def merge_logs(*logs: ClickLog) -> list[ClickEvent]:
    """Concatenate click logs without any source weighting."""
    return [event for log in logs for event in log]


def build_lexicon(
    log: ClickLog | Iterable[ClickEvent],
    products: EmbeddingSpace,
    config: RankConfig = RankConfig(),
) -> tuple[EmbeddingSpace, list[str]]:
    """Embed every query in ``log``; returns the query space and omitted queries.

    Keys are queries with spaces replaced by ``_``.
    """
    if len(products) == 0:
        raise DataError("product space is empty")
    histograms = aggregate_clicks(log)
    if not histograms:
        raise DataError("click log is empty")
    keys, rows, omitted = [], [], []
    for query, hist in histograms.items():
        try:
            rows.append(embed_query(hist, products, config))
        except UnembeddableQuery:
            omitted.append(query)
            continue
        keys.append(label_key(query))
    if not rows:
        raise DataError("no query could be embedded")
    return EmbeddingSpace(keys, np.stack(rows), "query", meta={"omitted": omitted, "rank": config.rank}), omitted

"""Synthetic click events and a seeded toy shop.

``generate_synthetic_events`` simulates, for every word, a search against the
inverted index followed by popularity-driven clicks on the returned products.
``generate_synthetic_shop`` stands in for proprietary shop data.
"""

from __future__ import annotations

import bisect
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .datamodel import Catalog, ClickEvent, ClickLog, DataError, Product, Session, SessionSet, normalize_query
from .searchindex import InvertedIndex, build_index, search
from .seeds import derive_seed


@dataclass(frozen=True)
class PopularityDistribution:
    weights: dict[str, float]

    def __post_init__(self):
        values = list(self.weights.values())
        if not values or not all(math.isfinite(w) and w >= 0 for w in values):
            raise DataError("popularity weights must be finite and non-negative")
        if max(values) <= 0:
            raise DataError("popularity needs at least one positive weight")

    def weight(self, product_id: str) -> float:
        return self.weights.get(product_id, 0.0)


@dataclass(frozen=True)
class SynthConfig:
    simulations_per_word: int = 500
    search_limit: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.simulations_per_word < 1:
            raise ValueError("simulations_per_word must be >= 1")
        if self.search_limit < 1:
            raise ValueError("search_limit must be >= 1")


def estimate_popularity(sessions: SessionSet, catalog: Catalog | None = None) -> PopularityDistribution:
    """Interaction counts per product; catalog products never seen get weight 0."""
    if len(sessions) == 0:
        raise DataError("cannot estimate popularity from an empty SessionSet")
    counts = Counter(pid for s in sessions for pid in s.events)
    weights = {pid: 0.0 for pid in sorted(catalog.ids)} if catalog is not None else {}
    for pid, c in sorted(counts.items()):
        weights[pid] = float(c)
    return PopularityDistribution(weights)


def sample_clicks(
    results: Sequence[str], dist: PopularityDistribution, n: int, rng: np.random.Generator
) -> list[str]:
    """Draw ``n`` products from ``dist`` restricted to ``results`` and renormalized.

    Falls back to uniform when every restricted weight is zero.
    """
    weights = np.array([dist.weight(pid) for pid in results], dtype=np.float64)
    total = weights.sum()
    probs = weights / total if total > 0 else np.full(len(results), 1.0 / len(results))
    picks = rng.choice(len(results), size=n, p=probs)
    return [results[i] for i in picks]


def generate_synthetic_events(
    words: Iterable[str],
    index: InvertedIndex,
    dist: PopularityDistribution,
    config: SynthConfig = SynthConfig(),
) -> tuple[ClickLog, list[str]]:
    """Return the synthetic click log and the words whose search came back empty.

    Each word draws from its own stream seeded by ``(config.seed, word)``, so
    the output does not depend on word order; events are sorted by word.
    """
    unique = sorted({q for q in (normalize_query(w) for w in words) if q})
    if not unique:
        raise DataError("word list is empty")
    events: list[ClickEvent] = []
    skipped: list[str] = []
    for word in unique:
        results = [pid for pid, _ in search(index, word, config.search_limit)]
        if not results:
            skipped.append(word)
            continue
        rng = np.random.default_rng(derive_seed(config.seed, word))
        events.extend(ClickEvent(word, pid) for pid in sample_clicks(results, dist, config.simulations_per_word, rng))
    return ClickLog(tuple(events), "synthetic"), skipped


# -- synthetic shop -----------------------------------------------------------

_BRANDS = (
    "altura", "boreal", "cresta", "dunmore", "elvena", "fjordik", "galvano", "heliox",
    "istrani", "junova", "kestrel", "lumera", "marlowe", "norvik", "orrin", "pellago",
)
_TYPES = (
    "shoes", "racket", "jacket", "shorts", "gloves", "helmet", "backpack", "socks",
    "cap", "bottle", "goggles", "shirt",
)
_ACTIVITIES = (
    "tennis", "skiing", "running", "swimming", "cycling", "soccer", "basketball",
    "hiking", "golf", "climbing", "yoga", "boxing",
)
_FILLER = (
    "comfortable", "lightweight", "durable", "breathable", "classic", "premium",
    "waterproof", "soft", "new", "collection", "design", "quality", "fit", "style",
    "edition", "essential", "performance", "training", "everyday", "pro",
)


def _names(pool: Sequence[str], prefix: str, n: int) -> list[str]:
    if n <= len(pool):
        return list(pool[:n])
    width = len(str(n - 1))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


@dataclass(frozen=True)
class ShopSpec:
    n_brands: int = 8
    n_types: int = 5
    n_activities: int = 8
    products_per_cell: int = 4
    n_sessions: int = 50_000
    session_length_range: tuple[int, int] = (3, 10)
    popularity_zipf_exponent: float = 1.0
    seed: int = 0
    #: Probability that the next product stays in the current brand cluster.
    cluster_stay_prob: float = 0.8
    #: Probability that a product carries its brand's dominant activity.
    activity_purity: float = 1.0
    filler_tokens: int = 4
    real_clicks_per_query: tuple[int, int] = (20, 120)
    #: Probability that a real click ignores popularity (position noise).
    real_click_noise: float = 0.1
    #: Fraction of (brand, type) cells also issued as two-word real queries.
    real_multiword_fraction: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "session_length_range", tuple(self.session_length_range))
        object.__setattr__(self, "real_clicks_per_query", tuple(self.real_clicks_per_query))
        counts = (self.n_brands, self.n_types, self.n_activities, self.products_per_cell, self.n_sessions)
        if min(counts) < 1:
            raise ValueError("shop counts must all be >= 1")
        lo, hi = self.session_length_range
        if lo < 2 or hi < lo:
            raise ValueError("session lengths must satisfy 2 <= min <= max")
        if self.popularity_zipf_exponent < 0:
            raise ValueError("popularity_zipf_exponent must be >= 0")
        for name in ("cluster_stay_prob", "activity_purity", "real_click_noise", "real_multiword_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        clo, chi = self.real_clicks_per_query
        if clo < 1 or chi < clo:
            raise ValueError("real_clicks_per_query must satisfy 1 <= min <= max")

    @property
    def n_products(self) -> int:
        return self.n_brands * self.n_types * self.products_per_cell


@dataclass
class SyntheticShop:
    catalog: Catalog
    sessions: SessionSet
    clicks: ClickLog
    ground_truth: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.catalog, self.sessions, self.clicks, self.ground_truth))


class _Cumulative:
    """Weighted sampler over a fixed id list via bisection on cumulative sums."""

    def __init__(self, ids: Sequence[int], weights: Sequence[float]):
        self.ids = list(ids)
        self.cum = list(itertools.accumulate(weights))
        self.total = self.cum[-1]

    def draw(self, u: float) -> int:
        i = bisect.bisect_right(self.cum, u * self.total)
        return self.ids[min(i, len(self.ids) - 1)]


def generate_synthetic_shop(spec: ShopSpec) -> SyntheticShop:
    rng = np.random.default_rng(derive_seed(spec.seed, "shop"))
    brands = _names(_BRANDS, "brand", spec.n_brands)
    types = _names(_TYPES, "type", spec.n_types)
    activities = _names(_ACTIVITIES, "activity", spec.n_activities)

    act_order = rng.permutation(spec.n_activities)
    dominant = {b: activities[act_order[i % spec.n_activities]] for i, b in enumerate(brands)}

    products: list[Product] = []
    brand_of, cell_of = [], []
    width = len(str(spec.n_products - 1))
    for bi, brand in enumerate(brands):
        for ti, ptype in enumerate(types):
            for _ in range(spec.products_per_cell):
                activity = dominant[brand]
                if rng.random() >= spec.activity_purity:
                    activity = activities[int(rng.integers(spec.n_activities))]
                filler = rng.choice(len(_FILLER), size=spec.filler_tokens, replace=False)
                words = [brand, ptype, "for", activity] + [_FILLER[i] for i in filler]
                products.append(
                    Product(
                        product_id=f"p{len(products):0{width}d}",
                        brand=brand,
                        product_type=ptype,
                        activity=activity,
                        description=" ".join(words),
                    )
                )
                brand_of.append(bi)
                cell_of.append(bi * spec.n_types + ti)
    catalog = Catalog(tuple(products))
    n = len(products)

    ranks = rng.permutation(n)
    popularity = [1.0 / (r + 1) ** spec.popularity_zipf_exponent for r in ranks]
    everything = _Cumulative(range(n), popularity)
    by_brand = [
        _Cumulative(ids, [popularity[i] for i in ids])
        for ids in (
            [i for i in range(n) if brand_of[i] == b] for b in range(spec.n_brands)
        )
    ]
    by_cell = {}
    for i in range(n):
        by_cell.setdefault(cell_of[i], []).append(i)
    by_cell = {c: _Cumulative(ids, [popularity[i] for i in ids]) for c, ids in by_cell.items()}

    lo, hi = spec.session_length_range
    lengths = rng.integers(lo, hi + 1, size=spec.n_sessions)
    draws = rng.random((int(lengths.sum()), 3)).tolist()
    sid_width = len(str(spec.n_sessions - 1))
    sessions = []
    k = 0
    for s, length in enumerate(lengths.tolist()):
        current = everything.draw(draws[k][0])
        events = [current]
        k += 1
        for _ in range(length - 1):
            u_stay, u_scope, u_pick = draws[k]
            k += 1
            if u_stay < spec.cluster_stay_prob:
                pool = by_cell[cell_of[current]] if u_scope < 0.5 else by_brand[brand_of[current]]
            else:
                pool = everything
            current = pool.draw(u_pick)
            events.append(current)
        sessions.append(Session(f"s{s:0{sid_width}d}", tuple(products[i].product_id for i in events)))

    index = build_index(catalog)
    pop = PopularityDistribution({p.product_id: w for p, w in zip(products, popularity)})
    queries = brands + types + sorted(set(p.activity for p in products))
    for brand in brands:
        for ptype in types:
            if rng.random() < spec.real_multiword_fraction:
                queries.append(f"{brand} {ptype}")
    clicks = []
    clo, chi = spec.real_clicks_per_query
    for query in queries:
        results = [pid for pid, _ in search(index, query, 50)]
        if not results:
            continue
        n_clicks = int(rng.integers(clo, chi + 1))
        picks = sample_clicks(results, pop, n_clicks, rng)
        noise = rng.random(n_clicks) < spec.real_click_noise
        for pid, noisy in zip(picks, noise):
            if noisy:
                pid = results[int(rng.integers(len(results)))]
            clicks.append(ClickEvent(query, pid))

    ground_truth = {
        "brands": {b: [p.product_id for p, bi in zip(products, brand_of) if brands[bi] == b] for b in brands},
        "dominant_activity": dominant,
        "popularity": {p.product_id: w for p, w in zip(products, popularity)},
    }
    return SyntheticShop(catalog, SessionSet(tuple(sessions)), ClickLog(tuple(clicks), "real"), ground_truth)


def planted_cluster_sessions(
    n_products: int = 20,
    n_clusters: int = 2,
    n_sessions: int = 1000,
    length_range: tuple[int, int] = (2, 8),
    seed: int = 0,
) -> tuple[SessionSet, dict[str, int]]:
    """Sessions that each browse a single cluster; returns (sessions, cluster of product)."""
    if n_products < n_clusters or n_clusters < 1:
        raise ValueError("need at least one product per cluster")
    rng = np.random.default_rng(seed)
    width = len(str(n_products - 1))
    ids = [f"p{i:0{width}d}" for i in range(n_products)]
    cluster = {pid: i * n_clusters // n_products for i, pid in enumerate(ids)}
    members = [[pid for pid in ids if cluster[pid] == c] for c in range(n_clusters)]
    sessions = []
    for s in range(n_sessions):
        pool = members[int(rng.integers(n_clusters))]
        length = int(rng.integers(length_range[0], length_range[1] + 1))
        events = tuple(pool[i] for i in rng.integers(len(pool), size=length))
        sessions.append(Session(f"s{s}", events))
    return SessionSet(tuple(sessions)), cluster

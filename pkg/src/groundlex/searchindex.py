"""Inverted index over product metadata with TF-IDF scoring and Boolean AND.

Used only to simulate a shop's result list for synthetic click generation.
"""

from __future__ import annotations

import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Sequence

from .datamodel import INDEXABLE_FIELDS, Catalog, DataError

DEFAULT_FIELDS = ("description", "brand", "product_type", "activity")

_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not an ASCII letter or digit."""
    return [tok for tok in _SPLIT.split(text.lower()) if tok]


@dataclass(frozen=True)
class InvertedIndex:
    postings: dict[str, tuple[tuple[str, int], ...]]
    doc_count: int
    doc_frequencies: dict[str, int]
    indexed_fields: tuple[str, ...]

    def idf(self, term: str) -> float:
        return math.log(self.doc_count / self.doc_frequencies[term])


def build_index(catalog: Catalog, fields: Sequence[str] = DEFAULT_FIELDS) -> InvertedIndex:
    if not fields:
        raise DataError("at least one field must be indexed")
    unknown = [f for f in fields if f not in INDEXABLE_FIELDS]
    if unknown:
        raise DataError(f"unknown index field(s): {unknown}")
    if len(catalog) == 0:
        raise DataError("cannot index an empty catalog")
    postings: dict[str, list[tuple[str, int]]] = defaultdict(list)
    for product in sorted(catalog, key=lambda p: p.product_id):
        text = " ".join(product.field_text(f) for f in fields)
        for term, tf in Counter(tokenize(text)).items():
            postings[term].append((product.product_id, tf))
    frozen = {term: tuple(plist) for term, plist in sorted(postings.items())}
    return InvertedIndex(
        postings=frozen,
        doc_count=len(catalog),
        doc_frequencies={term: len(plist) for term, plist in frozen.items()},
        indexed_fields=tuple(fields),
    )


def search(index: InvertedIndex, query: str, limit: int = 50) -> list[tuple[str, float]]:
    """Products containing every query token, by summed tf * ln(N / df)."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    terms = tokenize(query)
    if not terms or any(t not in index.postings for t in terms):
        return []
    # Intersect starting from the rarest term.
    ordered = sorted(set(terms), key=lambda t: index.doc_frequencies[t])
    candidates = {pid: 0.0 for pid, _ in index.postings[ordered[0]]}
    for term in ordered[1:]:
        present = {pid for pid, _ in index.postings[term]}
        candidates = {pid: 0.0 for pid in candidates if pid in present}
        if not candidates:
            return []
    tfs = {term: dict(index.postings[term]) for term in ordered}
    weights = {term: index.idf(term) for term in ordered}
    for pid in candidates:
        score = 0.0
        for term in terms:
            score += tfs[term][pid] * weights[term]
        candidates[pid] = score
    ranked = sorted(candidates.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:limit]

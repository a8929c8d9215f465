"""Taxonomy analogies, hit-rate scoring and the similarity-triplet task."""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .datamodel import TAXONOMY_FIELDS, Catalog, DataError, EmbeddingSpace, _read_jsonl, _write_jsonl, label_key


@dataclass(frozen=True)
class Analogy:
    """``a : b = c : d`` where a, c come from ``type_pair[0]`` and b, d from ``type_pair[1]``."""

    a: str
    b: str
    c: str
    d: str
    type_pair: tuple[str, str]

    def __post_init__(self):
        object.__setattr__(self, "type_pair", tuple(self.type_pair))
        if not all((self.a, self.b, self.c, self.d)):
            raise DataError("analogy tokens must be non-empty")
        if self.a == self.c:
            raise DataError(f"analogy source and target entity are both {self.a!r}")

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d, "type_pair": list(self.type_pair)}


@dataclass(frozen=True)
class AnalogyGenConfig:
    gini_percentile: float = 75.0
    samples_per_entity: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gini_percentile < 100.0:
            raise ValueError("gini_percentile must lie strictly between 0 and 100")
        if self.samples_per_entity < 1:
            raise ValueError("samples_per_entity must be >= 1")


@dataclass(frozen=True)
class SimilarityTriplet:
    anchor: str
    option_a: str
    option_b: str
    human_choice: Literal["a", "b"]

    def __post_init__(self):
        if len({self.anchor, self.option_a, self.option_b}) != 3:
            raise DataError("triplet tokens must be pairwise distinct")
        if self.human_choice not in ("a", "b"):
            raise DataError(f"human_choice must be 'a' or 'b', got {self.human_choice!r}")


@dataclass
class EvalReport:
    hit_rate: dict[int, float]
    coverage: float
    n_analogies: int
    n_covered: int = 0
    st_accuracy: float | None = None
    st_missing: list[dict] = field(default_factory=list)

    def __post_init__(self):
        values = list(self.hit_rate.values()) + [self.coverage]
        if self.st_accuracy is not None:
            values.append(self.st_accuracy)
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("metrics must lie in [0, 1]")
        rates = [self.hit_rate[k] for k in sorted(self.hit_rate)]
        if any(x > y for x, y in zip(rates, rates[1:])):
            raise ValueError("hit rate must be non-decreasing in the cutoff")

    def to_json(self) -> dict:
        return {
            "hit_rate": {str(k): v for k, v in sorted(self.hit_rate.items())},
            "coverage": self.coverage,
            "n_analogies": self.n_analogies,
            "n_covered": self.n_covered,
            "st_accuracy": self.st_accuracy,
            "st_missing": self.st_missing,
        }

    def table(self, name: str = "model") -> str:
        cols = [f"HR@{k}" for k in sorted(self.hit_rate)] + ["CV", "Acc on ST"]
        vals = [f"{self.hit_rate[k]:.3f}" for k in sorted(self.hit_rate)] + [f"{self.coverage:.3f}"]
        vals.append("-" if self.st_accuracy is None else f"{self.st_accuracy:.3f}")
        width = max(len(name), 5)
        header = f"{'Model':<{width}}  " + "  ".join(f"{c:>9}" for c in cols)
        row = f"{name:<{width}}  " + "  ".join(f"{v:>9}" for v in vals)
        return f"{header}\n{row}\n"


# -- Gini-based analogy generation -------------------------------------------

def gini(frequencies: Sequence[float]) -> float:
    """Gini coefficient ``sum_ij |x_i - x_j| / (2 n sum x)``, computed after sorting."""
    xs = np.sort(np.asarray(frequencies, dtype=np.float64))
    if xs.size == 0:
        raise ValueError("gini of an empty list")
    if np.any(xs < 0) or not np.all(np.isfinite(xs)):
        raise ValueError("gini needs finite non-negative values")
    total = xs.sum()
    if total <= 0:
        raise ValueError("gini is undefined when every value is zero")
    n = xs.size
    ranks = 2.0 * np.arange(1, n + 1) - n - 1
    return float(np.dot(ranks, xs) / (n * total))


def label_distribution(
    catalog: Catalog, entity_field: str, entity_value: str, target_field: str
) -> dict[str, int]:
    """Counts of every ``target_field`` label in the catalog for one entity, zeros included."""
    for name in (entity_field, target_field):
        if name not in TAXONOMY_FIELDS:
            raise DataError(f"unknown taxonomy field {name!r}")
    counts = {label: 0 for label in catalog.labels(target_field)}
    found = False
    for p in catalog:
        if getattr(p, entity_field) != entity_value:
            continue
        label = getattr(p, target_field)
        if label:
            counts[label] += 1
            found = True
    if not found:
        raise DataError(f"no labelled {target_field} for {entity_field}={entity_value!r}")
    return counts


def nearest_rank_percentile(values: Sequence[float], percentile: float) -> float:
    ordered = sorted(values)
    rank = max(1, math.ceil(percentile / 100.0 * len(ordered)))
    return ordered[rank - 1]


def entity_ginis(catalog: Catalog, entity_field: str, target_field: str) -> dict[str, float]:
    entities = sorted(
        {getattr(p, entity_field) for p in catalog if getattr(p, entity_field) and getattr(p, target_field)}
    )
    return {
        e: gini(list(label_distribution(catalog, entity_field, e, target_field).values()))
        for e in entities
    }


def _top_label(dist: Mapping[str, int]) -> str:
    return min(dist.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def generate_analogies(
    catalog: Catalog, type_pair: tuple[str, str], config: AnalogyGenConfig = AnalogyGenConfig()
) -> list[Analogy]:
    """Both-direction analogies between entities with concentrated label distributions.

    Entities whose Gini is below the configured percentile are skipped. Each
    remaining entity is paired K times with a random other such entity whose
    most frequent label differs from its own.
    """
    entity_field, target_field = type_pair
    for name in type_pair:
        if name not in TAXONOMY_FIELDS:
            raise DataError(f"unknown taxonomy field {name!r}")
    if entity_field == target_field:
        raise DataError("analogy type pair needs two different fields")
    ginis = entity_ginis(catalog, entity_field, target_field)
    if len(ginis) < 2:
        raise DataError(f"fewer than 2 entities have both {entity_field} and {target_field}")
    threshold = nearest_rank_percentile(list(ginis.values()), config.gini_percentile)
    selected = [e for e, g in ginis.items() if g >= threshold]
    if len(selected) < 2:
        raise DataError("fewer than 2 entities reach the Gini threshold")
    top = {e: _top_label(label_distribution(catalog, entity_field, e, target_field)) for e in selected}

    rng = np.random.default_rng(config.seed)
    out: list[Analogy] = []
    seen = set()
    for b in selected:
        partners = [c for c in selected if c != b and top[c] != top[b]]
        if not partners:
            continue
        for _ in range(config.samples_per_entity):
            c = partners[int(rng.integers(len(partners)))]
            kb, lb, kc, lc = label_key(b), label_key(top[b]), label_key(c), label_key(top[c])
            for item in (Analogy(kb, lb, kc, lc, type_pair), Analogy(kc, lc, kb, lb, type_pair)):
                sig = (item.a, item.b, item.c, item.d)
                if sig not in seen:
                    seen.add(sig)
                    out.append(item)
    if not out:
        raise DataError("no analogy could be formed (all selected entities share one label)")
    return out


# -- solving and scoring ------------------------------------------------------

def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


def solve_analogy(
    space: EmbeddingSpace, a: str, b: str, c: str, candidates: Iterable[str]
) -> list[tuple[str, float]] | None:
    """Rank candidates by cosine to ``v_b - v_a + v_c``; ``None`` if a, b or c is missing.

    Candidates without a vector are ignored; a, b and c are never returned.
    """
    if a not in space or b not in space or c not in space:
        return None
    pool = sorted({t for t in candidates if t in space} - {a, b, c})
    if not pool:
        return []
    target = space[b] - space[a] + space[c]
    tnorm = np.linalg.norm(target)
    rows = _unit_rows(np.stack([space[t] for t in pool]))
    sims = rows @ target / tnorm if tnorm > 0 else np.zeros(len(pool))
    return sorted(zip(pool, sims.tolist()), key=lambda kv: (-kv[1], kv[0]))


def analogy_candidates(catalog: Catalog, analogies: Iterable[Analogy]) -> dict[str, set[str]]:
    """Per answer field, every catalog label (as a space key)."""
    fields = {an.type_pair[1] for an in analogies}
    return {f: {label_key(v) for v in catalog.labels(f)} for f in fields}


def hit_rate(
    space: EmbeddingSpace,
    analogies: Sequence[Analogy],
    cutoffs: Sequence[int] = (5, 10),
    candidates: Mapping[str, Iterable[str]] | None = None,
    open_vocabulary: bool = False,
) -> EvalReport:
    """HR@k over covered analogies plus coverage.

    ``candidates`` maps an answer field to its label vocabulary; by default it
    is every value of that field appearing in ``analogies``. With
    ``open_vocabulary`` every key of the space competes.
    """
    if not analogies:
        raise DataError("empty analogy set")
    cutoffs = sorted(cutoffs)
    if any(k < 1 for k in cutoffs):
        raise ValueError("cutoffs must be positive")
    if candidates is None:
        pools: dict[str, set[str]] = {}
        for an in analogies:
            pools.setdefault(an.type_pair[1], set()).update((an.b, an.d))
    else:
        pools = {f: set(v) for f, v in candidates.items()}

    hits = Counter()
    covered = 0
    for an in analogies:
        if not all(t in space for t in (an.a, an.b, an.c, an.d)):
            continue
        covered += 1
        pool = space.keys if open_vocabulary else pools.get(an.type_pair[1], set()) | {an.d}
        ranking = [t for t, _ in solve_analogy(space, an.a, an.b, an.c, pool)]
        if an.d not in ranking:
            continue
        position = ranking.index(an.d)
        for k in cutoffs:
            if position < k:
                hits[k] += 1
    rates = {k: (hits[k] / covered if covered else 0.0) for k in cutoffs}
    return EvalReport(hit_rate=rates, coverage=covered / len(analogies), n_analogies=len(analogies), n_covered=covered)


def random_baseline(
    space: EmbeddingSpace,
    analogies: Sequence[Analogy],
    candidates: Mapping[str, Iterable[str]],
    cutoff: int = 1,
) -> float:
    """Expected HR@cutoff of a uniform random ranking, averaged over covered analogies."""
    rates = []
    for an in analogies:
        if not all(t in space for t in (an.a, an.b, an.c, an.d)):
            continue
        pool = {t for t in candidates[an.type_pair[1]] if t in space} - {an.a, an.b, an.c}
        pool.add(an.d)
        rates.append(min(cutoff, len(pool)) / len(pool))
    return float(np.mean(rates)) if rates else 0.0


def uncovered_triplets(space: EmbeddingSpace, triplets: Iterable[SimilarityTriplet]) -> list[SimilarityTriplet]:
    return [t for t in triplets if not all(x in space for x in (t.anchor, t.option_a, t.option_b))]


def similarity_accuracy(space: EmbeddingSpace, triplets: Sequence[SimilarityTriplet]) -> float:
    """Share of triplets where the closer option (by cosine) is the human choice.

    Triplets with a missing token, or an exact tie, count as wrong.
    """
    if not triplets:
        raise DataError("empty triplet set")
    correct = 0
    for t in triplets:
        if not all(x in space for x in (t.anchor, t.option_a, t.option_b)):
            continue
        anchor, va, vb = _unit_rows(np.stack([space[t.anchor], space[t.option_a], space[t.option_b]]))
        sa, sb = float(anchor @ va), float(anchor @ vb)
        if sa != sb and ("a" if sa > sb else "b") == t.human_choice:
            correct += 1
    return correct / len(triplets)


# -- file formats -------------------------------------------------------------

def save_analogies(analogies: Iterable[Analogy], path: str | os.PathLike) -> None:
    _write_jsonl(path, (an.to_json() for an in analogies))


def load_analogies(path: str | os.PathLike) -> list[Analogy]:
    out = []
    for lineno, rec in _read_jsonl(path):
        try:
            out.append(Analogy(rec["a"], rec["b"], rec["c"], rec["d"], tuple(rec["type_pair"])))
        except (KeyError, TypeError, DataError) as exc:
            raise DataError(f"{path}:{lineno}: bad analogy ({exc})") from None
    return out


def load_triplets(path: str | os.PathLike) -> list[SimilarityTriplet]:
    out = []
    for lineno, rec in _read_jsonl(path):
        try:
            out.append(SimilarityTriplet(rec["anchor"], rec["option_a"], rec["option_b"], rec["human_choice"]))
        except (KeyError, DataError) as exc:
            raise DataError(f"{path}:{lineno}: bad triplet ({exc})") from None
    return out


def save_triplets(triplets: Iterable[SimilarityTriplet], path: str | os.PathLike) -> None:
    _write_jsonl(
        path,
        ({"anchor": t.anchor, "option_a": t.option_a, "option_b": t.option_b, "human_choice": t.human_choice}
         for t in triplets),
    )


def save_report(report: EvalReport, json_path: str | os.PathLike, table_path: str | os.PathLike, name: str) -> None:
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(table_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.table(name))

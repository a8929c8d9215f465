"""Shared domain types and JSON-lines ingestion.

Loaded values are frozen; they can be shared between threads for reading.
"""

from __future__ import annotations

import json
import math
import os
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Literal, Sequence

import numpy as np

TAXONOMY_FIELDS = ("brand", "product_type", "activity")
INDEXABLE_FIELDS = ("description",) + TAXONOMY_FIELDS

ClickSource = Literal["real", "synthetic"]
SpaceKind = Literal["product", "query", "text"]


class DataError(ValueError):
    """Raised on malformed or inconsistent input data."""


def normalize_label(value: str | None) -> str | None:
    if value is None:
        return None
    label = " ".join(str(value).lower().split())
    return label or None


def normalize_query(text: str) -> str:
    """Lowercase, strip punctuation at token edges and collapse whitespace."""
    tokens = (tok.strip(string.punctuation) for tok in text.lower().split())
    return " ".join(tok for tok in tokens if tok)


def label_key(label: str) -> str:
    """Key used for a (possibly multiword) label in an embedding space."""
    return "_".join(label.split())


@dataclass
class IngestionReport:
    source: str
    loaded: int = 0
    dropped: int = 0
    unknown: int = 0
    warnings: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def summary(self) -> str:
        lines = [
            f"source: {self.source}",
            f"loaded: {self.loaded}",
            f"dropped: {self.dropped}",
            f"unknown: {self.unknown}",
        ]
        lines += [f"warning: {w}" for w in self.warnings]
        lines += self.notes
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Product:
    product_id: str
    brand: str | None = None
    product_type: str | None = None
    activity: str | None = None
    description: str = ""

    def __post_init__(self):
        if not self.product_id:
            raise DataError("product_id must be non-empty")
        for name in TAXONOMY_FIELDS:
            object.__setattr__(self, name, normalize_label(getattr(self, name)))

    def field_text(self, name: str) -> str:
        return getattr(self, name) or ""

    def to_json(self) -> dict:
        return {
            "product_id": self.product_id,
            "brand": self.brand,
            "product_type": self.product_type,
            "activity": self.activity,
            "description": self.description,
        }


@dataclass(frozen=True)
class Catalog:
    products: tuple[Product, ...]
    taxonomy_fields: tuple[str, ...] = ()
    report: IngestionReport | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "products", tuple(self.products))
        seen = set()
        for p in self.products:
            if p.product_id in seen:
                raise DataError(f"duplicate product_id {p.product_id!r}")
            seen.add(p.product_id)
        if not self.taxonomy_fields:
            present = tuple(
                f for f in TAXONOMY_FIELDS if any(getattr(p, f) for p in self.products)
            )
            object.__setattr__(self, "taxonomy_fields", present)
        else:
            object.__setattr__(self, "taxonomy_fields", tuple(self.taxonomy_fields))
        bad = set(self.taxonomy_fields) - set(TAXONOMY_FIELDS)
        if bad:
            raise DataError(f"unknown taxonomy fields: {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.products)

    def __iter__(self) -> Iterator[Product]:
        return iter(self.products)

    @property
    def ids(self) -> set[str]:
        return {p.product_id for p in self.products}

    def labels(self, name: str) -> list[str]:
        """Sorted distinct values of a taxonomy field."""
        if name not in TAXONOMY_FIELDS:
            raise DataError(f"unknown taxonomy field {name!r}")
        return sorted({getattr(p, name) for p in self.products if getattr(p, name)})


@dataclass(frozen=True)
class Session:
    session_id: str
    events: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.events:
            raise DataError(f"session {self.session_id!r} has no events")
        if not all(isinstance(e, str) and e for e in self.events):
            raise DataError(f"session {self.session_id!r} has an invalid product id")

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class SessionSet:
    sessions: tuple[Session, ...] = ()
    report: IngestionReport | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "sessions", tuple(self.sessions))

    def __len__(self) -> int:
        return len(self.sessions)

    def __iter__(self) -> Iterator[Session]:
        return iter(self.sessions)


@dataclass(frozen=True)
class ClickEvent:
    query: str
    product_id: str

    def __post_init__(self):
        if not self.query:
            raise DataError("click query is empty after normalization")
        if not self.product_id:
            raise DataError("click product_id must be non-empty")


@dataclass(frozen=True)
class ClickLog:
    events: tuple[ClickEvent, ...]
    source: ClickSource
    report: IngestionReport | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.source not in ("real", "synthetic"):
            raise DataError(f"unknown click source {self.source!r}")
        object.__setattr__(self, "events", tuple(self.events))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[ClickEvent]:
        return iter(self.events)


class EmbeddingSpace:
    """Keyed dense vectors sharing one dimension.

    Vectors live in a single ``(n, dimension)`` float64 matrix; ``meta`` carries
    training diagnostics and is not part of equality.
    """

    def __init__(
        self,
        keys: Sequence[str],
        matrix: np.ndarray,
        kind: SpaceKind,
        meta: dict | None = None,
    ):
        matrix = np.array(matrix, dtype=np.float64, copy=True)
        if matrix.ndim != 2:
            raise DataError("embedding matrix must be 2-dimensional")
        keys = list(keys)
        if len(keys) != matrix.shape[0]:
            raise DataError("key count does not match matrix rows")
        if matrix.shape[1] < 1:
            raise DataError("dimension must be positive")
        if len(set(keys)) != len(keys):
            raise DataError("embedding keys must be unique")
        if not np.all(np.isfinite(matrix)):
            raise DataError("embedding contains NaN or Inf")
        if kind not in ("product", "query", "text"):
            raise DataError(f"unknown space kind {kind!r}")
        matrix.setflags(write=False)
        self.keys = keys
        self.matrix = matrix
        self.kind = kind
        self.meta = dict(meta or {})
        self._index = {k: i for i, k in enumerate(keys)}

    @classmethod
    def from_dict(cls, vectors: dict[str, Sequence[float]], kind: SpaceKind = "query"):
        keys = list(vectors)
        if not keys:
            raise DataError("cannot build an empty embedding space")
        return cls(keys, np.array([vectors[k] for k in keys], dtype=np.float64), kind)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: object) -> bool:
        return key in self._index

    def __getitem__(self, key: str) -> np.ndarray:
        return self.matrix[self._index[key]]

    def index(self, key: str) -> int:
        return self._index[key]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingSpace):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.keys == other.keys
            and np.array_equal(self.matrix, other.matrix)
        )

    def __repr__(self) -> str:
        return f"EmbeddingSpace(kind={self.kind!r}, n={len(self)}, dimension={self.dimension})"

    def save(self, path: str | os.PathLike) -> None:
        """Write the ``<count> <dimension>`` text format, 6 significant digits."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{len(self)} {self.dimension}\n")
            for key, row in zip(self.keys, self.matrix):
                if any(ch.isspace() for ch in key):
                    raise DataError(f"embedding key {key!r} contains whitespace")
                fh.write(key + " " + " ".join(f"{x:.6g}" for x in row) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike, kind: SpaceKind = "product") -> "EmbeddingSpace":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise DataError(f"{path}: bad header")
            count, dim = int(header[0]), int(header[1])
            keys, rows = [], []
            for lineno, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    raise DataError(f"{path}:{lineno}: expected {dim} values")
                keys.append(parts[0])
                rows.append([float(x) for x in parts[1:]])
        if len(keys) != count:
            raise DataError(f"{path}: header declares {count} vectors, found {len(keys)}")
        return cls(keys, np.array(rows, dtype=np.float64).reshape(count, dim), kind)


def _read_jsonl(path: str | os.PathLike) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def _write_jsonl(path: str | os.PathLike, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_catalog(path: str | os.PathLike) -> Catalog:
    report = IngestionReport(source=str(path))
    products = []
    seen = set()
    for lineno, rec in _read_jsonl(path):
        pid = rec.get("product_id")
        if not isinstance(pid, str) or not pid:
            raise DataError(f"{path}:{lineno}: missing product_id")
        if pid in seen:
            raise DataError(f"{path}:{lineno}: duplicate product_id {pid!r}")
        seen.add(pid)
        try:
            products.append(
                Product(
                    product_id=pid,
                    brand=rec.get("brand"),
                    product_type=rec.get("product_type"),
                    activity=rec.get("activity"),
                    description=rec.get("description") or "",
                )
            )
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    report.loaded = len(products)
    if not products:
        report.warnings.append("empty catalog")
    return Catalog(tuple(products), report=report)


def load_sessions(path: str | os.PathLike, catalog: Catalog | None = None) -> SessionSet:
    """Load sessions, dropping those shorter than two events.

    Unknown product ids are kept; when ``catalog`` is given they are counted
    in the report.
    """
    report = IngestionReport(source=str(path))
    known = catalog.ids if catalog is not None else None
    sessions = []
    for lineno, rec in _read_jsonl(path):
        sid, events = rec.get("session_id"), rec.get("events")
        if not isinstance(sid, str) or not isinstance(events, list):
            raise DataError(f"{path}:{lineno}: expected session_id and events")
        if len(events) < 2:
            report.dropped += 1
            continue
        try:
            session = Session(sid, tuple(events))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if known is not None:
            report.unknown += sum(1 for e in session.events if e not in known)
        sessions.append(session)
    report.loaded = len(sessions)
    if not sessions:
        report.warnings.append("no usable sessions")
    return SessionSet(tuple(sessions), report=report)


def load_click_log(path: str | os.PathLike, source: ClickSource = "real") -> ClickLog:
    report = IngestionReport(source=str(path))
    events = []
    for lineno, rec in _read_jsonl(path):
        query, pid = rec.get("query"), rec.get("product_id")
        if not isinstance(query, str) or not isinstance(pid, str) or not pid:
            raise DataError(f"{path}:{lineno}: expected string query and product_id")
        query = normalize_query(query)
        if not query:
            report.dropped += 1
            continue
        events.append(ClickEvent(query, pid))
    report.loaded = len(events)
    if not events:
        report.warnings.append("empty click log")
    return ClickLog(tuple(events), source, report=report)


def save_catalog(catalog: Catalog, path: str | os.PathLike) -> None:
    _write_jsonl(path, (p.to_json() for p in catalog))


def save_sessions(sessions: SessionSet, path: str | os.PathLike) -> None:
    _write_jsonl(path, ({"session_id": s.session_id, "events": list(s.events)} for s in sessions))


def save_click_log(log: ClickLog, path: str | os.PathLike) -> None:
    _write_jsonl(path, ({"query": e.query, "product_id": e.product_id} for e in log))


def write_report(reports: Iterable[IngestionReport], path: str | os.PathLike) -> None:
    Path(path).write_text("\n".join(r.summary() for r in reports), encoding="utf-8")


def check_finite(matrix: np.ndarray) -> None:
    if not np.all(np.isfinite(matrix)):
        bad = int(np.sum(~np.isfinite(matrix)))
        raise FloatingPointError(f"{bad} non-finite embedding components")


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    value = float(np.dot(u, v) / (nu * nv))
    return value if math.isfinite(value) else 0.0

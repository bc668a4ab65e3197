"""Immutable exact-scan retrieval index over partitioned embeddings.

Every query scores every non-excluded, filter-passing item with the signed
weighted similarity and sorts by (score descending, id ascending).  The id
tie-break makes ranks deterministic; scores are accumulated per axis in
schema order for reproducibility.  No approximate search: corpus scale
here never justifies it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import AxisSchema, PartitionedEmbedding, QueryWeights
from .errors import (
    DuplicateId,
    EmptyIndex,
    ExcludedTarget,
    SchemaMismatch,
    UnknownId,
)
from . import io as fio

FilterFn = Callable[[str, Mapping[str, str]], bool]


@dataclass(frozen=True)
class ItemRecord:
    """One indexed utterance: id, corpus tag, label map, embedding."""

    id: str
    corpus: str
    labels: Mapping[str, str]
    embedding: PartitionedEmbedding

    def __post_init__(self):
        object.__setattr__(self, "labels", dict(self.labels))


@dataclass(frozen=True)
class RetrievalResult:
    item_id: str
    score: float
    rank: int
    per_axis: Mapping[str, float]


class QueryHits(list):
    """query() result list; ``empty_after_filter`` flags an all-filtered scan."""

    def __init__(self, results: Iterable[RetrievalResult], empty_after_filter: bool):
        super().__init__(results)
        self.empty_after_filter = empty_after_filter


class Index:
    """Immutable store; iteration order is insertion order."""

    def __init__(self, items: Sequence[ItemRecord]):
        if not items:
            raise EmptyIndex("cannot build an index with no items")
        schema = items[0].embedding.schema
        ids: list[str] = []
        seen: set[str] = set()
        for item in items:
            if item.embedding.schema != schema:
                raise SchemaMismatch(
                    f"item {item.id!r} uses a different schema than the first item"
                )
            if item.id in seen:
                raise DuplicateId(f"duplicate item id {item.id!r}")
            seen.add(item.id)
            ids.append(item.id)
        self._schema = schema
        self._items = tuple(items)
        self._ids = tuple(ids)
        self._pos = {item_id: i for i, item_id in enumerate(ids)}
        matrix = np.stack([item.embedding.data for item in items])
        matrix.setflags(write=False)
        self._matrix = matrix

    @property
    def schema(self) -> AxisSchema:
        return self._schema

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._pos

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    def record(self, item_id: str) -> ItemRecord:
        if item_id not in self._pos:
            raise UnknownId(f"unknown item id {item_id!r}")
        return self._items[self._pos[item_id]]

    def label_fields(self) -> list[str]:
        fields: set[str] = set()
        for item in self._items:
            fields.update(item.labels.keys())
        return sorted(fields)

    def corpora(self) -> list[str]:
        return sorted({item.corpus for item in self._items})


def build_index(items: Sequence[ItemRecord]) -> Index:
    """Validate and freeze a list of records into an index."""
    return Index(items)


def _check_query(index: Index, q: PartitionedEmbedding) -> None:
    if q.schema != index.schema:
        raise SchemaMismatch("query embedding schema does not match the index")


def _scores_and_cosines(
    index: Index, q: PartitionedEmbedding, w: QueryWeights
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Weighted scores for every item, left-folded in schema axis order."""
    resolved = w.resolve(index.schema)
    matrix = index._matrix
    scores = np.zeros(len(index))
    cosines: dict[str, np.ndarray] = {}
    for (axis, sl), weight in zip(index.schema.slices(), resolved):
        cos = np.clip(matrix[:, sl] @ q.data[sl], -1.0, 1.0)
        cosines[axis] = cos
        scores = scores + weight * cos
    return scores, cosines


def _candidate_order(
    index: Index,
    q: PartitionedEmbedding,
    w: QueryWeights,
    filter: FilterFn | None,
    exclude_ids: Iterable[str] | None,
) -> tuple[list[int], np.ndarray, dict[str, np.ndarray], bool]:
    """Sorted candidate positions plus scores; bool flags empty-after-filter."""
    _check_query(index, q)
    scores, cosines = _scores_and_cosines(index, q, w)
    excluded = set(exclude_ids) if exclude_ids else set()
    candidates = []
    for pos, item in enumerate(index):
        if item.id in excluded:
            continue
        if filter is not None and not filter(item.corpus, item.labels):
            continue
        candidates.append(pos)
    empty_after_filter = not candidates
    candidates.sort(key=lambda pos: (-scores[pos], index.ids[pos]))
    return candidates, scores, cosines, empty_after_filter


def query(
    index: Index,
    q: PartitionedEmbedding,
    w: QueryWeights,
    k: int,
    filter: FilterFn | None = None,
    exclude_ids: Iterable[str] | None = None,
) -> QueryHits:
    """Exact top-k retrieval with per-axis cosine breakdowns.

    Ties break by ascending item id; ranks are contiguous from 1.  An
    all-filtered scan returns an empty hit list with its flag set rather
    than raising.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates, scores, cosines, emptied = _candidate_order(
        index, q, w, filter, exclude_ids
    )
    results = [
        RetrievalResult(
            item_id=index.ids[pos],
            score=float(scores[pos]),
            rank=rank,
            per_axis={axis: float(cosines[axis][pos]) for axis in index.schema.names},
        )
        for rank, pos in enumerate(candidates[:k], start=1)
    ]
    return QueryHits(results, empty_after_filter=emptied)


def rank_of(
    index: Index,
    q: PartitionedEmbedding,
    w: QueryWeights,
    target_id: str,
    filter: FilterFn | None = None,
    exclude_ids: Iterable[str] | None = None,
) -> int:
    """1-based position of ``target_id`` in the full deterministic ranking."""
    if target_id not in index:
        raise UnknownId(f"unknown item id {target_id!r}")
    if exclude_ids and target_id in set(exclude_ids):
        raise ExcludedTarget(f"target {target_id!r} is in the exclusion set")
    candidates, _, _, _ = _candidate_order(index, q, w, filter, exclude_ids)
    target_pos = index._pos[target_id]
    for rank, pos in enumerate(candidates, start=1):
        if pos == target_pos:
            return rank
    raise ExcludedTarget(f"target {target_id!r} was removed by the filter")


# ---------------------------------------------------------------------------
# Persistence: JSON-lines manifest with byte offsets + FPEB vector blob
# ---------------------------------------------------------------------------

INDEX_MANIFEST = "manifest.jsonl"
INDEX_BLOB = "vectors.fpeb"


def save_index(index: Index, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    matrix = np.stack([item.embedding.data for item in index])
    fio.write_blob(directory / INDEX_BLOB, matrix)
    entries = [
        fio.ManifestEntry(id=item.id, corpus=item.corpus, labels=item.labels, row=i)
        for i, item in enumerate(index)
    ]
    fio.write_manifest(
        directory / INDEX_MANIFEST,
        kind=fio.MANIFEST_INDEX,
        blob=INDEX_BLOB,
        entries=entries,
        dim=index.schema.total_dim,
        schema=index.schema,
    )
    return directory


def load_index(directory: str | Path) -> Index:
    directory = Path(directory)
    dataset = fio.load_dataset(directory / INDEX_MANIFEST)
    return build_index(dataset.item_records())

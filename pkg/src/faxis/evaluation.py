"""Cross-corpus retrieval evaluation: Precision@k, ceilings, preference flips.

The hit rule: a retrieved item is correct iff it comes from a different
corpus than the query and reads the same sentence.  P@1 looks at the top
overall result; P@k for k > 1 restricts the ranked list to cross-corpus
items first.  That asymmetry is deliberate and matches how the numbers are
reported.

The preference-flip report assigns every (query, item) pair to one of four
categories via sentence-label x speaker-label equality and tracks each
category's mean rank under each weight setting, so flipping the sign of
the speaker weight should visibly swap which categories dominate.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .core import PartitionedEmbedding, QueryWeights
from .errors import EmptyIndex, MissingLabel
from .index import Index, _candidate_order


class FlipCategory(enum.Enum):
    SS_SAME_SPK = "ss_same_spk"
    SS_DIFF_SPK = "ss_diff_spk"
    DS_SAME_SPK = "ds_same_spk"
    DS_DIFF_SPK = "ds_diff_spk"

    @staticmethod
    def of(same_sentence: bool, same_speaker: bool) -> "FlipCategory":
        if same_sentence:
            return FlipCategory.SS_SAME_SPK if same_speaker else FlipCategory.SS_DIFF_SPK
        return FlipCategory.DS_SAME_SPK if same_speaker else FlipCategory.DS_DIFF_SPK


# Column order used everywhere a report is rendered.
CATEGORY_ORDER = (
    FlipCategory.SS_SAME_SPK,
    FlipCategory.SS_DIFF_SPK,
    FlipCategory.DS_SAME_SPK,
    FlipCategory.DS_DIFF_SPK,
)

CATEGORY_HEADERS = {
    FlipCategory.SS_SAME_SPK: "ss/same",
    FlipCategory.SS_DIFF_SPK: "ss/diff",
    FlipCategory.DS_SAME_SPK: "ds/same",
    FlipCategory.DS_DIFF_SPK: "ds/diff",
}


@dataclass(frozen=True)
class EvalQuery:
    item_id: str
    corpus: str
    labels: Mapping[str, str]
    embedding: PartitionedEmbedding

    def __post_init__(self):
        object.__setattr__(self, "labels", dict(self.labels))


@dataclass(frozen=True)
class QuerySet:
    """Queries plus the label field that defines "same sentence"."""

    queries: tuple[EvalQuery, ...]
    sentence_key: str = "sentence"
    speaker_key: str = "speaker"

    def __init__(
        self,
        queries: Iterable[EvalQuery],
        sentence_key: str = "sentence",
        speaker_key: str = "speaker",
    ):
        object.__setattr__(self, "queries", tuple(queries))
        object.__setattr__(self, "sentence_key", sentence_key)
        object.__setattr__(self, "speaker_key", speaker_key)
        if not self.queries:
            raise EmptyIndex("query set is empty")

    @classmethod
    def from_index(
        cls,
        index: Index,
        corpus: str | None = None,
        ids: Iterable[str] | None = None,
        sentence_key: str = "sentence",
        speaker_key: str = "speaker",
    ) -> "QuerySet":
        wanted = set(ids) if ids is not None else None
        queries = [
            EvalQuery(
                item_id=item.id,
                corpus=item.corpus,
                labels=item.labels,
                embedding=item.embedding,
            )
            for item in index
            if (corpus is None or item.corpus == corpus)
            and (wanted is None or item.id in wanted)
        ]
        return cls(queries, sentence_key=sentence_key, speaker_key=speaker_key)


@dataclass(frozen=True)
class SettingReport:
    weights: QueryWeights
    mean_ranks: Mapping[FlipCategory, float | None]
    category_counts: Mapping[FlipCategory, int]
    p_at: Mapping[int, float]


@dataclass(frozen=True)
class EvalReport:
    settings: tuple[SettingReport, ...]
    ceiling: float
    n_queries: int
    n_retrievable: int
    meta: Mapping[str, object] = field(default_factory=dict)


def _ranked_candidates(
    index: Index,
    q: EvalQuery,
    w: QueryWeights,
    exclude_self: bool,
) -> list[int]:
    exclude = {q.item_id} if exclude_self and q.item_id in index else set()
    candidates, _, _, _ = _candidate_order(index, q.embedding, w, None, exclude)
    return candidates


def _is_hit(
    index: Index, q: EvalQuery, pos: int, sentence_key: str
) -> bool:
    item = index.record(index.ids[pos])
    if item.corpus == q.corpus:
        return False
    q_sentence = q.labels.get(sentence_key)
    return q_sentence is not None and item.labels.get(sentence_key) == q_sentence


def precision_at_k(
    queryset: QuerySet,
    index: Index,
    w: QueryWeights,
    k: int,
    exclude_self: bool = True,
) -> float:
    """Fraction of queries with a correct cross-corpus match per the hit rule.

    k = 1: is the top overall result (self excluded) cross-corpus and
    same-sentence?  k > 1: restrict the ranking to cross-corpus items and
    look for a same-sentence item in the first k.  Queries with no valid
    target still count in the denominator.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise EmptyIndex("cannot evaluate precision against an empty index")
    hits = 0
    for q in queryset.queries:
        candidates = _ranked_candidates(index, q, w, exclude_self)
        if not candidates:
            continue
        if k == 1:
            if _is_hit(index, q, candidates[0], queryset.sentence_key):
                hits += 1
        else:
            cross = [
                pos
                for pos in candidates
                if index.record(index.ids[pos]).corpus != q.corpus
            ]
            if any(
                _is_hit(index, q, pos, queryset.sentence_key) for pos in cross[:k]
            ):
                hits += 1
    return hits / len(queryset.queries)


def retrievable_queries(queryset: QuerySet, index: Index) -> int:
    """Number of queries with at least one cross-corpus same-sentence item."""
    count = 0
    for q in queryset.queries:
        q_sentence = q.labels.get(queryset.sentence_key)
        for item in index:
            if item.id == q.item_id:
                continue
            if (
                item.corpus != q.corpus
                and q_sentence is not None
                and item.labels.get(queryset.sentence_key) == q_sentence
            ):
                count += 1
                break
    return count


def metric_ceiling(queryset: QuerySet, index: Index) -> float:
    """Max achievable precision: fraction of queries with any valid target."""
    return retrievable_queries(queryset, index) / len(queryset.queries)


def preference_flip_report(
    queryset: QuerySet,
    index: Index,
    weight_settings: Sequence[QueryWeights],
    exclude_self: bool = True,
    precision_ks: tuple[int, ...] = (1, 10),
) -> EvalReport:
    """Mean rank per flip category under each weight setting, plus P@k.

    Every non-excluded index item is assigned to exactly one category per
    query; mean ranks average over all (query, item) pairs in the category.
    Items or queries lacking sentence/speaker labels raise MissingLabel.
    """
    if not weight_settings:
        raise ValueError("need at least one weight setting")
    skey, pkey = queryset.sentence_key, queryset.speaker_key
    for item in index:
        if skey not in item.labels or pkey not in item.labels:
            raise MissingLabel(
                f"index item {item.id!r} lacks {skey!r} or {pkey!r} label"
            )
    for q in queryset.queries:
        if skey not in q.labels or pkey not in q.labels:
            raise MissingLabel(f"query {q.item_id!r} lacks {skey!r} or {pkey!r} label")

    settings: list[SettingReport] = []
    for w in weight_settings:
        rank_sums: dict[FlipCategory, float] = {c: 0.0 for c in CATEGORY_ORDER}
        counts: dict[FlipCategory, int] = {c: 0 for c in CATEGORY_ORDER}
        for q in queryset.queries:
            candidates = _ranked_candidates(index, q, w, exclude_self)
            for rank, pos in enumerate(candidates, start=1):
                item = index.record(index.ids[pos])
                category = FlipCategory.of(
                    same_sentence=item.labels[skey] == q.labels[skey],
                    same_speaker=item.labels[pkey] == q.labels[pkey],
                )
                rank_sums[category] += rank
                counts[category] += 1
        mean_ranks = {
            c: (rank_sums[c] / counts[c] if counts[c] else None)
            for c in CATEGORY_ORDER
        }
        p_at = {
            k: precision_at_k(queryset, index, w, k, exclude_self=exclude_self)
            for k in precision_ks
        }
        settings.append(
            SettingReport(
                weights=w, mean_ranks=mean_ranks, category_counts=counts, p_at=p_at
            )
        )

    return EvalReport(
        settings=tuple(settings),
        ceiling=metric_ceiling(queryset, index),
        n_queries=len(queryset.queries),
        n_retrievable=retrievable_queries(queryset, index),
        meta={
            "mean_rank_aggregation": "per_item",
            "exclude_self": exclude_self,
            "sentence_key": skey,
            "speaker_key": pkey,
        },
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def format_percent(value: float) -> str:
    """Percentages to one decimal: 0.655 -> '65.5', 17/172 -> '9.9'."""
    return f"{value * 100:.1f}"


def format_mean_rank(value: float | None) -> str:
    return "—" if value is None else f"{value:.0f}"


def _weights_label(w: QueryWeights) -> str:
    return ",".join(f"{k}={v:g}" for k, v in sorted(w.weights.items()))


def report_render(report: EvalReport) -> str:
    """Deterministic text table mirroring the report JSON."""
    ks = sorted({k for s in report.settings for k in s.p_at})
    headers = ["setting"] + [CATEGORY_HEADERS[c] for c in CATEGORY_ORDER] + [
        f"P@{k}" for k in ks
    ]
    rows = []
    for s in report.settings:
        row = [_weights_label(s.weights)]
        row += [format_mean_rank(s.mean_ranks[c]) for c in CATEGORY_ORDER]
        row += [format_percent(s.p_at[k]) if k in s.p_at else "—" for k in ks]
        rows.append(row)
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) if i == 0 else h.rjust(widths[i]) for i, h in enumerate(headers))
    ]
    for r in rows:
        lines.append(
            "  ".join(
                c.ljust(widths[i]) if i == 0 else c.rjust(widths[i])
                for i, c in enumerate(r)
            )
        )
    lines.append(
        f"ceiling {format_percent(report.ceiling)}% "
        f"({report.n_retrievable}/{report.n_queries} queries retrievable)"
    )
    return "\n".join(lines)


def report_to_json(report: EvalReport) -> dict:
    return {
        "settings": [
            {
                "weights": dict(s.weights.weights),
                "per_category_mean_rank": {
                    c.value: s.mean_ranks[c] for c in CATEGORY_ORDER
                },
                "category_counts": {
                    c.value: s.category_counts[c] for c in CATEGORY_ORDER
                },
                "p_at": {str(k): v for k, v in sorted(s.p_at.items())},
            }
            for s in report.settings
        ],
        "ceiling": report.ceiling,
        "n_queries": report.n_queries,
        "n_retrievable": report.n_retrievable,
        "meta": dict(report.meta),
    }


def report_from_json(obj: Mapping) -> EvalReport:
    settings = []
    for s in obj["settings"]:
        settings.append(
            SettingReport(
                weights=QueryWeights(s["weights"]),
                mean_ranks={
                    c: s["per_category_mean_rank"].get(c.value)
                    for c in CATEGORY_ORDER
                },
                category_counts={
                    c: int(s.get("category_counts", {}).get(c.value, 0))
                    for c in CATEGORY_ORDER
                },
                p_at={int(k): float(v) for k, v in s["p_at"].items()},
            )
        )
    return EvalReport(
        settings=tuple(settings),
        ceiling=float(obj["ceiling"]),
        n_queries=int(obj["n_queries"]),
        n_retrievable=int(obj["n_retrievable"]),
        meta=dict(obj.get("meta", {})),
    )


def report_json_text(report: EvalReport) -> str:
    """Canonical JSON rendering (sorted keys, newline-terminated)."""
    return json.dumps(report_to_json(report), sort_keys=True, indent=2) + "\n"

"""Axis schema, partitioned embeddings, and signed multi-axis similarity.

An embedding is one flat vector whose contiguous slices are per-axis unit
vectors.  Similarity between two embeddings is a signed weighted sum of
per-axis cosines; a negative weight repels items that are similar on that
axis.  Everything here is immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DimMismatch,
    SchemaMismatch,
    UnknownAxis,
    ZeroVector,
)

# Tolerances: ingest drift beyond INGEST_NORM_TOL is flagged, drift at or
# below SKIP_RENORM_TOL is left untouched so already-normalized data
# round-trips bit-exactly.  Norms below ZERO_NORM_FLOOR are degenerate.
INGEST_NORM_TOL = 1e-5
SKIP_RENORM_TOL = 1e-8
ZERO_NORM_FLOOR = 1e-12

DEFAULT_SEMANTIC_DIM = 384
DEFAULT_SPEAKER_DIM = 256
DEFAULT_SPEAKER_DIM_LARGE = 512
DEFAULT_DIALECT_DIM = 12


def l2_normalize(v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Scale ``v`` to unit L2 norm.

    Raises ZeroVector when the norm is below 1e-12; whether a degenerate
    head output is fatal is the caller's decision, not something to hide
    here.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise DimMismatch(f"expected a 1-D vector of length >= 1, got shape {arr.shape}")
    norm = float(np.linalg.norm(arr))
    if norm < ZERO_NORM_FLOOR:
        raise ZeroVector(f"cannot normalize vector with norm {norm:.3e}")
    return arr / norm


@dataclass(frozen=True)
class AxisSchema:
    """Ordered list of named axes with fixed per-axis dimensions.

    The order is fixed at creation; slice offsets are a pure function of
    order and dims, so two schemas are interchangeable iff they compare
    equal.
    """

    axes: tuple[tuple[str, int], ...]

    def __init__(self, axes: Iterable[tuple[str, int]]):
        normalized = tuple((str(name), int(dim)) for name, dim in axes)
        if not normalized:
            raise DimMismatch("schema needs at least one axis")
        seen: set[str] = set()
        for name, dim in normalized:
            if not name:
                raise UnknownAxis("axis names must be non-empty")
            if name in seen:
                raise DimMismatch(f"duplicate axis name {name!r}")
            if dim < 1:
                raise DimMismatch(f"axis {name!r} has dim {dim}, must be >= 1")
            seen.add(name)
        object.__setattr__(self, "axes", normalized)

    @classmethod
    def default(cls, speaker_dim: int = DEFAULT_SPEAKER_DIM) -> "AxisSchema":
        """Stock three-axis layout: semantic 384, speaker_id 512 or 256, dialect 12."""
        return cls(
            [
                ("semantic", DEFAULT_SEMANTIC_DIM),
                ("speaker_id", speaker_dim),
                ("dialect", DEFAULT_DIALECT_DIM),
            ]
        )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.axes)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.axes)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def dim_of(self, axis: str) -> int:
        for name, dim in self.axes:
            if name == axis:
                return dim
        raise UnknownAxis(f"unknown axis {axis!r}; valid axes: {list(self.names)}")

    def slice_of(self, axis: str) -> slice:
        offset = 0
        for name, dim in self.axes:
            if name == axis:
                return slice(offset, offset + dim)
            offset += dim
        raise UnknownAxis(f"unknown axis {axis!r}; valid axes: {list(self.names)}")

    def slices(self) -> list[tuple[str, slice]]:
        out = []
        offset = 0
        for name, dim in self.axes:
            out.append((name, slice(offset, offset + dim)))
            offset += dim
        return out

    def to_json(self) -> dict:
        return {"axes": [{"name": name, "dim": dim} for name, dim in self.axes]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "AxisSchema":
        return cls((a["name"], a["dim"]) for a in obj["axes"])


class PartitionedEmbedding:
    """One concatenated vector whose slices are per-axis unit embeddings.

    The constructor renormalizes each slice.  Slices already unit within
    1e-8 are kept bit-for-bit (so split/concat round-trips exactly);
    ``renormalized`` records whether any slice drifted beyond the 1e-5
    ingest tolerance.  Data is read-only after construction.
    """

    __slots__ = ("schema", "data", "renormalized")

    def __init__(self, schema: AxisSchema, data: Sequence[float] | np.ndarray):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.shape[0] != schema.total_dim:
            raise DimMismatch(
                f"embedding length {arr.shape} does not match schema total_dim {schema.total_dim}"
            )
        flagged = False
        for name, sl in schema.slices():
            norm = float(np.linalg.norm(arr[sl]))
            if norm < ZERO_NORM_FLOOR:
                raise ZeroVector(f"axis {name!r} slice has norm {norm:.3e}")
            drift = abs(norm - 1.0)
            if drift > SKIP_RENORM_TOL:
                arr[sl] = arr[sl] / norm
            if drift > INGEST_NORM_TOL:
                flagged = True
        arr.setflags(write=False)
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "renormalized", flagged)

    def __setattr__(self, name, value):  # immutable after construction
        raise AttributeError("PartitionedEmbedding is immutable")

    def axis_vector(self, axis: str) -> np.ndarray:
        """Read-only view of one axis slice."""
        return self.data[self.schema.slice_of(axis)]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PartitionedEmbedding)
            and self.schema == other.schema
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"PartitionedEmbedding(axes={list(self.schema.names)}, dim={self.schema.total_dim})"


@dataclass(frozen=True)
class QueryWeights:
    """Signed real weight per axis; missing axes default to weight 0.

    Weights are used raw: no normalization or constraint is applied, so
    settings like ``{semantic: 1.0, speaker_id: -1.0}`` mean exactly what
    they say.
    """

    weights: Mapping[str, float]

    def __init__(self, weights: Mapping[str, float]):
        object.__setattr__(
            self, "weights", {str(k): float(v) for k, v in dict(weights).items()}
        )

    def resolve(self, schema: AxisSchema) -> tuple[float, ...]:
        """Per-axis weights in schema order; unknown keys raise UnknownAxis."""
        unknown = [k for k in self.weights if k not in schema.names]
        if unknown:
            raise UnknownAxis(
                f"unknown axis {unknown[0]!r} in weights; valid axes: {list(schema.names)}"
            )
        return tuple(self.weights.get(name, 0.0) for name in schema.names)

    def negated(self) -> "QueryWeights":
        return QueryWeights({k: -v for k, v in self.weights.items()})

    def scaled(self, factor: float) -> "QueryWeights":
        return QueryWeights({k: factor * v for k, v in self.weights.items()})

    def abs_sum(self) -> float:
        return sum(abs(v) for v in self.weights.values())

    def to_json(self) -> dict:
        return dict(self.weights)

    def __eq__(self, other) -> bool:
        return isinstance(other, QueryWeights) and dict(self.weights) == dict(other.weights)


def _require_same_schema(a: PartitionedEmbedding, b: PartitionedEmbedding) -> None:
    if a.schema != b.schema:
        raise SchemaMismatch(
            f"embeddings use different schemas: {list(a.schema.names)} vs {list(b.schema.names)}"
        )


def axis_cosine(a: PartitionedEmbedding, b: PartitionedEmbedding, axis: str) -> float:
    """Cosine between one axis slice of two embeddings.

    Slices are unit by construction, so this is their dot product, clamped
    to [-1, 1] to absorb rounding.
    """
    _require_same_schema(a, b)
    sl = a.schema.slice_of(axis)
    x, y = a.data[sl], b.data[sl]
    # cos(x, x) is 1 by definition; skip the dot product so self-pairs are exact
    if x is y or np.array_equal(x, y):
        return 1.0
    value = float(np.dot(x, y))
    return min(1.0, max(-1.0, value))


def weighted_similarity(
    a: PartitionedEmbedding, b: PartitionedEmbedding, w: QueryWeights
) -> float:
    """Signed weighted sum of per-axis cosines.

    Accumulated as a left fold in schema axis order so scores are
    bit-reproducible.  Bounded by the sum of absolute weights.
    """
    _require_same_schema(a, b)
    resolved = w.resolve(a.schema)
    total = 0.0
    for (axis, _), weight in zip(a.schema.axes, resolved):
        total += weight * axis_cosine(a, b, axis)
    return total


def split(e: PartitionedEmbedding, axis: str) -> np.ndarray:
    """Copy of one axis slice as a standalone unit vector."""
    return np.array(e.axis_vector(axis), copy=True)


def concat(
    schema: AxisSchema,
    vectors: Mapping[str, Sequence[float]] | Sequence[Sequence[float]],
) -> PartitionedEmbedding:
    """Assemble per-axis unit vectors into one partitioned embedding.

    Accepts a mapping keyed by axis name or a sequence in schema order.
    Wrong slice lengths raise DimMismatch; split(concat(xs)) returns each
    input bit-exactly when the inputs are unit vectors.
    """
    if isinstance(vectors, Mapping):
        missing = [name for name in schema.names if name not in vectors]
        if missing:
            raise UnknownAxis(f"concat missing axis {missing[0]!r}")
        extra = [name for name in vectors if name not in schema.names]
        if extra:
            raise UnknownAxis(
                f"unknown axis {extra[0]!r}; valid axes: {list(schema.names)}"
            )
        parts = [np.asarray(vectors[name], dtype=np.float64) for name in schema.names]
    else:
        parts = [np.asarray(v, dtype=np.float64) for v in vectors]
        if len(parts) != len(schema.axes):
            raise DimMismatch(
                f"expected {len(schema.axes)} per-axis vectors, got {len(parts)}"
            )
    for (name, dim), part in zip(schema.axes, parts):
        if part.ndim != 1 or part.shape[0] != dim:
            raise DimMismatch(
                f"axis {name!r} expects dim {dim}, got shape {part.shape}"
            )
    return PartitionedEmbedding(schema, np.concatenate(parts))

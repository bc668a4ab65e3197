"""File formats, dataset loading, and the planted-factor synthetic generator.

Vector blob ("FPEB"): magic, u16 version, u32 rows, u32 dim, then f32
little-endian row-major data.  Manifests are JSON lines: a header object on
the first line (kind, blob name, dims, schema for embedding manifests),
then one entry per line with id, corpus, labels, and row reference.

The synthetic generator plants per-axis label prototypes in a latent space
and mixes them into pooled features, so training and retrieval claims can
be checked against known ground truth.  Arithmetic is f64 throughout;
storage is f32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import AxisSchema, INGEST_NORM_TOL
from .errors import (
    BadMagic,
    ConfigInvalid,
    DimMismatch,
    DuplicateId,
    MissingBlob,
    NonFinite,
    NormViolation,
    RefOutOfRange,
    TruncatedFile,
)

BLOB_MAGIC = b"FPEB"
BLOB_VERSION = 1
BLOB_HEADER = struct.Struct("<4sHII")  # magic, version, rows, dim -> 14 bytes

MANIFEST_FEATURES = "faxis-features"
MANIFEST_EMBEDDINGS = "faxis-embeddings"
MANIFEST_INDEX = "faxis-index"

# Which label field supervises each stock axis.
DEFAULT_AXIS_LABEL_KEYS = {
    "semantic": "sentence",
    "speaker_id": "speaker",
    "dialect": "dialect",
}


def write_blob(path: str | Path, matrix: np.ndarray) -> Path:
    """Write a 2-D matrix as an FPEB blob (f32 little-endian, row-major)."""
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise DimMismatch(f"blob expects a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("blob matrices must be finite")
    rows, dim = arr.shape
    if rows >= 2**32 or dim >= 2**32:
        raise DimMismatch("blob dimensions must fit in u32")
    path = Path(path)
    data = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(BLOB_HEADER.pack(BLOB_MAGIC, BLOB_VERSION, rows, dim))
        fh.write(data.tobytes(order="C"))
    return path


def read_blob(path: str | Path) -> np.ndarray:
    """Read an FPEB blob back as an f32 matrix; the round-trip is bit-exact."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < BLOB_HEADER.size:
        raise TruncatedFile(f"{path}: {len(raw)} bytes is too short for a blob header")
    magic, version, rows, dim = BLOB_HEADER.unpack_from(raw)
    if magic != BLOB_MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}, expected {BLOB_MAGIC!r}")
    if version != BLOB_VERSION:
        raise BadMagic(f"{path}: unsupported blob version {version}")
    expected = BLOB_HEADER.size + 4 * rows * dim
    if len(raw) != expected:
        raise TruncatedFile(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=BLOB_HEADER.size)
    matrix = data.reshape(rows, dim)
    if not np.all(np.isfinite(matrix)):
        raise NonFinite(f"{path}: blob contains non-finite values")
    return matrix


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    corpus: str
    labels: Mapping[str, str]
    row: int


@dataclass(frozen=True)
class Manifest:
    kind: str
    blob: str
    dim: int
    count: int
    entries: tuple[ManifestEntry, ...]
    schema: AxisSchema | None = None
    meta: Mapping[str, object] = field(default_factory=dict)


def write_manifest(
    path: str | Path,
    kind: str,
    blob: str,
    entries: Sequence[ManifestEntry],
    dim: int,
    schema: AxisSchema | None = None,
    meta: Mapping[str, object] | None = None,
) -> Path:
    """Write a JSON-lines manifest: header object first, then one entry per line."""
    if kind in (MANIFEST_EMBEDDINGS, MANIFEST_INDEX) and schema is None:
        raise ConfigInvalid(f"{kind} manifests require a schema block")
    path = Path(path)
    header: dict = {
        "format": kind,
        "version": 1,
        "blob": blob,
        "dim": int(dim),
        "count": len(entries),
    }
    if schema is not None:
        header["schema"] = schema.to_json()
    if meta:
        header["meta"] = dict(meta)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for entry in entries:
            record = {
                "id": entry.id,
                "corpus": entry.corpus,
                "labels": dict(entry.labels),
                "row": entry.row,
            }
            if kind == MANIFEST_INDEX:
                record["offset"] = BLOB_HEADER.size + 4 * entry.row * int(dim)
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return path


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise TruncatedFile(f"{path}: empty manifest")
    header = json.loads(lines[0])
    kind = header.get("format")
    if kind not in (MANIFEST_FEATURES, MANIFEST_EMBEDDINGS, MANIFEST_INDEX):
        raise BadMagic(f"{path}: unknown manifest format {kind!r}")
    schema = AxisSchema.from_json(header["schema"]) if "schema" in header else None
    if kind in (MANIFEST_EMBEDDINGS, MANIFEST_INDEX) and schema is None:
        raise ConfigInvalid(f"{path}: {kind} manifest is missing its schema block")
    entries = []
    seen: set[str] = set()
    for line in lines[1:]:
        obj = json.loads(line)
        entry = ManifestEntry(
            id=str(obj["id"]),
            corpus=str(obj.get("corpus", "")),
            labels={str(k): str(v) for k, v in obj.get("labels", {}).items()},
            row=int(obj["row"]),
        )
        if entry.id in seen:
            raise DuplicateId(f"{path}: duplicate id {entry.id!r}")
        seen.add(entry.id)
        entries.append(entry)
    declared = header.get("count")
    if declared is not None and declared != len(entries):
        raise TruncatedFile(
            f"{path}: header declares {declared} entries, found {len(entries)}"
        )
    return Manifest(
        kind=kind,
        blob=str(header["blob"]),
        dim=int(header["dim"]),
        count=len(entries),
        entries=tuple(entries),
        schema=schema,
        meta=header.get("meta", {}),
    )


@dataclass(frozen=True)
class LoadedDataset:
    """Materialized manifest: row matrix plus per-item metadata."""

    kind: str
    matrix: np.ndarray  # (n, dim) f64
    entries: tuple[ManifestEntry, ...]
    schema: AxisSchema | None

    def item_records(self):
        """ItemRecords for embedding datasets (index-ready)."""
        from .index import ItemRecord
        from .core import PartitionedEmbedding

        if self.schema is None:
            raise ConfigInvalid("feature datasets carry no embedding schema")
        return [
            ItemRecord(
                id=entry.id,
                corpus=entry.corpus,
                labels=dict(entry.labels),
                embedding=PartitionedEmbedding(self.schema, self.matrix[i]),
            )
            for i, entry in enumerate(self.entries)
        ]


def load_dataset(manifest_path: str | Path) -> LoadedDataset:
    """Load a manifest and its blob rows, validating refs and norms.

    Embedding manifests are checked slice-by-slice against the schema:
    any row whose axis slice drifts beyond 1e-5 from unit norm raises
    NormViolation listing the offending ids.
    """
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    blob_path = manifest_path.parent / manifest.blob
    if not blob_path.exists():
        raise MissingBlob(f"{manifest_path}: blob {manifest.blob!r} not found")
    blob = read_blob(blob_path)
    if blob.shape[1] != manifest.dim:
        raise DimMismatch(
            f"{manifest_path}: manifest dim {manifest.dim} != blob dim {blob.shape[1]}"
        )
    for entry in manifest.entries:
        if not (0 <= entry.row < blob.shape[0]):
            raise RefOutOfRange(
                f"{manifest_path}: entry {entry.id!r} references row {entry.row} "
                f"of a {blob.shape[0]}-row blob"
            )
    rows = np.array(
        [blob[entry.row] for entry in manifest.entries], dtype=np.float64
    ).reshape(len(manifest.entries), manifest.dim)
    if manifest.kind in (MANIFEST_EMBEDDINGS, MANIFEST_INDEX):
        assert manifest.schema is not None
        if manifest.schema.total_dim != manifest.dim:
            raise DimMismatch(
                f"{manifest_path}: schema total_dim {manifest.schema.total_dim} "
                f"!= blob dim {manifest.dim}"
            )
        bad: list[str] = []
        for i, entry in enumerate(manifest.entries):
            for _, sl in manifest.schema.slices():
                if abs(float(np.linalg.norm(rows[i, sl])) - 1.0) > INGEST_NORM_TOL:
                    bad.append(entry.id)
                    break
        if bad:
            raise NormViolation(
                f"{manifest_path}: {len(bad)} embedding rows violate unit-norm "
                f"tolerance {INGEST_NORM_TOL}",
                ids=bad,
            )
    return LoadedDataset(
        kind=manifest.kind,
        matrix=rows,
        entries=manifest.entries,
        schema=manifest.schema,
    )


# ---------------------------------------------------------------------------
# Planted-factor synthetic data
# ---------------------------------------------------------------------------

SYNTH_AXES = ("semantic", "speaker_id", "dialect")


@dataclass(frozen=True)
class SynthConfig:
    """Controls the planted-factor generator.

    Each axis gets one random unit prototype per label value in its own
    latent block; an item's latent is the concatenation of its per-axis
    prototypes plus gaussian noise, renormalized per block.  The speaker
    block is scaled by ``speaker_scale`` before mixing so pooled features
    can be made speaker-dominant.  Pooled feature = mixing matrix x latent.
    """

    n_speakers: int
    n_sentences: int
    n_dialects: int
    d_enc: int
    noise_sigma: float = 0.1
    mixing: str = "orthogonal"
    seed: int = 0
    latent_dim: int = 16
    speaker_scale: float = 3.0
    corpus_names: tuple[str, str] = ("synthA", "synthB")
    query_speakers: int | None = None  # speakers assigned to corpus_names[0]

    def validate(self) -> None:
        if min(self.n_speakers, self.n_sentences, self.n_dialects) < 1:
            raise ConfigInvalid("speaker/sentence/dialect counts must be >= 1")
        if self.d_enc < 1:
            raise ConfigInvalid("d_enc must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigInvalid("noise_sigma must be >= 0")
        if self.mixing not in ("orthogonal", "random_full_rank"):
            raise ConfigInvalid(f"unknown mixing kind {self.mixing!r}")
        if self.latent_dim < 1:
            raise ConfigInvalid("latent_dim must be >= 1")
        if len(SYNTH_AXES) * self.latent_dim > self.d_enc:
            raise ConfigInvalid(
                f"latent blocks ({len(SYNTH_AXES)} x {self.latent_dim}) "
                f"do not fit in d_enc {self.d_enc}"
            )
        n_query = self.resolved_query_speakers()
        if not (0 < n_query < self.n_speakers) and self.n_speakers > 1:
            raise ConfigInvalid("query_speakers must split speakers into two corpora")

    def resolved_query_speakers(self) -> int:
        if self.query_speakers is not None:
            return self.query_speakers
        return max(1, self.n_speakers // 4)


@dataclass(frozen=True)
class SynthData:
    """Generator output with full ground truth attached."""

    config: SynthConfig
    ids: tuple[str, ...]
    corpora: tuple[str, ...]
    labels: tuple[Mapping[str, str], ...]
    features: np.ndarray  # (n, d_enc)
    latents: np.ndarray  # (n, 3 * latent_dim), post-noise, pre-mixing
    teachers: Mapping[str, np.ndarray]  # axis -> (n, latent_dim) clean prototypes
    prototypes: Mapping[str, np.ndarray]  # axis -> (n_values, latent_dim)
    mixing_matrix: np.ndarray  # (d_enc, 3 * latent_dim)
    axis_label_keys: Mapping[str, str]

    @property
    def n_items(self) -> int:
        return len(self.ids)

    def latent_slice(self, axis: str) -> slice:
        i = SYNTH_AXES.index(axis)
        return slice(i * self.config.latent_dim, (i + 1) * self.config.latent_dim)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def generate_synthetic(config: SynthConfig) -> SynthData:
    """Deterministic planted-factor dataset; same seed, same bits."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    label_counts = {
        "semantic": config.n_sentences,
        "speaker_id": config.n_speakers,
        "dialect": config.n_dialects,
    }
    prototypes = {
        axis: _unit_rows(rng.standard_normal((label_counts[axis], config.latent_dim)))
        for axis in SYNTH_AXES
    }

    n_items = config.n_speakers * config.n_sentences
    latent_total = len(SYNTH_AXES) * config.latent_dim
    ids: list[str] = []
    corpora: list[str] = []
    labels: list[dict[str, str]] = []
    latents = np.zeros((n_items, latent_total))
    teacher_rows: dict[str, np.ndarray] = {
        axis: np.zeros((n_items, config.latent_dim)) for axis in SYNTH_AXES
    }
    n_query = config.resolved_query_speakers()

    i = 0
    for spk in range(config.n_speakers):
        dia = spk % config.n_dialects
        corpus = config.corpus_names[0] if spk < n_query else config.corpus_names[1]
        for sen in range(config.n_sentences):
            ids.append(f"spk{spk:03d}-sen{sen:03d}")
            corpora.append(corpus)
            labels.append(
                {
                    "speaker": f"spk{spk:03d}",
                    "sentence": f"sen{sen:03d}",
                    "dialect": f"dia{dia:02d}",
                }
            )
            value_of = {"semantic": sen, "speaker_id": spk, "dialect": dia}
            for a, axis in enumerate(SYNTH_AXES):
                proto = prototypes[axis][value_of[axis]]
                noisy = proto + config.noise_sigma * rng.standard_normal(
                    config.latent_dim
                )
                block = noisy / np.linalg.norm(noisy)
                if axis == "speaker_id":
                    block = block * config.speaker_scale
                sl = slice(a * config.latent_dim, (a + 1) * config.latent_dim)
                latents[i, sl] = block
                teacher_rows[axis][i] = proto
            i += 1

    if config.mixing == "orthogonal":
        gauss = rng.standard_normal((config.d_enc, latent_total))
        q, r = np.linalg.qr(gauss)
        # fix signs so the factorization is unique and seed-stable
        mixing = q * np.sign(np.diag(r))
    else:
        mixing = rng.standard_normal((config.d_enc, latent_total)) / np.sqrt(
            latent_total
        )
    features = latents @ mixing.T

    return SynthData(
        config=config,
        ids=tuple(ids),
        corpora=tuple(corpora),
        labels=tuple(labels),
        features=features,
        latents=latents,
        teachers={axis: teacher_rows[axis] for axis in SYNTH_AXES},
        prototypes=prototypes,
        mixing_matrix=mixing,
        axis_label_keys=dict(DEFAULT_AXIS_LABEL_KEYS),
    )

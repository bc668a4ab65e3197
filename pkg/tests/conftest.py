"""Shared fixtures: small schemas, planted indexes, and one trained flip setup."""

from __future__ import annotations

import numpy as np
import pytest

from faxis.core import AxisSchema, PartitionedEmbedding, QueryWeights, concat
from faxis.index import ItemRecord, build_index
from faxis.io import SynthConfig
from faxis.train import TrainConfig, TrainExample, project, train_axis


@pytest.fixture
def two_axis_schema() -> AxisSchema:
    return AxisSchema([("semantic", 2), ("speaker_id", 2)])


@pytest.fixture
def small_schema() -> AxisSchema:
    return AxisSchema([("semantic", 8), ("speaker_id", 8), ("dialect", 4)])


def random_embedding(schema: AxisSchema, rng: np.random.Generator) -> PartitionedEmbedding:
    parts = []
    for _, dim in schema.axes:
        v = rng.standard_normal(dim)
        parts.append(v / np.linalg.norm(v))
    return concat(schema, parts)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def planted_embedding(
    schema: AxisSchema,
    prototypes: dict[str, np.ndarray],
    keys: dict[str, int],
    rng: np.random.Generator,
    noise: float = 0.05,
) -> PartitionedEmbedding:
    """Embedding whose axis slices sit near known per-label prototypes."""
    parts = {}
    for name, _ in schema.axes:
        proto = prototypes[name][keys[name]]
        vec = proto + noise * rng.standard_normal(proto.shape[0])
        parts[name] = vec / np.linalg.norm(vec)
    return concat(schema, parts)


def build_planted_index(
    rng: np.random.Generator,
    n_speakers: int = 4,
    n_sentences: int = 5,
    n_takes: int = 2,
    sem_dim: int = 8,
    spk_dim: int = 8,
    noise: float = 0.05,
):
    """Small index with all four flip categories populated vs any query.

    n_takes > 1 repeats each (speaker, sentence) reading so the
    same-sentence/same-speaker category is non-empty without self-matches.
    Speakers are split across two corpora.
    """
    schema = AxisSchema([("semantic", sem_dim), ("speaker_id", spk_dim)])
    protos = {
        "semantic": np.stack(
            [v / np.linalg.norm(v) for v in rng.standard_normal((n_sentences, sem_dim))]
        ),
        "speaker_id": np.stack(
            [v / np.linalg.norm(v) for v in rng.standard_normal((n_speakers, spk_dim))]
        ),
    }
    items = []
    for spk in range(n_speakers):
        corpus = "corpusA" if spk < n_speakers // 2 else "corpusB"
        for sen in range(n_sentences):
            for take in range(n_takes):
                emb = planted_embedding(
                    schema,
                    protos,
                    {"semantic": sen, "speaker_id": spk},
                    rng,
                    noise=noise,
                )
                items.append(
                    ItemRecord(
                        id=f"s{spk}t{sen}k{take}",
                        corpus=corpus,
                        labels={
                            "speaker": f"spk{spk}",
                            "sentence": f"sen{sen}",
                        },
                        embedding=emb,
                    )
                )
    return build_index(items), schema, protos


@pytest.fixture
def planted_index(rng):
    index, schema, protos = build_planted_index(rng)
    return index


# ---------------------------------------------------------------------------
# One trained preference-flip setup, shared by eval and acceptance tests.
# Parameters pinned to the planted synthetic protocol: 8 speakers x 25
# sentences, noise 0.1, speaker-block dominance 3x, semantic via distill,
# speaker via supcon.
# ---------------------------------------------------------------------------

FLIP_SYNTH_CONFIG = SynthConfig(
    n_speakers=8,
    n_sentences=25,
    n_dialects=4,
    d_enc=64,
    noise_sigma=0.1,
    mixing="orthogonal",
    seed=11,
    latent_dim=16,
    speaker_scale=3.0,
)


def train_flip_heads(data, sem_steps=800, spk_steps=800):
    features = {data.ids[i]: data.features[i] for i in range(data.n_items)}
    sem_sup = [
        TrainExample(
            feature_id=data.ids[i],
            teachers={"semantic": data.teachers["semantic"][i]},
            labels=data.labels[i],
        )
        for i in range(data.n_items)
    ]
    spk_sup = [
        TrainExample(feature_id=data.ids[i], labels=data.labels[i])
        for i in range(data.n_items)
    ]
    schema = AxisSchema([("semantic", 16), ("speaker_id", 16)])
    sem = train_axis(
        TrainConfig(
            axis="semantic",
            objective="distill",
            axis_dim=16,
            steps=sem_steps,
            learning_rate=0.1,
            batch_size=64,
            seed=5,
        ),
        features,
        sem_sup,
        schema=schema,
    )
    spk = train_axis(
        TrainConfig(
            axis="speaker_id",
            objective="supcon_labels",
            axis_dim=16,
            steps=spk_steps,
            learning_rate=0.1,
            batch_size=64,
            seed=6,
        ),
        features,
        spk_sup,
        schema=schema,
    )
    return schema, sem, spk


def build_flip_index(data, schema, sem, spk):
    items = []
    for i in range(data.n_items):
        emb = concat(
            schema,
            {
                "semantic": project(sem.head, data.features[i]),
                "speaker_id": project(spk.head, data.features[i]),
            },
        )
        items.append(
            ItemRecord(
                id=data.ids[i],
                corpus=data.corpora[i],
                labels=data.labels[i],
                embedding=emb,
            )
        )
    return build_index(items)


WEIGHTS_POSITIVE = QueryWeights({"semantic": 1.0, "speaker_id": 1.0})
WEIGHTS_NEGATIVE = QueryWeights({"semantic": 1.0, "speaker_id": -1.0})

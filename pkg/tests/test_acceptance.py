"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines live.
Every tolerance and runtime budget is pinned here; nothing is deferred to
later calibration.
"""

from __future__ import annotations

import json
import math
import sys
import time
from contextlib import contextmanager

import numpy as np

from faxis.core import (
    AxisSchema,
    QueryWeights,
    concat,
    weighted_similarity,
)
from faxis.evaluation import (
    EvalQuery,
    FlipCategory,
    QuerySet,
    format_percent,
    metric_ceiling,
    preference_flip_report,
    report_render,
)
from faxis.index import ItemRecord, build_index, query, rank_of
from faxis.io import generate_synthetic
from faxis.train import (
    TrainConfig,
    TrainExample,
    _distill_loss_grad,
    _infonce_loss_grad,
    _supcon_loss_grad,
    finite_difference_check,
    orthogonality_penalty,
    project,
    train_axis,
)

from conftest import (
    FLIP_SYNTH_CONFIG,
    WEIGHTS_NEGATIVE,
    WEIGHTS_POSITIVE,
    build_flip_index,
    train_flip_heads,
    random_embedding,
)
from test_cli import run_pipeline


@contextmanager
def criterion(number: int, name: str, budget_seconds: float):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {number}. {name}: FAIL", file=sys.stderr)
        raise
    elapsed = time.monotonic() - start
    status = "PASS" if elapsed < budget_seconds else "FAIL (over budget)"
    print(
        f"[ACCEPTANCE] {number}. {name}: {status} ({elapsed:.2f}s / {budget_seconds:.0f}s budget)",
        file=sys.stderr,
    )
    assert elapsed < budget_seconds, f"runtime {elapsed:.2f}s exceeds {budget_seconds}s"


def test_criterion_1_similarity_correctness():
    """1,000 random pairs over the stock schema: independent recomputation
    agrees to 1e-12 and the weight-mass bound holds."""
    with criterion(1, "similarity correctness", 1.0):
        schema = AxisSchema.default()  # semantic 384 / speaker_id 256 / dialect 12
        rng = np.random.default_rng(101)
        w = QueryWeights({"semantic": 1.0, "speaker_id": -1.0, "dialect": 0.25})
        bound = w.abs_sum()
        resolved = dict(zip(schema.names, w.resolve(schema)))
        for _ in range(1000):
            a = random_embedding(schema, rng)
            b = random_embedding(schema, rng)
            got = weighted_similarity(a, b, w)
            # independent path: elementwise product + pairwise sum per axis,
            # then an exact compensated sum over axes
            expected = math.fsum(
                resolved[axis] * float(np.sum(a.data[sl] * b.data[sl]))
                for axis, sl in schema.slices()
            )
            assert abs(got - expected) <= 1e-12
            assert abs(got) <= bound


def test_criterion_2_gradient_oracle():
    """Analytic gradients match central differences to 1e-4 over 100 coords."""
    with criterion(2, "gradient oracle", 10.0):
        rng = np.random.default_rng(202)

        d_s, d_t = 8, 12
        teacher = rng.standard_normal(d_t)

        def distill_fn(flat):
            student = flat[:d_s]
            matrix = flat[d_s:].reshape(d_s, d_t)
            loss, g_s, g_m = _distill_loss_grad(student, teacher, matrix)
            return loss, np.concatenate([g_s, g_m.ravel()])

        start = np.concatenate(
            [rng.standard_normal(d_s), rng.standard_normal((d_s, d_t)).ravel()]
        )
        assert finite_difference_check(distill_fn, start, 1e-5, rng=rng) <= 1e-4

        n, d = 4, 6

        def infonce_fn(flat):
            both = flat.reshape(2 * n, d)
            loss, g_a, g_p = _infonce_loss_grad(both[:n], both[n:], 0.07)
            return loss, np.concatenate([g_a, g_p]).reshape(flat.shape)

        assert (
            finite_difference_check(
                infonce_fn, rng.standard_normal((2 * n, d)), 1e-5, rng=rng
            )
            <= 1e-4
        )

        labels = ["a", "a", "b", "b", "c", "c"]

        def supcon_fn(flat):
            loss, grad = _supcon_loss_grad(flat.reshape(6, 5), labels, 0.07)
            return loss, grad.reshape(flat.shape)

        assert (
            finite_difference_check(
                supcon_fn, rng.standard_normal((6, 5)), 1e-5, rng=rng
            )
            <= 1e-4
        )


def _distill_recovery_case(teacher_dim: int, axis_dim: int, steps: int, seed: int):
    # 500 items total; the last 100 never enter training at all, so the
    # reported cosine is measured on genuinely unseen data
    rng = np.random.default_rng(303 + teacher_dim)
    n, n_train, d_enc = 500, 400, 64
    feats_matrix = rng.standard_normal((n, d_enc))
    q, r = np.linalg.qr(rng.standard_normal((d_enc, teacher_dim)))
    transform = (q * np.sign(np.diag(r))).T  # orthonormal rows
    teachers = feats_matrix @ transform.T
    features = {f"it{i:04d}": feats_matrix[i] for i in range(n_train)}
    supervision = [
        TrainExample(feature_id=f"it{i:04d}", teachers={"semantic": teachers[i]})
        for i in range(n_train)
    ]
    config = TrainConfig(
        axis="semantic",
        objective="distill",
        axis_dim=axis_dim,
        steps=steps,
        learning_rate=0.1,
        batch_size=64,
        seed=seed,
    )
    result = train_axis(config, features, supervision)
    held_out = slice(n_train, None)
    u = feats_matrix[held_out] @ result.head.weight.T
    if result.head.bias is not None:
        u = u + result.head.bias
    student = u / np.linalg.norm(u, axis=1, keepdims=True)
    t = teachers[held_out]
    if result.alignment is not None:
        t = t @ result.alignment.matrix.T
    t = t / np.linalg.norm(t, axis=1, keepdims=True)
    mean_cos = float(np.mean(np.sum(student * t, axis=1)))
    fro = (
        float(np.sqrt(orthogonality_penalty(result.alignment)))
        if result.alignment is not None
        else None
    )
    return result, mean_cos, fro


def test_criterion_3_distillation_recovery():
    """Zero-noise orthogonal-teacher recovery within 5,000 steps."""
    with criterion(3, "distillation recovery", 60.0):
        result, mean_cos, fro = _distill_recovery_case(
            teacher_dim=32, axis_dim=32, steps=1500, seed=31
        )
        assert result.alignment is None
        assert mean_cos >= 0.99

        result, mean_cos, fro = _distill_recovery_case(
            teacher_dim=48, axis_dim=32, steps=2500, seed=32
        )
        assert result.alignment is not None
        assert mean_cos >= 0.99
        assert fro is not None and fro <= 0.05


def test_criterion_4_preference_flip():
    """Planted 8x25 data: speaker-weight sign flip moves category mean ranks
    in the reported direction and P@1 under the negative setting >= 0.5."""
    with criterion(4, "preference flip", 180.0):
        data = generate_synthetic(FLIP_SYNTH_CONFIG)
        schema, sem, spk = train_flip_heads(data)
        index = build_flip_index(data, schema, sem, spk)
        queryset = QuerySet.from_index(index, corpus="synthA")
        report = preference_flip_report(
            queryset, index, [WEIGHTS_POSITIVE, WEIGHTS_NEGATIVE]
        )
        positive, negative = report.settings
        assert (
            negative.mean_ranks[FlipCategory.DS_SAME_SPK]
            > positive.mean_ranks[FlipCategory.DS_SAME_SPK]
        )
        assert (
            negative.mean_ranks[FlipCategory.SS_DIFF_SPK]
            < positive.mean_ranks[FlipCategory.SS_DIFF_SPK]
        )
        assert negative.p_at[1] >= 0.5
        print(
            "[ACCEPTANCE]    flip detail: ds_same "
            f"{positive.mean_ranks[FlipCategory.DS_SAME_SPK]:.1f} -> "
            f"{negative.mean_ranks[FlipCategory.DS_SAME_SPK]:.1f}, ss_diff "
            f"{positive.mean_ranks[FlipCategory.SS_DIFF_SPK]:.1f} -> "
            f"{negative.mean_ranks[FlipCategory.SS_DIFF_SPK]:.1f}, "
            f"negative P@1 {negative.p_at[1]:.3f}",
            file=sys.stderr,
        )


def _ceiling_queryset(n_queries: int, n_retrievable: int):
    schema = AxisSchema([("semantic", 2)])
    items = [
        ItemRecord(
            id=f"target{i:03d}",
            corpus="other",
            labels={"sentence": f"sen{i:03d}", "speaker": "sX"},
            embedding=concat(schema, [[1.0, 0.0]]),
        )
        for i in range(n_retrievable)
    ]
    items.append(
        ItemRecord(
            id="filler",
            corpus="query-side",
            labels={"sentence": "senFILL", "speaker": "sY"},
            embedding=concat(schema, [[0.0, 1.0]]),
        )
    )
    index = build_index(items)
    queries = [
        EvalQuery(
            item_id=f"q{i:03d}",
            corpus="query-side",
            labels={"sentence": f"sen{i:03d}", "speaker": "sQ"},
            embedding=concat(schema, [[1.0, 0.0]]),
        )
        for i in range(n_queries)
    ]
    return QuerySet(queries), index


def test_criterion_5_ceiling_arithmetic():
    """17/172 renders as 9.9% and two-thirds coverage renders as 66.7%."""
    with criterion(5, "ceiling arithmetic", 10.0):
        queryset, index = _ceiling_queryset(172, 17)
        ceiling = metric_ceiling(queryset, index)
        assert ceiling == 17 / 172
        assert format_percent(ceiling) == "9.9"
        report = preference_flip_report(
            queryset, index, [QueryWeights({"semantic": 1.0})]
        )
        assert f"ceiling {format_percent(report.ceiling)}%" in report_render(report)
        assert "9.9%" in report_render(report)

        queryset, index = _ceiling_queryset(3, 2)
        two_thirds = metric_ceiling(queryset, index)
        assert two_thirds == 2 / 3
        assert format_percent(two_thirds) == "66.7"


def test_criterion_6_ranking_oracle():
    """100 random indexes (<= 200 items): query order equals the brute-force
    sort and rank_of agrees for every item."""
    with criterion(6, "ranking oracle", 30.0):
        rng = np.random.default_rng(606)
        for trial in range(100):
            n_axes = int(rng.integers(1, 5))
            schema = AxisSchema(
                [(f"ax{i}", int(rng.integers(2, 9))) for i in range(n_axes)]
            )
            n_items = int(rng.integers(5, 201))
            items = [
                ItemRecord(
                    id=f"it{i:03d}",
                    corpus="c",
                    labels={},
                    embedding=random_embedding(schema, rng),
                )
                for i in range(n_items)
            ]
            index = build_index(items)
            q = random_embedding(schema, rng)
            w = QueryWeights(
                {
                    name: float(rng.uniform(-2, 2))
                    for name in schema.names
                    if rng.random() > 0.2
                }
                or {schema.names[0]: 1.0}
            )
            # independent oracle: score via core.weighted_similarity, sort
            oracle = sorted(
                (
                    (-weighted_similarity(q, item.embedding, w), item.id)
                    for item in items
                ),
            )
            oracle_ids = [item_id for _, item_id in oracle]
            hits = query(index, q, w, k=n_items)
            assert [h.item_id for h in hits] == oracle_ids
            for expected_rank, item_id in enumerate(oracle_ids, start=1):
                assert rank_of(index, q, w, item_id) == expected_rank


def _variance_ordered_rotation(rows: np.ndarray, keep: int) -> np.ndarray:
    """PCA-style map: center, rotate onto variance-ordered axes, truncate."""
    centered = rows - rows.mean(axis=0)
    cov = centered.T @ centered / max(1, rows.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    return eigvecs[:, order[:keep]]


def test_criterion_7_rotation_asymmetry_probe():
    """Diagnostic: report |delta| between positive- and negative-weight
    mean-rank symmetry for direct vs variance-ordered (PCA-style) speaker
    targets.  No threshold asserted."""
    with criterion(7, "rotation asymmetry probe", 120.0):
        data = generate_synthetic(FLIP_SYNTH_CONFIG)
        features = {data.ids[i]: data.features[i] for i in range(data.n_items)}

        # eight centered prototypes span at most seven directions, so keeping
        # four makes the rotation genuinely lossy, as a PCA reduction would be
        spk_teachers = data.teachers["speaker_id"]
        basis = _variance_ordered_rotation(spk_teachers, keep=4)
        pca_teachers = (spk_teachers - spk_teachers.mean(axis=0)) @ basis

        def speaker_head(teachers, axis_dim, seed):
            supervision = [
                TrainExample(
                    feature_id=data.ids[i],
                    teachers={"speaker_id": teachers[i]},
                    labels=data.labels[i],
                )
                for i in range(data.n_items)
            ]
            return train_axis(
                TrainConfig(
                    axis="speaker_id",
                    objective="distill",
                    axis_dim=axis_dim,
                    steps=800,
                    learning_rate=0.1,
                    batch_size=64,
                    seed=seed,
                ),
                features,
                supervision,
            )

        sem_sup = [
            TrainExample(
                feature_id=data.ids[i],
                teachers={"semantic": data.teachers["semantic"][i]},
                labels=data.labels[i],
            )
            for i in range(data.n_items)
        ]
        sem = train_axis(
            TrainConfig(
                axis="semantic",
                objective="distill",
                axis_dim=16,
                steps=800,
                learning_rate=0.1,
                batch_size=64,
                seed=71,
            ),
            features,
            sem_sup,
        )

        def symmetry_probe(spk_result, spk_dim):
            """|delta| from perfect rank reversal for the same-speaker
            category, plus negative-setting precision, per speaker variant."""
            schema = AxisSchema([("semantic", 16), ("speaker_id", spk_dim)])
            items = []
            for i in range(data.n_items):
                emb = concat(
                    schema,
                    {
                        "semantic": project(sem.head, data.features[i]),
                        "speaker_id": project(spk_result.head, data.features[i]),
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
            index = build_index(items)
            queryset = QuerySet.from_index(index, corpus="synthA")
            report = preference_flip_report(
                queryset, index, [WEIGHTS_POSITIVE, WEIGHTS_NEGATIVE]
            )
            positive, negative = report.settings
            n_ranked = len(index) - 1  # self excluded
            r_pos = positive.mean_ranks[FlipCategory.DS_SAME_SPK]
            r_neg = negative.mean_ranks[FlipCategory.DS_SAME_SPK]
            return {
                "delta_ds_same": abs(r_pos + r_neg - (n_ranked + 1)),
                "neg_p_at_1": negative.p_at[1],
                "neg_p_at_10": negative.p_at[10],
            }

        direct = symmetry_probe(speaker_head(spk_teachers, 16, seed=72), 16)
        rotated = symmetry_probe(speaker_head(pca_teachers, 4, seed=73), 4)
        print(
            "[ACCEPTANCE]    rotation probe: direct targets "
            f"|delta|={direct['delta_ds_same']:.1f} "
            f"(neg P@1 {direct['neg_p_at_1']:.2f}, P@10 {direct['neg_p_at_10']:.2f}); "
            "variance-ordered targets "
            f"|delta|={rotated['delta_ds_same']:.1f} "
            f"(neg P@1 {rotated['neg_p_at_1']:.2f}, P@10 {rotated['neg_p_at_10']:.2f})",
            file=sys.stderr,
        )
        for probe in (direct, rotated):
            assert np.isfinite(probe["delta_ds_same"])


def test_criterion_8_pipeline_determinism(tmp_path):
    """Two identical CLI pipeline runs produce byte-identical report JSON."""
    with criterion(8, "pipeline determinism", 120.0):
        report_a = run_pipeline(tmp_path / "runA", seed=29, steps=120)
        report_b = run_pipeline(tmp_path / "runB", seed=29, steps=120)
        assert report_a.read_bytes() == report_b.read_bytes()
        payload = json.loads(report_a.read_text())
        assert payload["meta"]["seed"] == 29
        assert payload["meta"]["config_hash"]

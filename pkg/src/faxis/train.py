"""Per-axis projection-head training over frozen pooled features.

Three signal sources are supported, mirroring how each axis gets its
supervision:

* ``distill``        -- cosine loss against a precomputed teacher embedding,
                        through a learned near-orthogonal alignment matrix
                        when teacher and head dimensions differ;
* ``infonce_pairs``  -- explicit positive pairs contrasted against in-batch
                        negatives (one-directional InfoNCE);
* ``supcon_labels``  -- in-batch label matching (supervised contrastive).

All losses are written twice: a value function and an analytic gradient,
with a central-difference checker to keep the two honest.  Arithmetic is
f64; checkpoints store f32.  Everything is deterministic given the config
seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import AxisSchema, ZERO_NORM_FLOOR, l2_normalize
from .errors import (
    BadMagic,
    BatchTooSmall,
    ConfigInvalid,
    DegenerateHead,
    DimMismatch,
    NonFinite,
    NonFiniteLoss,
    NoPositives,
    TruncatedFile,
    ZeroVector,
)
from .io import DEFAULT_AXIS_LABEL_KEYS

OBJECTIVES = ("distill", "infonce_pairs", "supcon_labels")

HEAD_MAGIC = b"FPHD"
HEAD_VERSION = 1


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PooledFeature:
    """One precomputed encoder pooled vector."""

    id: str
    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if not np.all(np.isfinite(vec)):
            raise NonFinite(f"feature {self.id!r} contains non-finite values")
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class ProjectionHead:
    """Per-axis linear map from pooled-feature space to the axis subspace."""

    axis: str
    weight: np.ndarray  # (d_axis, d_enc)
    bias: np.ndarray | None = None  # (d_axis,)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        if w.ndim != 2:
            raise DimMismatch(f"head weight must be 2-D, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise NonFinite(f"head {self.axis!r} has non-finite weights")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float64)
            if b.shape != (w.shape[0],):
                raise DimMismatch(
                    f"bias shape {b.shape} does not match output dim {w.shape[0]}"
                )
            if not np.all(np.isfinite(b)):
                raise NonFinite(f"head {self.axis!r} has non-finite bias")
            b = b.copy()
            b.setflags(write=False)
            object.__setattr__(self, "bias", b)

    @property
    def d_axis(self) -> int:
        return self.weight.shape[0]

    @property
    def d_enc(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class AlignmentMatrix:
    """Near-orthogonal map from teacher space into the axis subspace."""

    matrix: np.ndarray  # (d_axis, d_teacher)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise DimMismatch(f"alignment matrix must be 2-D, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonFinite("alignment matrix has non-finite entries")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def d_axis(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_teacher(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class TrainExample:
    """Supervision attached to one feature id.

    ``teachers`` maps axis name to a teacher embedding, ``labels`` maps
    label field to value, ``positive_id`` names an explicit positive
    partner.  At least one source must cover the axis being trained.
    """

    feature_id: str
    teachers: Mapping[str, np.ndarray] = field(default_factory=dict)
    labels: Mapping[str, str] = field(default_factory=dict)
    positive_id: str | None = None


@dataclass(frozen=True)
class TrainConfig:
    axis: str
    objective: str
    axis_dim: int
    steps: int
    temperature: float = 0.07
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    orthogonality_lambda: float = 1.0
    momentum: float = 0.9
    use_bias: bool = True
    holdout_fraction: float = 0.1

    def validate(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ConfigInvalid(
                f"unknown objective {self.objective!r}; expected one of {OBJECTIVES}"
            )
        if self.temperature <= 0:
            raise ConfigInvalid("temperature must be > 0")
        if self.learning_rate <= 0:
            raise ConfigInvalid("learning_rate must be > 0")
        if self.axis_dim < 1:
            raise ConfigInvalid("axis_dim must be >= 1")
        if self.steps < 0:
            raise ConfigInvalid("steps must be >= 0")
        if self.batch_size < 1:
            raise ConfigInvalid("batch_size must be >= 1")
        if self.objective != "distill" and self.batch_size < 2:
            raise ConfigInvalid("contrastive objectives need batch_size >= 2")
        if self.orthogonality_lambda < 0:
            raise ConfigInvalid("orthogonality_lambda must be >= 0")
        if not 0 <= self.holdout_fraction < 1:
            raise ConfigInvalid("holdout_fraction must be in [0, 1)")


@dataclass
class TrainLogEntry:
    step: int
    loss: float
    penalty: float
    grad_norm: float


@dataclass
class TrainLog:
    entries: list[TrainLogEntry]
    val_loss_initial: float | None
    val_loss_final: float | None


@dataclass
class TrainResult:
    head: ProjectionHead
    alignment: AlignmentMatrix | None
    log: TrainLog


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------


def project(head: ProjectionHead, x: PooledFeature | np.ndarray) -> np.ndarray:
    """Apply a head to one pooled feature: l2_normalize(Wx + b)."""
    item_id = x.id if isinstance(x, PooledFeature) else None
    vec = x.vector if isinstance(x, PooledFeature) else np.asarray(x, dtype=np.float64)
    if vec.shape != (head.d_enc,):
        raise DimMismatch(
            f"feature dim {vec.shape} does not match head d_enc {head.d_enc}"
        )
    u = head.weight @ vec
    if head.bias is not None:
        u = u + head.bias
    try:
        return l2_normalize(u)
    except ZeroVector as exc:
        raise DegenerateHead(
            f"head {head.axis!r} produced a near-zero projection"
            + (f" for item {item_id!r}" if item_id else ""),
            item_id=item_id,
        ) from exc


def _project_batch(
    weight: np.ndarray, bias: np.ndarray | None, feats: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched projection; returns (unit rows, pre-norm rows, norms)."""
    u = feats @ weight.T
    if bias is not None:
        u = u + bias
    norms = np.linalg.norm(u, axis=1)
    if not np.all(np.isfinite(norms)):
        raise DegenerateHead("projection overflowed; weights diverged", item_id=None)
    if np.any(norms < ZERO_NORM_FLOOR):
        bad = int(np.argmin(norms))
        raise DegenerateHead(
            f"projection collapsed to zero for batch row {bad}", item_id=None
        )
    return u / norms[:, None], u, norms


def _unit_rows_grad(
    raw: np.ndarray, unit: np.ndarray, norms: np.ndarray, g_unit: np.ndarray
) -> np.ndarray:
    """Backprop through per-row l2 normalization."""
    inner = np.sum(unit * g_unit, axis=1, keepdims=True)
    return (g_unit - unit * inner) / norms[:, None]


# ---------------------------------------------------------------------------
# Losses and analytic gradients
# ---------------------------------------------------------------------------


def _as_unit(v: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray, float]:
    arr = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm < ZERO_NORM_FLOOR:
        raise ZeroVector(f"{what} has near-zero norm")
    return arr / norm, arr, norm


def distill_loss(
    student: np.ndarray,
    teacher: np.ndarray,
    alignment: AlignmentMatrix | np.ndarray | None = None,
) -> float:
    """1 - cos(student, aligned teacher); 0 iff perfectly aligned."""
    return _distill_loss_grad(student, teacher, alignment)[0]


def _distill_loss_grad(
    student: np.ndarray,
    teacher: np.ndarray,
    alignment: AlignmentMatrix | np.ndarray | None = None,
) -> tuple[float, np.ndarray, np.ndarray | None]:
    """Loss plus gradients w.r.t. the raw student and the alignment matrix."""
    s_hat, s_raw, s_norm = _as_unit(student, "student")
    teacher = np.asarray(teacher, dtype=np.float64)
    a = None
    if alignment is not None:
        a = (
            alignment.matrix
            if isinstance(alignment, AlignmentMatrix)
            else np.asarray(alignment, dtype=np.float64)
        )
        if a.shape[1] != teacher.shape[0]:
            raise DimMismatch(
                f"alignment maps teacher dim {a.shape[1]}, teacher has {teacher.shape[0]}"
            )
        if a.shape[0] != s_raw.shape[0]:
            raise DimMismatch(
                f"alignment outputs dim {a.shape[0]}, student has {s_raw.shape[0]}"
            )
        aligned = a @ teacher
    else:
        if teacher.shape[0] != s_raw.shape[0]:
            raise DimMismatch(
                f"teacher dim {teacher.shape[0]} != student dim {s_raw.shape[0]}; "
                "an alignment matrix is required when dims differ"
            )
        aligned = teacher
    t_hat, _, t_norm = _as_unit(aligned, "aligned teacher")
    cos = float(np.dot(s_hat, t_hat))
    loss = 1.0 - cos
    g_student = -(t_hat - cos * s_hat) / s_norm
    g_alignment = None
    if a is not None:
        g_aligned = -(s_hat - cos * t_hat) / t_norm
        g_alignment = np.outer(g_aligned, teacher)
    return loss, g_student, g_alignment


def orthogonality_penalty(alignment: AlignmentMatrix | np.ndarray) -> float:
    """Squared Frobenius distance of the smaller-side Gram matrix from identity."""
    return _orthogonality_penalty_grad(alignment)[0]


def _orthogonality_penalty_grad(
    alignment: AlignmentMatrix | np.ndarray,
) -> tuple[float, np.ndarray]:
    a = (
        alignment.matrix
        if isinstance(alignment, AlignmentMatrix)
        else np.asarray(alignment, dtype=np.float64)
    )
    rows, cols = a.shape
    if rows <= cols:
        gram = a @ a.T
        delta = gram - np.eye(rows)
        grad = 4.0 * delta @ a
    else:
        gram = a.T @ a
        delta = gram - np.eye(cols)
        grad = 4.0 * a @ delta
    return float(np.sum(delta * delta)), grad


def cosine_logits(
    anchors: np.ndarray, positives: np.ndarray, temperature: float
) -> np.ndarray:
    """Temperature-scaled cosine matrix between two row sets.

    Doubling the temperature is bit-identical to halving the logits, which
    keeps temperature sweeps interpretable.
    """
    a = np.asarray(anchors, dtype=np.float64)
    p = np.asarray(positives, dtype=np.float64)
    a_unit = a / np.linalg.norm(a, axis=1, keepdims=True)
    p_unit = p / np.linalg.norm(p, axis=1, keepdims=True)
    return (a_unit @ p_unit.T) / temperature


def _logsumexp_rows(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise logsumexp and softmax, numerically stable."""
    shift = np.max(logits, axis=1, keepdims=True)
    exp = np.exp(logits - shift)
    total = np.sum(exp, axis=1, keepdims=True)
    return (np.log(total) + shift)[:, 0], exp / total


def infonce_loss(
    anchors: np.ndarray,
    positives: np.ndarray,
    temperature: float,
    strict: bool = False,
) -> float:
    """One-directional InfoNCE: row i of positives is anchor i's positive.

    All other positives in the batch act as negatives.  With a single pair
    there are no negatives and the loss is identically zero; strict mode
    raises BatchTooSmall instead of returning that degenerate value.
    """
    return _infonce_loss_grad(anchors, positives, temperature, strict=strict)[0]


def _infonce_loss_grad(
    anchors: np.ndarray,
    positives: np.ndarray,
    temperature: float,
    strict: bool = False,
) -> tuple[float, np.ndarray, np.ndarray]:
    a = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    p = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    if a.shape != p.shape:
        raise DimMismatch(f"anchors {a.shape} and positives {p.shape} disagree")
    n = a.shape[0]
    if n < 1:
        raise BatchTooSmall("InfoNCE needs at least one |anchor, positive| pair")
    if n == 1 and strict:
        raise BatchTooSmall("single-pair batch has no negatives (strict mode)")
    a_norms = np.linalg.norm(a, axis=1)
    p_norms = np.linalg.norm(p, axis=1)
    if np.any(a_norms < ZERO_NORM_FLOOR) or np.any(p_norms < ZERO_NORM_FLOOR):
        raise ZeroVector("InfoNCE inputs must be non-zero")
    a_unit = a / a_norms[:, None]
    p_unit = p / p_norms[:, None]
    logits = (a_unit @ p_unit.T) / temperature
    lse, softmax = _logsumexp_rows(logits)
    loss = float(np.mean(lse - np.diag(logits)))
    g_logits = (softmax - np.eye(n)) / n
    g_sim = g_logits / temperature
    g_a_unit = g_sim @ p_unit
    g_p_unit = g_sim.T @ a_unit
    g_a = _unit_rows_grad(a, a_unit, a_norms, g_a_unit)
    g_p = _unit_rows_grad(p, p_unit, p_norms, g_p_unit)
    return loss, g_a, g_p


def supcon_loss(
    embeddings: np.ndarray, labels: Sequence[str], temperature: float
) -> float:
    """Supervised contrastive loss with in-batch label matching.

    Every same-label partner of an anchor is a positive; anchors with no
    partner are skipped.  Raises NoPositives when no anchor has any.
    """
    return _supcon_loss_grad(embeddings, labels, temperature)[0]


def _supcon_loss_grad(
    embeddings: np.ndarray, labels: Sequence[str], temperature: float
) -> tuple[float, np.ndarray]:
    z = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    n = z.shape[0]
    if n < 2:
        raise BatchTooSmall("supervised contrastive loss needs a batch of >= 2")
    if len(labels) != n:
        raise DimMismatch(f"{n} embeddings but {len(labels)} labels")
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms < ZERO_NORM_FLOOR):
        raise ZeroVector("supcon inputs must be non-zero")
    unit = z / norms[:, None]
    labels = list(labels)
    pos_mask = np.array(
        [[i != j and labels[i] == labels[j] for j in range(n)] for i in range(n)]
    )
    valid = pos_mask.any(axis=1)
    if not valid.any():
        raise NoPositives("every anchor's positive set is empty")
    logits = (unit @ unit.T) / temperature
    off_diag = ~np.eye(n, dtype=bool)

    n_valid = int(valid.sum())
    total = 0.0
    g_logits = np.zeros((n, n))
    for i in range(n):
        if not valid[i]:
            continue
        cols = off_diag[i]
        row = logits[i, cols]
        shift = row.max()
        exp_row = np.exp(row - shift)
        lse = float(np.log(exp_row.sum()) + shift)
        softmax = exp_row / exp_row.sum()
        p_count = int(pos_mask[i].sum())
        pos_logits = logits[i, pos_mask[i]]
        total += float(lse - pos_logits.mean())
        g_row = softmax.copy()
        g_row -= pos_mask[i][cols] / p_count
        g_logits[i, cols] = g_row / n_valid
    loss = total / n_valid
    g_sim = g_logits / temperature
    g_unit = (g_sim + g_sim.T) @ unit
    g_z = _unit_rows_grad(z, unit, norms, g_unit)
    return loss, g_z


def finite_difference_check(
    loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    params: np.ndarray,
    epsilon: float,
    n_coords: int = 100,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(params)`` must return (loss, gradient).  A random subset of
    up to ``n_coords`` coordinates is probed; the relative error uses an
    absolute floor so near-zero gradient coordinates do not amplify noise.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ConfigInvalid("epsilon should be in [1e-7, 1e-3]")
    rng = rng or np.random.default_rng(0)
    params = np.asarray(params, dtype=np.float64)
    _, grad = loss_fn(params)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise DimMismatch(
            f"gradient shape {grad.shape} does not match params {params.shape}"
        )
    flat = params.ravel()
    size = flat.size
    coords = (
        np.arange(size)
        if size <= n_coords
        else np.sort(rng.choice(size, size=n_coords, replace=False))
    )
    worst = 0.0
    for c in coords:
        bumped = flat.copy()
        bumped[c] += epsilon
        hi, _ = loss_fn(bumped.reshape(params.shape))
        bumped[c] -= 2 * epsilon
        lo, _ = loss_fn(bumped.reshape(params.shape))
        numeric = (hi - lo) / (2 * epsilon)
        analytic = float(grad.ravel()[c])
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-3)
        worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# Batch sampling
# ---------------------------------------------------------------------------


def sample_batch(
    dataset: Sequence[TrainExample],
    schema: AxisSchema,
    trained_axis: str,
    batch_size: int,
    rng: np.random.Generator,
    retries: int = 10,
    axis_label_keys: Mapping[str, str] | None = None,
) -> list[TrainExample]:
    """Greedy collision-aware batch sampling.

    Candidates are drawn uniformly without replacement; one that shares any
    non-trained-axis label with an already-selected member is redrawn, up
    to ``retries`` times, after which it is accepted anyway.  Degrades to
    uniform sampling when collisions are unavoidable.
    """
    if not dataset:
        raise ConfigInvalid("cannot sample from an empty dataset")
    keys = dict(DEFAULT_AXIS_LABEL_KEYS)
    if axis_label_keys:
        keys.update(axis_label_keys)
    avoid = [
        keys.get(axis, axis)
        for axis in schema.names
        if axis != trained_axis
    ]

    def collides(candidate: TrainExample, chosen: list[TrainExample]) -> bool:
        for key in avoid:
            value = candidate.labels.get(key)
            if value is None:
                continue
            for member in chosen:
                if member.labels.get(key) == value:
                    return True
        return False

    available = list(range(len(dataset)))
    selected: list[TrainExample] = []
    while available and len(selected) < batch_size:
        pick = None
        for attempt in range(retries + 1):
            idx = available[int(rng.integers(len(available)))]
            if attempt == retries or not collides(dataset[idx], selected):
                pick = idx
                break
        assert pick is not None
        available.remove(pick)
        selected.append(dataset[pick])
    return selected


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _substream(seed: int, name: str) -> np.random.Generator:
    """Named deterministic child stream of one integer seed."""
    import hashlib

    digest = hashlib.sha256(name.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed & (2**63 - 1), tag]))


def _random_semi_orthogonal(
    rows: int, cols: int, rng: np.random.Generator
) -> np.ndarray:
    """Random matrix with orthonormal rows (rows <= cols) or columns."""
    transpose = rows > cols
    big, small = (rows, cols) if transpose else (cols, rows)
    gauss = rng.standard_normal((big, small))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))
    return q.T if not transpose else q


class _Trainer:
    """Internal state for one train_axis run."""

    def __init__(
        self,
        config: TrainConfig,
        features: Mapping[str, np.ndarray],
        supervision: Sequence[TrainExample],
    ):
        config.validate()
        self.config = config
        if not features:
            raise ConfigInvalid("no features supplied")
        ids = list(features.keys())
        first = np.asarray(features[ids[0]], dtype=np.float64)
        self.d_enc = first.shape[0]
        mat = np.zeros((len(ids), self.d_enc))
        for i, fid in enumerate(ids):
            vec = np.asarray(features[fid], dtype=np.float64)
            if vec.shape != (self.d_enc,):
                raise DimMismatch(
                    f"feature {fid!r} has dim {vec.shape}, expected ({self.d_enc},)"
                )
            mat[i] = vec
        self.feature_ids = ids
        self.feature_pos = {fid: i for i, fid in enumerate(ids)}
        self.features = mat
        self.examples = self._check_supervision(supervision)
        self.label_key = DEFAULT_AXIS_LABEL_KEYS.get(config.axis, config.axis)

    def _check_supervision(
        self, supervision: Sequence[TrainExample]
    ) -> list[TrainExample]:
        cfg = self.config
        if not supervision:
            raise ConfigInvalid("no supervision supplied")
        label_key = DEFAULT_AXIS_LABEL_KEYS.get(cfg.axis, cfg.axis)
        out = []
        for ex in supervision:
            if ex.feature_id not in self.feature_pos:
                raise ConfigInvalid(
                    f"example {ex.feature_id!r} has no matching feature"
                )
            if cfg.objective == "distill" and cfg.axis not in ex.teachers:
                raise ConfigInvalid(
                    f"distill training needs a teacher for axis {cfg.axis!r} "
                    f"(missing on {ex.feature_id!r})"
                )
            if cfg.objective == "supcon_labels" and label_key not in ex.labels:
                raise ConfigInvalid(
                    f"supcon training needs label {label_key!r} "
                    f"(missing on {ex.feature_id!r})"
                )
            if cfg.objective == "infonce_pairs":
                if ex.positive_id is None:
                    raise ConfigInvalid(
                        f"infonce training needs positive_id (missing on {ex.feature_id!r})"
                    )
                if ex.positive_id not in self.feature_pos:
                    raise ConfigInvalid(
                        f"positive partner {ex.positive_id!r} has no matching feature"
                    )
            out.append(ex)
        return out

    def teacher_matrix(self, examples: Sequence[TrainExample]) -> np.ndarray:
        rows = [np.asarray(ex.teachers[self.config.axis], dtype=np.float64) for ex in examples]
        dims = {r.shape for r in rows}
        if len(dims) != 1:
            raise DimMismatch(f"inconsistent teacher dims: {sorted(dims)}")
        return np.stack(rows)

    def batch_features(self, examples: Sequence[TrainExample]) -> np.ndarray:
        return self.features[[self.feature_pos[ex.feature_id] for ex in examples]]


def train_axis(
    config: TrainConfig,
    features: Mapping[str, np.ndarray],
    supervision: Sequence[TrainExample],
    schema: AxisSchema | None = None,
) -> TrainResult:
    """Mini-batch gradient descent (with momentum) on the selected objective.

    Returns the trained head, the alignment matrix when one was needed, and
    a per-step loss log.  Bit-reproducible for a fixed seed.  When an
    alignment matrix is trained, its soft orthogonality penalty is followed
    by a final polar projection onto the nearest semi-orthogonal matrix.
    """
    trainer = _Trainer(config, features, supervision)
    cfg = config
    rng_init = _substream(cfg.seed, "init")
    rng_sampler = _substream(cfg.seed, "sampler")
    rng_holdout = _substream(cfg.seed, "holdout")

    bound = 1.0 / np.sqrt(trainer.d_enc)
    weight = rng_init.uniform(-bound, bound, size=(cfg.axis_dim, trainer.d_enc))
    bias = np.zeros(cfg.axis_dim) if cfg.use_bias else None

    alignment: np.ndarray | None = None
    teacher_dim = None
    if cfg.objective == "distill":
        teacher_dim = trainer.teacher_matrix(trainer.examples[:1]).shape[1]
        if teacher_dim != cfg.axis_dim:
            alignment = _random_semi_orthogonal(cfg.axis_dim, teacher_dim, rng_init)

    n = len(trainer.examples)
    order = rng_holdout.permutation(n)
    n_val = int(round(cfg.holdout_fraction * n))
    if cfg.holdout_fraction > 0 and n >= 2:
        n_val = max(1, min(n_val, n - 1))
    else:
        n_val = 0
    val_examples = [trainer.examples[i] for i in order[:n_val]]
    train_examples = [trainer.examples[i] for i in order[n_val:]]
    if not train_examples:
        train_examples = list(trainer.examples)
    check_examples = val_examples if val_examples else train_examples[: cfg.batch_size]

    axis_schema = schema or AxisSchema([(cfg.axis, cfg.axis_dim)])

    def degenerate_fraction(w: np.ndarray, b: np.ndarray | None) -> float:
        feats = trainer.batch_features(check_examples)
        u = feats @ w.T
        if b is not None:
            u = u + b
        norms = np.linalg.norm(u, axis=1)
        return float(np.mean(norms < ZERO_NORM_FLOOR))

    if degenerate_fraction(weight, bias) > 0.5:
        raise DegenerateHead(
            "more than half of the validation batch projects to zero at init"
        )

    def batch_loss_and_grads(
        w: np.ndarray,
        b: np.ndarray | None,
        a: np.ndarray | None,
        examples: Sequence[TrainExample],
        want_grads: bool,
    ) -> tuple[float, float, np.ndarray | None, np.ndarray | None, np.ndarray | None]:
        feats = trainer.batch_features(examples)
        unit, raw, norms = _project_batch(w, b, feats)
        g_w = np.zeros_like(w) if want_grads else None
        g_b = np.zeros(w.shape[0]) if (want_grads and b is not None) else None
        g_a = None
        penalty = 0.0

        if cfg.objective == "distill":
            teachers = trainer.teacher_matrix(examples)
            if a is not None:
                aligned = teachers @ a.T
            else:
                aligned = teachers
            t_norms = np.linalg.norm(aligned, axis=1)
            if np.any(t_norms < ZERO_NORM_FLOOR):
                raise ZeroVector("aligned teacher collapsed to zero")
            t_unit = aligned / t_norms[:, None]
            cos = np.sum(unit * t_unit, axis=1)
            loss = float(np.mean(1.0 - cos))
            if a is not None:
                penalty, g_pen = _orthogonality_penalty_grad(a)
                loss_total = loss + cfg.orthogonality_lambda * penalty
            else:
                loss_total = loss
            if want_grads:
                batch = len(examples)
                g_unit = -t_unit / batch
                g_raw = _unit_rows_grad(raw, unit, norms, g_unit)
                g_w = g_raw.T @ feats
                if b is not None:
                    g_b = g_raw.sum(axis=0)
                if a is not None:
                    g_t_unit = -unit / batch
                    g_aligned = _unit_rows_grad(aligned, t_unit, t_norms, g_t_unit)
                    g_a = g_aligned.T @ teachers + cfg.orthogonality_lambda * g_pen
            return loss_total, penalty, g_w, g_b, g_a

        if cfg.objective == "supcon_labels":
            labels = [ex.labels[trainer.label_key] for ex in examples]
            if want_grads:
                loss, g_z = _supcon_loss_grad(unit, labels, cfg.temperature)
                g_raw = _unit_rows_grad(raw, unit, norms, g_z)
                g_w = g_raw.T @ feats
                if b is not None:
                    g_b = g_raw.sum(axis=0)
            else:
                loss = supcon_loss(unit, labels, cfg.temperature)
            return loss, 0.0, g_w, g_b, None

        # infonce_pairs
        pos_feats = trainer.features[
            [trainer.feature_pos[ex.positive_id] for ex in examples]
        ]
        pos_unit, pos_raw, pos_norms = _project_batch(w, b, pos_feats)
        if want_grads:
            loss, g_anchor, g_pos = _infonce_loss_grad(
                unit, pos_unit, cfg.temperature
            )
            g_raw = _unit_rows_grad(raw, unit, norms, g_anchor)
            g_pos_raw = _unit_rows_grad(pos_raw, pos_unit, pos_norms, g_pos)
            g_w = g_raw.T @ feats + g_pos_raw.T @ pos_feats
            if b is not None:
                g_b = g_raw.sum(axis=0) + g_pos_raw.sum(axis=0)
        else:
            loss = infonce_loss(unit, pos_unit, cfg.temperature)
        return loss, 0.0, g_w, g_b, None

    def evaluation_loss(w, b, a) -> float | None:
        if not check_examples:
            return None
        try:
            return batch_loss_and_grads(w, b, a, check_examples, want_grads=False)[0]
        except (NoPositives, BatchTooSmall):
            return None

    val_initial = evaluation_loss(weight, bias, alignment)

    vel_w = np.zeros_like(weight)
    vel_b = np.zeros(cfg.axis_dim) if bias is not None else None
    vel_a = np.zeros_like(alignment) if alignment is not None else None
    entries: list[TrainLogEntry] = []

    for step in range(cfg.steps):
        batch = None
        for _ in range(5):  # resample when a batch happens to have no positives
            candidate = sample_batch(
                train_examples,
                axis_schema,
                cfg.axis,
                cfg.batch_size,
                rng_sampler,
            )
            if cfg.objective != "supcon_labels":
                batch = candidate
                break
            labels = [ex.labels[trainer.label_key] for ex in candidate]
            if any(labels.count(v) > 1 for v in set(labels)):
                batch = candidate
                break
        if batch is None:
            raise NoPositives(
                f"could not sample a batch with any same-label pair at step {step}"
            )
        if not np.all(np.isfinite(weight)):
            raise NonFiniteLoss(f"weights became non-finite at step {step}", step=step)
        loss, penalty, g_w, g_b, g_a = batch_loss_and_grads(
            weight, bias, alignment, batch, want_grads=True
        )
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became non-finite at step {step}", step=step)
        sq = float(np.sum(g_w * g_w))
        if g_b is not None:
            sq += float(np.sum(g_b * g_b))
        if g_a is not None:
            sq += float(np.sum(g_a * g_a))
        grad_norm = float(np.sqrt(sq))
        entries.append(TrainLogEntry(step=step, loss=float(loss), penalty=float(penalty), grad_norm=grad_norm))

        vel_w = cfg.momentum * vel_w - cfg.learning_rate * g_w
        weight = weight + vel_w
        if bias is not None and g_b is not None:
            vel_b = cfg.momentum * vel_b - cfg.learning_rate * g_b
            bias = bias + vel_b
        if alignment is not None and g_a is not None:
            vel_a = cfg.momentum * vel_a - cfg.learning_rate * g_a
            alignment = alignment + vel_a

    if alignment is not None and cfg.steps > 0:
        # polar projection onto the nearest semi-orthogonal matrix
        u, _, vt = np.linalg.svd(alignment, full_matrices=False)
        alignment = u @ vt

    if degenerate_fraction(weight, bias) > 0.5:
        raise DegenerateHead(
            "more than half of the validation batch projects to zero after training"
        )
    val_final = evaluation_loss(weight, bias, alignment)

    head = ProjectionHead(axis=cfg.axis, weight=weight, bias=bias)
    result_alignment = AlignmentMatrix(alignment) if alignment is not None else None
    return TrainResult(
        head=head,
        alignment=result_alignment,
        log=TrainLog(
            entries=entries, val_loss_initial=val_initial, val_loss_final=val_final
        ),
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def write_training_log(path: str | Path, log: TrainLog) -> Path:
    """One JSON object per line: {step, loss, penalty, grad_norm}."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for entry in log.entries:
            fh.write(
                json.dumps(
                    {
                        "step": entry.step,
                        "loss": entry.loss,
                        "penalty": entry.penalty,
                        "grad_norm": entry.grad_norm,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    return path


def save_head(
    path: str | Path,
    head: ProjectionHead,
    alignment: AlignmentMatrix | None = None,
) -> Path:
    """Write an FPHD head checkpoint (f32 little-endian payloads)."""
    path = Path(path)
    axis_bytes = head.axis.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(HEAD_MAGIC)
        fh.write(struct.pack("<H", HEAD_VERSION))
        fh.write(struct.pack("<H", len(axis_bytes)))
        fh.write(axis_bytes)
        fh.write(struct.pack("<II", head.d_enc, head.d_axis))
        fh.write(np.ascontiguousarray(head.weight, dtype="<f4").tobytes(order="C"))
        fh.write(struct.pack("<B", 1 if head.bias is not None else 0))
        if head.bias is not None:
            fh.write(np.ascontiguousarray(head.bias, dtype="<f4").tobytes(order="C"))
        if alignment is not None:
            if alignment.d_axis != head.d_axis:
                raise DimMismatch(
                    f"alignment d_axis {alignment.d_axis} != head d_axis {head.d_axis}"
                )
            fh.write(struct.pack("<I", alignment.d_teacher))
            fh.write(
                np.ascontiguousarray(alignment.matrix, dtype="<f4").tobytes(order="C")
            )
    return path


def load_head(path: str | Path) -> tuple[ProjectionHead, AlignmentMatrix | None]:
    path = Path(path)
    raw = path.read_bytes()

    def take(n: int, offset: int) -> tuple[bytes, int]:
        if offset + n > len(raw):
            raise TruncatedFile(f"{path}: head checkpoint ends early")
        return raw[offset : offset + n], offset + n

    chunk, pos = take(4, 0)
    if chunk != HEAD_MAGIC:
        raise BadMagic(f"{path}: bad magic {chunk!r}, expected {HEAD_MAGIC!r}")
    chunk, pos = take(2, pos)
    version = struct.unpack("<H", chunk)[0]
    if version != HEAD_VERSION:
        raise BadMagic(f"{path}: unsupported head version {version}")
    chunk, pos = take(2, pos)
    name_len = struct.unpack("<H", chunk)[0]
    chunk, pos = take(name_len, pos)
    axis = chunk.decode("utf-8")
    chunk, pos = take(8, pos)
    d_enc, d_axis = struct.unpack("<II", chunk)
    chunk, pos = take(4 * d_axis * d_enc, pos)
    weight = np.frombuffer(chunk, dtype="<f4").astype(np.float64).reshape(d_axis, d_enc)
    chunk, pos = take(1, pos)
    has_bias = struct.unpack("<B", chunk)[0]
    bias = None
    if has_bias:
        chunk, pos = take(4 * d_axis, pos)
        bias = np.frombuffer(chunk, dtype="<f4").astype(np.float64)
    alignment = None
    if pos < len(raw):
        chunk, pos = take(4, pos)
        d_teacher = struct.unpack("<I", chunk)[0]
        chunk, pos = take(4 * d_axis * d_teacher, pos)
        matrix = (
            np.frombuffer(chunk, dtype="<f4").astype(np.float64).reshape(d_axis, d_teacher)
        )
        alignment = AlignmentMatrix(matrix)
    if pos != len(raw):
        raise TruncatedFile(f"{path}: {len(raw) - pos} trailing bytes")
    return ProjectionHead(axis=axis, weight=weight, bias=bias), alignment

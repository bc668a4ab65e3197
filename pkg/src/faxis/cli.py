"""Command-line entry point: synth, train, embed, build-index, query, eval, serve.

Exit codes: 0 success, 1 usage error, 2 data error.  All randomness flows
from one --seed through named substreams, so identical invocations produce
byte-identical outputs; progress goes to stderr, results to files or JSON
lines on stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import io as fio
from .core import AxisSchema, QueryWeights, concat
from .errors import FaxisError, UnknownAxis, UsageError
from .evaluation import (
    QuerySet,
    preference_flip_report,
    report_json_text,
    report_render,
)
from .index import ItemRecord, build_index, load_index, query as index_query, save_index
from .train import (
    TrainConfig,
    TrainExample,
    load_head,
    project,
    save_head,
    train_axis,
    write_training_log,
)

DEFAULT_PORT = 7878


class _Parser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting with code 2."""

    def error(self, message):
        raise UsageError(message)


def parse_weights(text: str) -> QueryWeights:
    """Parse ``semantic=1,speaker_id=-1.0`` style weight lists."""
    weights: dict[str, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise UsageError(f"bad weight {part!r}; expected axis=value")
        name, _, value = part.partition("=")
        try:
            weights[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"bad weight value in {part!r}") from None
    if not weights:
        raise UsageError("empty weight list")
    return QueryWeights(weights)


def _config_hash(payload: Mapping) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


def _validate_weights(w: QueryWeights, schema: AxisSchema) -> None:
    try:
        w.resolve(schema)
    except UnknownAxis as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    config = fio.SynthConfig(
        n_speakers=args.speakers,
        n_sentences=args.sentences,
        n_dialects=args.dialects,
        d_enc=args.d_enc,
        noise_sigma=args.noise,
        mixing=args.mixing,
        seed=args.seed,
        latent_dim=args.latent_dim,
        speaker_scale=args.speaker_scale,
        query_speakers=args.query_speakers,
    )
    data = fio.generate_synthetic(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fio.write_blob(out / "features.fpeb", data.features)
    entries = [
        fio.ManifestEntry(
            id=data.ids[i], corpus=data.corpora[i], labels=data.labels[i], row=i
        )
        for i in range(data.n_items)
    ]
    fio.write_manifest(
        out / "features.jsonl",
        kind=fio.MANIFEST_FEATURES,
        blob="features.fpeb",
        entries=entries,
        dim=config.d_enc,
        meta={"seed": args.seed, "axis_label_keys": dict(data.axis_label_keys)},
    )
    for axis in fio.SYNTH_AXES:
        fio.write_blob(out / f"teacher_{axis}.fpeb", data.teachers[axis])
        fio.write_blob(out / f"prototypes_{axis}.fpeb", data.prototypes[axis])
    summary = {
        "items": data.n_items,
        "d_enc": config.d_enc,
        "corpora": sorted(set(data.corpora)),
        "seed": args.seed,
        "out": str(out),
    }
    (out / "synth.json").write_text(
        json.dumps(
            {
                "config": {
                    "n_speakers": config.n_speakers,
                    "n_sentences": config.n_sentences,
                    "n_dialects": config.n_dialects,
                    "d_enc": config.d_enc,
                    "noise_sigma": config.noise_sigma,
                    "mixing": config.mixing,
                    "seed": config.seed,
                    "latent_dim": config.latent_dim,
                    "speaker_scale": config.speaker_scale,
                    "query_speakers": config.resolved_query_speakers(),
                },
                "axis_label_keys": dict(data.axis_label_keys),
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    print(json.dumps(summary, sort_keys=True))
    return 0


def _load_pairs(path: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            pairs[str(obj["anchor"])] = str(obj["positive"])
    return pairs


def cmd_train(args) -> int:
    dataset = fio.load_dataset(args.features)
    if dataset.kind != fio.MANIFEST_FEATURES:
        raise UsageError(f"{args.features} is not a features manifest")
    features = {
        entry.id: dataset.matrix[i] for i, entry in enumerate(dataset.entries)
    }
    teacher_rows = None
    if args.objective == "distill":
        if not args.teacher:
            raise UsageError("--teacher BLOB is required for the distill objective")
        teacher_rows = fio.read_blob(args.teacher).astype(np.float64)
        if teacher_rows.shape[0] != len(dataset.entries):
            raise UsageError(
                f"teacher blob has {teacher_rows.shape[0]} rows, "
                f"manifest has {len(dataset.entries)} entries"
            )
    pairs = _load_pairs(args.pairs) if args.pairs else None
    if args.objective == "infonce_pairs" and pairs is None:
        raise UsageError("--pairs FILE is required for the infonce_pairs objective")

    supervision = []
    for i, entry in enumerate(dataset.entries):
        supervision.append(
            TrainExample(
                feature_id=entry.id,
                teachers=(
                    {args.axis: teacher_rows[i]} if teacher_rows is not None else {}
                ),
                labels=dict(entry.labels),
                positive_id=pairs.get(entry.id) if pairs else None,
            )
        )
    if args.objective == "infonce_pairs":
        supervision = [ex for ex in supervision if ex.positive_id is not None]
        if not supervision:
            raise UsageError("no manifest entries appear in the pairs file")

    config = TrainConfig(
        axis=args.axis,
        objective=args.objective,
        axis_dim=args.dim,
        steps=args.steps,
        temperature=args.tau,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        orthogonality_lambda=args.ortho_lambda,
        use_bias=not args.no_bias,
        holdout_fraction=args.holdout,
    )
    _progress(
        f"training axis {args.axis!r} ({args.objective}) for {args.steps} steps "
        f"on {len(supervision)} examples"
    )
    result = train_axis(config, features, supervision)
    save_head(args.out, result.head, result.alignment)
    if args.log:
        write_training_log(args.log, result.log)
    last = result.log.entries[-1].loss if result.log.entries else None
    print(
        json.dumps(
            {
                "axis": args.axis,
                "objective": args.objective,
                "steps": args.steps,
                "final_loss": last,
                "val_loss_initial": result.log.val_loss_initial,
                "val_loss_final": result.log.val_loss_final,
                "checkpoint": str(args.out),
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_embed(args) -> int:
    dataset = fio.load_dataset(args.features)
    if dataset.kind != fio.MANIFEST_FEATURES:
        raise UsageError(f"{args.features} is not a features manifest")
    heads = []
    for path in args.heads.split(","):
        head, _alignment = load_head(path.strip())
        heads.append(head)
    schema = AxisSchema([(h.axis, h.d_axis) for h in heads])
    rows = np.zeros((len(dataset.entries), schema.total_dim))
    for i in range(len(dataset.entries)):
        parts = {h.axis: project(h, dataset.matrix[i]) for h in heads}
        rows[i] = concat(schema, parts).data
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fio.write_blob(out / "embeddings.fpeb", rows)
    fio.write_manifest(
        out / "embeddings.jsonl",
        kind=fio.MANIFEST_EMBEDDINGS,
        blob="embeddings.fpeb",
        entries=dataset.entries,
        dim=schema.total_dim,
        schema=schema,
    )
    print(
        json.dumps(
            {
                "items": len(dataset.entries),
                "axes": [{"name": n, "dim": d} for n, d in schema.axes],
                "out": str(out),
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_build_index(args) -> int:
    dataset = fio.load_dataset(args.embeddings)
    if dataset.kind != fio.MANIFEST_EMBEDDINGS:
        raise UsageError(f"{args.embeddings} is not an embeddings manifest")
    idx = build_index(dataset.item_records())
    save_index(idx, args.out)
    print(json.dumps({"items": len(idx), "out": str(args.out)}, sort_keys=True))
    return 0


def _parse_filters(args) -> "callable | None":
    corpus = getattr(args, "filter_corpus", None)
    label_pairs = getattr(args, "filter_label", None) or []
    equals = {}
    for pair in label_pairs:
        if "=" not in pair:
            raise UsageError(f"bad --filter-label {pair!r}; expected key=value")
        key, _, value = pair.partition("=")
        equals[key] = value
    if corpus is None and not equals:
        return None

    def predicate(item_corpus: str, labels: Mapping[str, str]) -> bool:
        if corpus is not None and item_corpus != corpus:
            return False
        return all(labels.get(k) == v for k, v in equals.items())

    return predicate


def cmd_query(args) -> int:
    idx = load_index(args.index)
    weights = parse_weights(args.weights)
    _validate_weights(weights, idx.schema)
    record = idx.record(args.query_id)
    exclude = {args.query_id} if args.exclude_self else None
    hits = index_query(
        idx,
        record.embedding,
        weights,
        args.k,
        filter=_parse_filters(args),
        exclude_ids=exclude,
    )
    for hit in hits:
        item = idx.record(hit.item_id)
        print(
            json.dumps(
                {
                    "item_id": hit.item_id,
                    "corpus": item.corpus,
                    "labels": dict(item.labels),
                    "score": hit.score,
                    "rank": hit.rank,
                    "per_axis": dict(hit.per_axis),
                },
                sort_keys=True,
            )
        )
    return 0


def cmd_eval(args) -> int:
    idx = load_index(args.index)
    settings = [parse_weights(text) for text in args.weights]
    for w in settings:
        _validate_weights(w, idx.schema)
    queryset = QuerySet.from_index(
        idx,
        corpus=args.query_corpus,
        sentence_key=args.sentence_key,
        speaker_key=args.speaker_key,
    )
    report = preference_flip_report(
        queryset,
        idx,
        settings,
        exclude_self=not args.include_self,
    )
    meta = dict(report.meta)
    meta["seed"] = args.seed
    meta["config_hash"] = _config_hash(
        {
            "weights": [dict(w.weights) for w in settings],
            "query_corpus": args.query_corpus,
            "sentence_key": args.sentence_key,
            "speaker_key": args.speaker_key,
            "include_self": args.include_self,
            "seed": args.seed,
        }
    )
    from .evaluation import EvalReport

    report = EvalReport(
        settings=report.settings,
        ceiling=report.ceiling,
        n_queries=report.n_queries,
        n_retrievable=report.n_retrievable,
        meta=meta,
    )
    if args.out:
        Path(args.out).write_text(report_json_text(report), encoding="utf-8")
        _progress(f"report written to {args.out}")
    print(report_render(report))
    return 0


def resolve_port(cli_port: int | None, env: Mapping[str, str] | None = None) -> int:
    """--port beats FAXIS_PORT beats the 7878 default."""
    if cli_port is not None:
        return cli_port
    env = os.environ if env is None else env
    return int(env.get("FAXIS_PORT", DEFAULT_PORT))


def cmd_serve(args) -> int:
    from .service import run_server

    idx = load_index(args.index)
    ui_dir = Path(args.ui) if args.ui else None
    run_server(idx, host=args.host, port=resolve_port(args.port), ui_dir=ui_dir)
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(
        prog="faxis",
        description=(
            "Factor-partitioned embeddings: train per-axis projection heads, "
            "build exact indexes, and run weight-conditioned retrieval."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-factor synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--speakers", type=int, default=8)
    p.add_argument("--sentences", type=int, default=25)
    p.add_argument("--dialects", type=int, default=4)
    p.add_argument("--d-enc", type=int, default=64, dest="d_enc")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument(
        "--mixing", choices=["orthogonal", "random_full_rank"], default="orthogonal"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent-dim", type=int, default=16, dest="latent_dim")
    p.add_argument("--speaker-scale", type=float, default=3.0, dest="speaker_scale")
    p.add_argument("--query-speakers", type=int, default=None, dest="query_speakers")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one projection head")
    p.add_argument("--features", required=True, help="features manifest path")
    p.add_argument("--axis", required=True)
    p.add_argument(
        "--objective",
        required=True,
        choices=["distill", "infonce_pairs", "supcon_labels"],
    )
    p.add_argument("--dim", type=int, required=True, help="axis output dimension")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--teacher", help="teacher blob (distill)")
    p.add_argument("--pairs", help="JSONL of {anchor, positive} ids (infonce)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--tau", type=float, default=0.07)
    p.add_argument("--batch-size", type=int, default=64, dest="batch_size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--ortho-lambda", type=float, default=1.0, dest="ortho_lambda"
    )
    p.add_argument("--no-bias", action="store_true", dest="no_bias")
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--out", required=True, help="head checkpoint path (.fphd)")
    p.add_argument("--log", help="training log JSONL path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="apply heads to features, write embeddings")
    p.add_argument("--features", required=True)
    p.add_argument(
        "--heads", required=True, help="comma-separated head checkpoints, axis order"
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("build-index", help="freeze an embeddings manifest into an index")
    p.add_argument("--embeddings", required=True, help="embeddings manifest path")
    p.add_argument("--out", required=True, help="index directory")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("query", help="run one weighted query against an index")
    p.add_argument("--index", required=True)
    p.add_argument("--query-id", required=True, dest="query_id")
    p.add_argument(
        "--weights", required=True, help="axis=value list, e.g. semantic=1,speaker_id=-1"
    )
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--exclude-self", action="store_true", dest="exclude_self")
    p.add_argument("--filter-corpus", dest="filter_corpus")
    p.add_argument(
        "--filter-label",
        action="append",
        dest="filter_label",
        help="key=value equality filter (repeatable)",
    )
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="preference-flip evaluation report")
    p.add_argument("--index", required=True)
    p.add_argument(
        "--weights",
        action="append",
        required=True,
        help="one weight setting per flag, e.g. --weights semantic=1,speaker_id=-1",
    )
    p.add_argument("--query-corpus", dest="query_corpus")
    p.add_argument("--include-self", action="store_true", dest="include_self")
    p.add_argument("--sentence-key", default="sentence", dest="sentence_key")
    p.add_argument("--speaker-key", default="speaker", dest="speaker_key")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the HTTP query service")
    p.add_argument("--index", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--ui", help="static UI bundle directory")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FaxisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Subcommand implementations behind the CLI launcher.

Conventions: logs to stderr, data to files; every run writes a
``<output>.manifest.json`` with the command, config snapshot, input digests,
seed, tool version and timestamp (``SOURCE_DATE_EPOCH`` overrides the clock
for reproducible runs). Exit codes: 0 success, 1 runtime or numeric failure,
2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .attribution import (
    AttributionError,
    AttributionRequest,
    attribute_checkpoint,
    export_subgraph,
    report_to_dict,
)
from .baselines import triplet_pair_scores
from .container import FORMAT_VERSION, ContainerError, sha256_file
from .evaluation import (
    MetricError,
    explainability_eval,
    export_embeddings,
    make_folds,
    cross_validate,
    shuffled_label_control,
)
from .kgraph import (
    GraphBuildError,
    KnowledgeGraph,
    NodeKind,
    build_from_manifest,
    load_bundle,
    save_bundle,
)
from .model import (
    Checkpoint,
    CheckpointError,
    ModelConfig,
    SamplingError,
    TrainConfig,
    TrainingError,
    forward,
    load_checkpoint,
    save_checkpoint,
    score_pairs,
    verify_checkpoint_graph,
)

log = logging.getLogger("kgexplain")

MODEL_CHOICES = ("graphix", "transe", "distmult")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(primary: Path, command: str, args: argparse.Namespace, *, config: dict, inputs: list[Path], seed) -> None:
    digests = {}
    for p in inputs:
        if p is not None and Path(p).exists():
            digests[str(p)] = sha256_file(p)
    payload = {
        "command": command,
        "argv": [command] + [a for a in args._argv[1:]],
        "config": config,
        "inputs": digests,
        "seed": seed,
        "tool_version": __version__,
        "format_version": FORMAT_VERSION,
        "timestamp": _timestamp(),
    }
    _write_json(Path(str(primary) + ".manifest.json"), payload)


def _load_json(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"file not found: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: invalid JSON ({exc})") from exc


def _require_file(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"file not found: {p}")
    return p


def _build_configs(args) -> tuple[ModelConfig, TrainConfig, dict]:
    """Precedence: command-line flags > config file > defaults.

    Omitting the seed everywhere draws one at random and records it in the
    run manifest; reproducible mode requires an explicit seed.
    """
    base = _load_json(args.config) if getattr(args, "config", None) else {}
    model_kwargs = dict(base.get("model", {}))
    train_kwargs = dict(base.get("train", {}))
    overrides = {
        "embed_dim": getattr(args, "embed_dim", None),
        "out_dim": getattr(args, "out_dim", None),
        "n_layers": getattr(args, "layers", None),
        "normalize_adjacency": getattr(args, "normalize_adjacency", None),
        "seed": getattr(args, "seed", None),
    }
    for key, val in overrides.items():
        if val is not None:
            model_kwargs[key] = val
    if "seed" not in model_kwargs:
        model_kwargs["seed"] = int.from_bytes(os.urandom(6), "little")
        log.info("no seed given; drew %d (recorded in the run manifest)", model_kwargs["seed"])
    train_overrides = {
        "epochs": getattr(args, "epochs", None),
        "learning_rate": getattr(args, "lr", None),
        "optimizer": getattr(args, "optimizer", None),
        "loss_mode": getattr(args, "loss_mode", None),
        "batch_size": getattr(args, "batch_size", None),
    }
    for key, val in train_overrides.items():
        if val is not None:
            train_kwargs[key] = val
    try:
        model_config = ModelConfig(**model_kwargs)
        train_config = TrainConfig(**train_kwargs)
        train_config.validate()
    except TypeError as exc:
        raise UsageError(f"bad config: {exc}") from exc
    snapshot = {"model": asdict(model_config), "train": asdict(train_config)}
    return model_config, train_config, snapshot


def _load_graph(path: str | Path) -> KnowledgeGraph:
    return load_bundle(_require_file(path))


def _load_checkpoint_for(graph: KnowledgeGraph, path: str | Path, force: bool) -> Checkpoint:
    ckpt = load_checkpoint(_require_file(path))
    verify_checkpoint_graph(ckpt, graph, force=force)
    return ckpt


def _make_pair_scorer(graph: KnowledgeGraph, ckpt: Checkpoint):
    if ckpt.model_type == "graphix":
        H = forward(graph, ckpt.params, ckpt.config)
        return lambda pairs: score_pairs(H, pairs)
    return lambda pairs: triplet_pair_scores(ckpt.model_type, ckpt.params, pairs)


def _parse_edge_spec(graph: KnowledgeGraph, spec: str) -> tuple[int, int]:
    parts = spec.split("::")
    if len(parts) == 2:
        raw = parts
    elif len(parts) == 4:
        for kind_name in (parts[0], parts[2]):
            if kind_name not in ("disease", "drug", "gene"):
                raise UsageError(f"unknown kind {kind_name!r} in edge spec {spec!r}")
        raw = [parts[1], parts[3]]
        kinds = [parts[0], parts[2]]
    else:
        raise UsageError(f"edge spec {spec!r} must be 'left::right' or 'kind::left::kind::right'")
    ids = []
    for idx, label in enumerate(raw):
        nid = graph.node_id(label)
        if nid is None:
            raise UsageError(f"label {label!r} not present in the graph")
        if len(parts) == 4:
            actual = NodeKind(int(graph.kinds[nid])).label
            if actual != kinds[idx]:
                raise UsageError(f"label {label!r} is a {actual} node, not {kinds[idx]}")
        ids.append(nid)
    return ids[0], ids[1]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_build(args) -> int:
    manifest_path = _require_file(args.manifest)
    manifest = _load_json(manifest_path)
    graph, report = build_from_manifest(manifest, base_dir=manifest_path.parent)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_bundle(graph, out, manifest_digest=sha256_file(manifest_path))
    report["content_digest"] = graph.content_digest()
    _write_json(Path(args.report), report)
    _write_manifest(out, "build", args, config=manifest, inputs=[manifest_path], seed=None)
    log.info("built graph: %d nodes, %d positives", graph.n_nodes, report["positives"])
    return 0


def cmd_train(args) -> int:
    graph = _load_graph(args.bundle)
    model_config, train_config, snapshot = _build_configs(args)
    seed = model_config.seed
    from .evaluation import train_model

    ckpt = train_model(args.model, graph, model_config, train_config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out)
    loss_csv = Path(args.loss_csv) if args.loss_csv else Path(str(out) + ".loss.csv")
    with open(loss_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for e, v in enumerate(ckpt.loss_history, start=1):
            writer.writerow([e, f"{v:.17g}"])
    if not args.no_figures and ckpt.loss_history:
        from .figures import loss_history_figure

        loss_history_figure(ckpt.loss_history, Path(str(out) + ".loss.png"))
    _write_manifest(out, "train", args, config=snapshot, inputs=[Path(args.bundle), Path(args.config) if args.config else None], seed=seed)
    log.info("trained %s for %d epochs; final loss %s", args.model, ckpt.epoch, ckpt.loss_history[-1] if ckpt.loss_history else "n/a")
    return 0


def _read_pairs_file(path: Path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise UsageError(f"{path}:{lineno}: expected 2 tab-separated labels")
            pairs.append((fields[0], fields[1]))
    return pairs


def _first_level(label: str) -> str:
    return label.split(".")[0]


def cmd_predict(args) -> int:
    graph = _load_graph(args.bundle)
    ckpt = _load_checkpoint_for(graph, args.checkpoint, args.force)
    scorer = _make_pair_scorer(graph, ckpt)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    excluded_nodes: set[int] = set()
    skipped: list[dict] = []
    if args.exclude_labels:
        for label in [l.strip() for l in _require_file(args.exclude_labels).read_text(encoding="utf-8").splitlines()]:
            if not label or label.startswith("#"):
                continue
            nid = graph.node_id(label)
            if nid is None:
                skipped.append({"label": label, "reason": "unknown_exclude_label"})
            else:
                excluded_nodes.add(nid)

    rows: list[tuple[str, str, float]] = []
    if args.pairs:
        requested = _read_pairs_file(_require_file(args.pairs))
        resolved = []
        for left_label, right_label in requested:
            i = graph.node_id(left_label)
            j = graph.node_id(right_label)
            if i is None or j is None:
                skipped.append({
                    "pair": [left_label, right_label],
                    "reason": "unknown_left_label" if i is None else "unknown_right_label",
                })
                continue
            if i in excluded_nodes or j in excluded_nodes:
                continue
            resolved.append((i, j))
        if resolved:
            scores = scorer(np.array(resolved, dtype=np.int64))
            rows = [
                (graph.labels[i], graph.labels[j], float(s))
                for (i, j), s in zip(resolved, scores)
            ]
        rows.sort(key=lambda r: (-r[2], r[0], r[1]))
    else:
        ka, kb = graph.target_relation.signature
        lefts = [i for i in graph.nodes_of_kind(ka) if i not in excluded_nodes]
        rights = np.array([j for j in graph.nodes_of_kind(kb) if j not in excluded_nodes], dtype=np.int64)
        known_by_left: dict[int, set[int]] = {}
        for i2, j2 in graph.positive_pairs:
            known_by_left.setdefault(int(i2), set()).add(int(j2))
        syn_by_level: dict[str, set[int]] = {}
        if args.exclude_mesh_synonyms:
            for i2, j2 in graph.positive_pairs:
                syn_by_level.setdefault(_first_level(graph.labels[i2]), set()).add(int(j2))
        lefts = sorted(lefts, key=lambda i: graph.labels[i])
        for i in lefts:
            banned = set(known_by_left.get(int(i), ()))
            if args.exclude_mesh_synonyms:
                banned |= syn_by_level.get(_first_level(graph.labels[i]), set())
            cand = rights[rights != i]
            if banned:
                cand = cand[~np.isin(cand, sorted(banned))]
            if cand.size == 0:
                continue
            pairs = np.stack([np.full(cand.shape, i, dtype=np.int64), cand], axis=1)
            scores = scorer(pairs)
            ranked = sorted(zip(cand.tolist(), scores.tolist()), key=lambda t: (-t[1], graph.labels[t[0]]))
            take = ranked[: args.top] if args.per_node else ranked
            rows.extend((graph.labels[i], graph.labels[j], float(s)) for j, s in take)
        if not args.per_node:
            rows.sort(key=lambda r: (-r[2], r[0], r[1]))
            rows = rows[: args.top]

    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["left", "right", "score"])
        for left, right, s in rows:
            writer.writerow([left, right, f"{s:.17g}"])
    if skipped:
        _write_json(Path(str(out) + ".skipped.json"), {"skipped": skipped})
        log.warning("%d entries skipped; see %s.skipped.json", len(skipped), out)
    _write_manifest(out, "predict", args, config={"top": args.top, "per_node": bool(args.per_node)},
                    inputs=[Path(args.bundle), Path(args.checkpoint)] + ([Path(args.pairs)] if args.pairs else []),
                    seed=None)
    return 0


def cmd_explain(args) -> int:
    graph = _load_graph(args.bundle)
    ckpt = _load_checkpoint_for(graph, args.checkpoint, args.force)
    edge = _parse_edge_spec(graph, args.edge)
    request = AttributionRequest(edge=edge, steps=args.m, hop_limit=ckpt.config.n_layers)
    report = attribute_checkpoint(graph, ckpt, request)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    report_path = Path(str(prefix) + ".report.json")
    _write_json(report_path, report_to_dict(report))
    export_path = Path(str(prefix) + "." + args.format)
    export_subgraph(graph, report, args.format, export_path)
    _write_manifest(prefix, "explain", args, config={"edge": args.edge, "m": args.m, "format": args.format},
                    inputs=[Path(args.bundle), Path(args.checkpoint)], seed=None)
    top = report.top_gene
    log.info("edge score %.6g; top gene %s", report.score, top.label if top else "(none nearby)")
    return 0


def cmd_evaluate(args) -> int:
    graph = _load_graph(args.bundle)
    model_config, train_config, snapshot = _build_configs(args)
    seed = model_config.seed
    plan = make_folds(graph.positive_pairs, args.folds, seed)
    result, details = cross_validate(graph, args.model, model_config, train_config, plan)
    payload = {
        "model": args.model,
        "n_folds": plan.n_folds,
        "seed": seed,
        "graph_hash": graph.content_digest(),
        "config": snapshot,
        **result.to_dict(),
    }
    if args.shuffled_control:
        control = shuffled_label_control(details, seed)
        payload["shuffled_control_roc_auc"] = {
            "per_fold": control,
            "mean": float(np.mean(control)),
        }
    out = Path(args.out)
    _write_json(out, payload)
    if not args.no_figures:
        from .figures import pr_figure, roc_figure

        stem = str(out)[: -len(out.suffix)] if out.suffix else str(out)
        roc_figure(details, Path(stem + ".roc.png"))
        pr_figure(details, Path(stem + ".pr.png"))
    _write_manifest(out, "evaluate", args, config=snapshot,
                    inputs=[Path(args.bundle), Path(args.config) if args.config else None], seed=seed)
    log.info("%s %s", args.model, result.summary())
    return 0


def _read_records_file(path: Path) -> list[tuple[str, str, set[str]]]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise UsageError(f"{path}:{lineno}: expected disease<TAB>drug<TAB>target[,target...]")
            targets = {t for t in fields[2].split(",") if t}
            if not targets:
                raise UsageError(f"{path}:{lineno}: no target genes listed")
            records.append((fields[0], fields[1], targets))
    return records


def cmd_explain_eval(args) -> int:
    graph = _load_graph(args.bundle)
    ckpt = _load_checkpoint_for(graph, args.checkpoint, args.force)
    records = _read_records_file(_require_file(args.records))
    summary = explainability_eval(
        graph, ckpt, records, steps=args.m, positive_filter=args.positive_filter
    )
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    json_payload = {k: v for k, v in summary.items() if k != "ig_samples"}
    _write_json(Path(str(prefix) + ".json"), json_payload)
    with open(Path(str(prefix) + ".tsv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["disease", "drug", "targets", "n_candidates", "target_ranks", "hit_at_1"])
        for row in summary["rows"]:
            writer.writerow([
                row["disease"],
                row["drug"],
                ",".join(row["targets"]),
                row["n_candidates"],
                ",".join(str(r) for r in row["target_ranks"]),
                int(row["hit_at_1"]),
            ])
        if summary["evaluated"]:
            pct = round(100.0 * summary["hits_at_1"] / summary["evaluated"])
            fh.write(f"# total accuracy = {summary['hits_at_1']}/{summary['evaluated']}({pct}%)\n")
    if not args.no_figures and summary["ig_samples"]:
        from .figures import ig_distribution_figure

        ig_distribution_figure(summary["ig_samples"], Path(str(prefix) + ".ig.png"))
    _write_manifest(prefix, "explain-eval", args,
                    config={"m": args.m, "positive_filter": args.positive_filter},
                    inputs=[Path(args.bundle), Path(args.checkpoint), Path(args.records)], seed=None)
    log.info("top-1 hits %s/%s", summary["hits_at_1"], summary["evaluated"])
    return 0


def cmd_export_embeddings(args) -> int:
    graph = _load_graph(args.bundle)
    ckpt = _load_checkpoint_for(graph, args.checkpoint, args.force)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_embeddings(graph, ckpt, out)
    _write_manifest(out, "export-embeddings", args, config={},
                    inputs=[Path(args.bundle), Path(args.checkpoint)], seed=None)
    return 0


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgexplain",
        description="Knowledge-graph link prediction with per-node contribution explanations",
    )
    parser.add_argument("--version", action="version", version=f"kgexplain {__version__} (container format {FORMAT_VERSION})")
    parser.add_argument("--threads", type=int, default=None, help="kernel thread count; 1 = determinism mode")
    parser.add_argument("-v", "--verbose", action="store_true")
    # accepted before or after the subcommand; the launcher scans for it early
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=lambda **kw: argparse.ArgumentParser(parents=[common], **kw))

    p = sub.add_parser("build", help="assemble a graph bundle from TSV edge files")
    p.add_argument("--manifest", required=True, help="JSON: relation name -> TSV path, target, optional mesh_mapping")
    p.add_argument("--out", required=True, help="output graph bundle")
    p.add_argument("--report", required=True, help="output build-report JSON")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="train a model on a graph bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--model", choices=MODEL_CHOICES, default="graphix")
    p.add_argument("--config", default=None, help="JSON with 'model' and 'train' sections")
    p.add_argument("--seed", type=int, default=None, help="mandatory for reproducible runs")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--out-dim", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=None)
    p.add_argument("--loss-mode", choices=("per_pair", "literal_sum", "margin"), default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--normalize-adjacency", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--out", required=True, help="output checkpoint")
    p.add_argument("--loss-csv", default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score pairs or rank novel candidates")
    p.add_argument("--bundle", required=True)
    p.add_argument("--checkpoint", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--pairs", default=None, help="TSV of left<TAB>right labels to score")
    g.add_argument("--all-novel", action="store_true", help="enumerate all non-training target-kind pairs")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--per-node", action="store_true", help="top-K per left node instead of global top-K")
    p.add_argument("--exclude-labels", default=None, help="file of node labels to exclude")
    p.add_argument("--exclude-mesh-synonyms", action="store_true",
                   help="drop pairs whose disease shares its first tree level with a trained association")
    p.add_argument("--force", action="store_true", help="skip the checkpoint/graph hash check")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="contribution report and subgraph export for one edge")
    p.add_argument("--bundle", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--edge", required=True, help="'left::right' or 'kind::left::kind::right'")
    p.add_argument("--m", type=int, default=30, help="path integration steps")
    p.add_argument("--format", choices=("dot", "graphml", "json"), default="dot")
    p.add_argument("--force", action="store_true")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="k-fold cross-validation metrics")
    p.add_argument("--bundle", required=True)
    p.add_argument("--model", choices=MODEL_CHOICES, default="graphix")
    p.add_argument("--config", default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--out-dim", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=None)
    p.add_argument("--loss-mode", choices=("per_pair", "literal_sum", "margin"), default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--normalize-adjacency", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--shuffled-control", action="store_true", help="also report ROC-AUC under permuted labels")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", required=True, help="output metrics JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain-eval", help="verify top-contribution genes against known targets")
    p.add_argument("--bundle", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--records", required=True, help="TSV: disease<TAB>drug<TAB>target[,target...]")
    p.add_argument("--m", type=int, default=30)
    p.add_argument("--positive-filter", choices=("median", "none"), default="median")
    p.add_argument("--force", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_explain_eval)

    p = sub.add_parser("export-embeddings", help="write learned node features to CSV")
    p.add_argument("--bundle", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = ["kgexplain"] + argv
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, GraphBuildError, ContainerError, CheckpointError, MetricError, AttributionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except (TrainingError, SamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

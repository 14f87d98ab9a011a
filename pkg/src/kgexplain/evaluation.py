"""Cross-validation, ranking metrics, and the explainability verification harness.

Metric conventions, stated exactly:

* ``roc_auc`` is the Mann-Whitney statistic: the probability that a uniformly
  random positive outscores a uniformly random negative, ties counted 1/2.
  Computed from tie-averaged ranks; equals brute-force pair counting exactly.
* ``pr_auc`` is average precision with threshold grouping: scores are swept
  descending through their unique values and each recall increment is
  weighted by the precision at that threshold (step integration, no
  trapezoids). Tied scores enter together.

The synthetic planted-association generator provides desk-scale ground truth
for both link prediction and mediator attribution: positives are
disease-drug pairs inside kind-matched groups, each mediated (with a
configurable fraction) by its group's designated gene through a
disease-gene plus gene-drug path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attribution import AttributionRequest, attribute_checkpoint, rank_proteins
from .kgraph import (
    EdgeList,
    GraphBuildError,
    KnowledgeGraph,
    LabelTable,
    NodeKind,
    RelationKind,
    assemble,
)
from .model import (
    Checkpoint,
    ModelConfig,
    TrainConfig,
    checkpoint_scores,
    train,
)


class MetricError(ValueError):
    """Metric undefined for the given inputs (single class, no positives)."""


# ---------------------------------------------------------------------------
# Fold plans
# ---------------------------------------------------------------------------

@dataclass
class FoldPlan:
    n_folds: int
    assignments: np.ndarray  # fold index per positive pair
    seed: int


def make_folds(positives: np.ndarray, n_folds: int, seed: int) -> FoldPlan:
    """Uniform random partition of the positive pairs; sizes differ by <= 1."""
    n = len(positives)
    if n_folds < 2:
        raise MetricError("n_folds must be >= 2")
    if n_folds > n:
        raise MetricError(f"cannot split {n} positives into {n_folds} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % n_folds
    return FoldPlan(n_folds, assignments, seed)


# ---------------------------------------------------------------------------
# Ranking metrics
# ---------------------------------------------------------------------------

def _check_binary(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("labels must be 0/1")
    return labels.astype(bool)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    srt = scores[order]
    i = 0
    while i < len(srt):
        j = i
        while j < len(srt) and srt[j] == srt[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)  # mean of 1-based ranks i+1..j
        i = j
    return ranks


def roc_auc(scores, labels) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    pos = _check_binary(labels)
    n_pos = int(pos.sum())
    n_neg = len(scores) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("roc_auc needs both classes present")
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    pos = _check_binary(labels)
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise MetricError("pr_auc needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    srt = scores[order]
    lab = pos[order]
    ap = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    while i < len(srt):
        j = i
        while j < len(srt) and srt[j] == srt[i]:
            j += 1
        tp += int(lab[i:j].sum())
        fp += int(j - i - lab[i:j].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return float(ap)


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) points at each unique threshold, for plotting."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = _check_binary(labels)
    n_pos = int(pos.sum())
    n_neg = len(scores) - n_pos
    order = np.argsort(-scores, kind="mergesort")
    fpr = [0.0]
    tpr = [0.0]
    tp = fp = 0
    i = 0
    lab = pos[order]
    srt = scores[order]
    while i < len(srt):
        j = i
        while j < len(srt) and srt[j] == srt[i]:
            j += 1
        tp += int(lab[i:j].sum())
        fp += int(j - i - lab[i:j].sum())
        tpr.append(tp / n_pos if n_pos else 0.0)
        fpr.append(fp / n_neg if n_neg else 0.0)
        i = j
    return np.array(fpr), np.array(tpr)


def pr_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) step points at each unique threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = _check_binary(labels)
    n_pos = int(pos.sum())
    order = np.argsort(-scores, kind="mergesort")
    recall = [0.0]
    precision = [1.0]
    tp = fp = 0
    lab = pos[order]
    srt = scores[order]
    i = 0
    while i < len(srt):
        j = i
        while j < len(srt) and srt[j] == srt[i]:
            j += 1
        tp += int(lab[i:j].sum())
        fp += int(j - i - lab[i:j].sum())
        recall.append(tp / n_pos if n_pos else 0.0)
        precision.append(tp / (tp + fp))
        i = j
    return np.array(recall), np.array(precision)


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

@dataclass
class MetricResult:
    roc_aucs: list[float]
    pr_aucs: list[float]

    @property
    def roc_mean(self) -> float:
        return float(np.mean(self.roc_aucs))

    @property
    def roc_std(self) -> float:
        return float(np.std(self.roc_aucs, ddof=1)) if len(self.roc_aucs) > 1 else 0.0

    @property
    def pr_mean(self) -> float:
        return float(np.mean(self.pr_aucs))

    @property
    def pr_std(self) -> float:
        return float(np.std(self.pr_aucs, ddof=1)) if len(self.pr_aucs) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "per_fold": [
                {"fold": k, "roc_auc": r, "pr_auc": p}
                for k, (r, p) in enumerate(zip(self.roc_aucs, self.pr_aucs))
            ],
            "roc_auc_mean": self.roc_mean,
            "roc_auc_std": self.roc_std,
            "pr_auc_mean": self.pr_mean,
            "pr_auc_std": self.pr_std,
        }

    def summary(self) -> str:
        return (
            f"ROC-AUC {self.roc_mean:.3f}±{self.roc_std:.3f} "
            f"PR-AUC {self.pr_mean:.3f}±{self.pr_std:.3f}"
        )


def _fold_seed(base_seed: int, fold: int, salt: int) -> int:
    return int(np.random.SeedSequence([base_seed, fold, salt]).generate_state(1)[0])


def train_model(
    model_type: str,
    graph: KnowledgeGraph,
    model_config: ModelConfig,
    train_config: TrainConfig,
    *,
    train_pairs: np.ndarray | None = None,
) -> Checkpoint:
    """Dispatch to the convolution model or a baseline by model type tag."""
    if model_type == "graphix":
        return train(graph, model_config, train_config, train_pairs=train_pairs)
    from .baselines import train_baseline

    return train_baseline(model_type, graph, model_config, train_config, train_pairs=train_pairs)


def cross_validate(
    graph: KnowledgeGraph,
    model_type: str,
    model_config: ModelConfig,
    train_config: TrainConfig,
    fold_plan: FoldPlan,
) -> tuple[MetricResult, list[dict]]:
    """Per-fold train/holdout evaluation with fresh kind-matched negatives.

    Each fold trains on the remaining positives, then scores the held-out
    positives against an equal number of negatives sampled with a
    fold-derived seed (excluding every known positive). Returns the metric
    aggregate plus per-fold details (scores, labels, loss history) for
    reporting.
    """
    from .model import sample_negatives

    positives = graph.positive_pairs
    results_roc: list[float] = []
    results_pr: list[float] = []
    details: list[dict] = []
    for fold in range(fold_plan.n_folds):
        held = positives[fold_plan.assignments == fold]
        train_pairs = positives[fold_plan.assignments != fold]
        cfg = replace(model_config, seed=_fold_seed(model_config.seed, fold, 11))
        try:
            ckpt = train_model(model_type, graph, cfg, train_config, train_pairs=train_pairs)
        except Exception as exc:
            raise RuntimeError(f"training failed in fold {fold}: {exc}") from exc
        neg_rng = np.random.default_rng([fold_plan.seed, fold, 23])
        negs = sample_negatives(graph, held, neg_rng)
        scores = np.concatenate([
            checkpoint_scores(graph, ckpt, held),
            checkpoint_scores(graph, ckpt, negs),
        ])
        labels = np.concatenate([np.ones(len(held), dtype=np.int64), np.zeros(len(negs), dtype=np.int64)])
        results_roc.append(roc_auc(scores, labels))
        results_pr.append(pr_auc(scores, labels))
        details.append({
            "fold": fold,
            "scores": scores,
            "labels": labels,
            "loss_history": ckpt.loss_history,
        })
    return MetricResult(results_roc, results_pr), details


def shuffled_label_control(details: list[dict], seed: int) -> list[float]:
    """Per-fold ROC-AUC after permuting labels; sanity level is ~0.5."""
    rng = np.random.default_rng([seed, 77])
    out = []
    for d in details:
        out.append(roc_auc(d["scores"], rng.permutation(d["labels"])))
    return out


# ---------------------------------------------------------------------------
# MeSH-expansion score averaging
# ---------------------------------------------------------------------------

def mesh_averaged_scores(
    model_scores: dict[tuple[str, str], float],
    disease_groups: dict[str, set[str]],
) -> dict[tuple[str, str], float]:
    """Average per-tree-number edge scores back onto each disease label."""
    out: dict[tuple[str, str], float] = {}
    for label, codes in disease_groups.items():
        if not codes:
            raise MetricError(f"disease group {label!r} is empty")
        drugs = {drug for (code, drug) in model_scores if code in codes}
        for drug in sorted(drugs):
            vals = []
            for code in sorted(codes):
                if (code, drug) not in model_scores:
                    raise MetricError(f"missing score for tree number {code!r} with drug {drug!r}")
                vals.append(model_scores[(code, drug)])
            out[(label, drug)] = float(np.mean(vals))
    return out


# ---------------------------------------------------------------------------
# Explainability verification (known-target protocol)
# ---------------------------------------------------------------------------

@dataclass
class EvalRecord:
    disease: int
    drug: int
    known_targets: set[int]
    n_candidates: int
    target_ranks: list[int]  # ranks of each known target found among candidates
    hit_at_1: bool

    @property
    def target_rank(self) -> int:
        return min(self.target_ranks)


def explainability_eval(
    graph: KnowledgeGraph,
    ckpt: Checkpoint,
    records: list[tuple[str, str, set[str]]],
    *,
    steps: int = 30,
    positive_filter: str = "median",
) -> dict:
    """Check whether the top-contribution gene matches known target proteins.

    ``records`` are (disease label, drug label, target gene labels). A record
    is evaluated only when both endpoints resolve, the edge clears the
    predicted-positive filter (score above the median of the known-positive
    scores; pass ``positive_filter='none'`` to disable), and at least one
    known target lies within the attribution hop limit. Everything else is
    skipped with a reason. Rows mirror the verification-table shape:
    candidate count, rank of each known target, top-1 hit.
    """
    if positive_filter not in ("median", "none"):
        raise ValueError(f"unknown positive_filter {positive_filter!r}")
    threshold = None
    if positive_filter == "median":
        threshold = float(np.median(checkpoint_scores(graph, ckpt, graph.positive_pairs)))

    rows: list[dict] = []
    skipped: list[dict] = []
    evaluated: list[EvalRecord] = []
    ig_samples: list[dict] = []
    for disease_label, drug_label, target_labels in records:
        d = graph.node_id(disease_label)
        c = graph.node_id(drug_label)
        if d is None or c is None:
            skipped.append({
                "disease": disease_label,
                "drug": drug_label,
                "reason": "unknown_disease" if d is None else "unknown_drug",
            })
            continue
        targets = {graph.node_id(t) for t in target_labels}
        targets.discard(None)
        if not targets:
            skipped.append({"disease": disease_label, "drug": drug_label, "reason": "unknown_targets"})
            continue
        if threshold is not None:
            edge_score = float(checkpoint_scores(graph, ckpt, np.array([[d, c]]))[0])
            if not edge_score > threshold:
                skipped.append({"disease": disease_label, "drug": drug_label, "reason": "not_predicted_positive"})
                continue
        request = AttributionRequest(edge=(d, c), steps=steps, hop_limit=ckpt.config.n_layers)
        report = attribute_checkpoint(graph, ckpt, request)
        ig_samples.extend(
            {"kind": c2.kind.label, "ig": c2.ig, "endpoint": c2.node_id in (d, c)}
            for c2 in report.contributions
        )
        ranked = rank_proteins(report)
        rank_by_node = {nid: pos + 1 for pos, (nid, _) in enumerate(ranked)}
        ranks = sorted(rank_by_node[t] for t in targets if t in rank_by_node)
        if not ranks:
            skipped.append({
                "disease": disease_label,
                "drug": drug_label,
                "reason": "target_not_within_hops",
            })
            continue
        record = EvalRecord(
            disease=d,
            drug=c,
            known_targets={int(t) for t in targets},
            n_candidates=len(ranked),
            target_ranks=ranks,
            hit_at_1=ranks[0] == 1,
        )
        evaluated.append(record)
        rows.append({
            "disease": disease_label,
            "drug": drug_label,
            "targets": sorted(target_labels),
            "n_candidates": record.n_candidates,
            "target_ranks": record.target_ranks,
            "hit_at_1": record.hit_at_1,
        })
    hits = sum(r.hit_at_1 for r in evaluated)
    total = len(evaluated)
    return {
        "rows": rows,
        "skipped": skipped,
        "hits_at_1": hits,
        "evaluated": total,
        "accuracy": (hits / total) if total else None,
        "ig_samples": ig_samples,
    }


# ---------------------------------------------------------------------------
# Synthetic planted-association benchmark
# ---------------------------------------------------------------------------

@dataclass
class SyntheticSpec:
    n_disease: int
    n_drug: int
    n_gene: int
    mediator_fraction: float = 1.0
    noise_edges: float = 0.0
    seed: int = 0
    n_groups: int | None = None

    def validate(self) -> None:
        if min(self.n_disease, self.n_drug, self.n_gene) < 2:
            raise GraphBuildError("synthetic spec needs at least 2 nodes of each kind")
        if not (0.0 <= self.mediator_fraction <= 1.0):
            raise GraphBuildError("mediator_fraction must be in [0, 1]")
        if self.noise_edges < 0:
            raise GraphBuildError("noise_edges must be >= 0")


@dataclass
class SyntheticTruth:
    positives: np.ndarray  # (P, 2) oriented (disease, drug)
    mediators: dict[tuple[int, int], int]  # positive pair -> planted gene
    negatives: np.ndarray  # sampled non-positive, non-mediated pairs
    mediator_genes: list[int] = field(default_factory=list)


def generate_synthetic(spec: SyntheticSpec) -> tuple[KnowledgeGraph, SyntheticTruth]:
    """Planted disease-drug benchmark with known mediator genes.

    Diseases and drugs are split into kind-matched groups; every within-group
    pair is a positive, and a configurable fraction of positives is mediated
    by the group's designated gene (disease-gene and gene-drug edges). Chains
    over the disease-disease and gene-gene relations plus anchor edges for
    gene-less drugs keep the graph connected; uniform noise edges are added
    per relation on top.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_groups = spec.n_groups or max(2, min(spec.n_disease, spec.n_drug) // 10)
    n_groups = min(n_groups, spec.n_disease, spec.n_drug, spec.n_gene)

    table = LabelTable()
    dis = [table.intern(f"dis{v:04d}", NodeKind.DISEASE) for v in range(spec.n_disease)]
    drg = [table.intern(f"drg{v:04d}", NodeKind.DRUG) for v in range(spec.n_drug)]
    gen = [table.intern(f"gen{v:04d}", NodeKind.GENE) for v in range(spec.n_gene)]

    group_of_dis = {d: k % n_groups for k, d in enumerate(dis)}
    group_of_drg = {c: k % n_groups for k, c in enumerate(drg)}
    mediator_genes = [gen[g] for g in rng.choice(spec.n_gene, size=n_groups, replace=False)]

    positives = [
        (d, c)
        for d in dis
        for c in drg
        if group_of_dis[d] == group_of_drg[c]
    ]
    mediated = rng.random(len(positives)) < spec.mediator_fraction
    mediators: dict[tuple[int, int], int] = {}
    dg_edges: set[tuple[int, int]] = set()
    gd_edges: set[tuple[int, int]] = set()
    for (d, c), is_med in zip(positives, mediated):
        if not is_med:
            continue
        g = mediator_genes[group_of_dis[d]]
        mediators[(d, c)] = g
        dg_edges.add((d, g))
        gd_edges.add((g, c))

    dd_edges = {(dis[k], dis[k + 1]) for k in range(spec.n_disease - 1)}
    gg_edges = {(gen[k], gen[k + 1]) for k in range(spec.n_gene - 1)}

    non_mediators = [g for g in gen if g not in set(mediator_genes)] or list(gen)
    for c in drg:
        if not any(e[1] == c for e in gd_edges):
            anchor = non_mediators[int(rng.integers(len(non_mediators)))]
            gd_edges.add((anchor, c))

    def add_noise(existing: set[tuple[int, int]], left: list[int], right: list[int], same_kind: bool) -> None:
        n_noise = int(round(spec.noise_edges * len(existing)))
        if n_noise == 0:
            return
        max_pairs = (len(left) * (len(left) - 1)) // 2 if same_kind else len(left) * len(right)
        if len(existing) + n_noise > max_pairs:
            raise GraphBuildError("noise edge count exceeds the number of possible pairs")
        taken = {tuple(sorted(e)) if same_kind else e for e in existing}
        added = 0
        while added < n_noise:
            i = left[int(rng.integers(len(left)))]
            j = right[int(rng.integers(len(right)))]
            if i == j:
                continue
            key = (min(i, j), max(i, j)) if same_kind else (i, j)
            if key in taken:
                continue
            taken.add(key)
            existing.add(key)
            added += 1

    add_noise(dd_edges, dis, dis, True)
    add_noise(gg_edges, gen, gen, True)
    add_noise(dg_edges, dis, gen, False)
    add_noise(gd_edges, gen, drg, False)

    edge_lists = [
        EdgeList(RelationKind.DISEASE_DISEASE, sorted(dd_edges)),
        EdgeList(RelationKind.DISEASE_GENE, sorted(dg_edges)),
        EdgeList(RelationKind.GENE_GENE, sorted(gg_edges)),
        EdgeList(RelationKind.GENE_DRUG, sorted(gd_edges)),
        EdgeList(RelationKind.DISEASE_DRUG, sorted(positives)),
    ]
    graph, _report = assemble(edge_lists, table, RelationKind.DISEASE_DRUG)
    if graph.n_nodes != len(table):
        raise GraphBuildError("synthetic graph lost nodes to component extraction; construction bug")

    pos_set = set(positives)
    negatives: set[tuple[int, int]] = set()
    max_available = spec.n_disease * spec.n_drug - len(pos_set)
    want = min(len(positives), max_available)
    while len(negatives) < want:
        d = dis[int(rng.integers(spec.n_disease))]
        c = drg[int(rng.integers(spec.n_drug))]
        if (d, c) in pos_set or (d, c) in negatives:
            continue
        negatives.add((d, c))

    truth = SyntheticTruth(
        positives=np.array(sorted(pos_set), dtype=np.int64).reshape(-1, 2),
        mediators=mediators,
        negatives=np.array(sorted(negatives), dtype=np.int64).reshape(-1, 2),
        mediator_genes=mediator_genes,
    )
    return graph, truth


# ---------------------------------------------------------------------------
# Feature export
# ---------------------------------------------------------------------------

def export_embeddings(graph: KnowledgeGraph, ckpt: Checkpoint, path: str | Path) -> None:
    """One CSV row per node: label, kind, learned feature values (17 sig digits)."""
    X = ckpt.params.X0 if ckpt.model_type == "graphix" else ckpt.params.entity
    if X.shape[0] != graph.n_nodes:
        raise MetricError("checkpoint feature count does not match the graph")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "kind"] + [f"f{k}" for k in range(X.shape[1])])
        for idx in range(graph.n_nodes):
            row = [graph.labels[idx], NodeKind(int(graph.kinds[idx])).label]
            row.extend(f"{v:.17g}" for v in X[idx])
            writer.writerow(row)

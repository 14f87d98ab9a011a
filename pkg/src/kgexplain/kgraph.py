"""Typed multi-relational graph construction for disease/drug/gene networks.

Builds per-relation sparse symmetric adjacency from TSV edge lists, applies
the MeSH tree-number normalization rules (expansion, upward-edge pruning,
tree-derived disease-disease edges), and extracts the largest connected
component of the merged message-passing relations. The prediction-target
relation is held out of every adjacency matrix and kept as labeled pairs.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .container import read_container, write_container

log = logging.getLogger(__name__)


class GraphBuildError(ValueError):
    """Fatal graph-construction failure (bad inputs, empty graph, ...)."""


class ParseError(GraphBuildError):
    """Malformed edge or mapping file; message carries the line number."""


class NodeKind(IntEnum):
    DISEASE = 0
    DRUG = 1
    GENE = 2

    @property
    def label(self) -> str:
        return self.name.lower()


KIND_BY_NAME = {k.label: k for k in NodeKind}


class RelationKind(Enum):
    DISEASE_DISEASE = "disease_disease"
    DISEASE_GENE = "disease_gene"
    GENE_GENE = "gene_gene"
    GENE_DRUG = "gene_drug"
    DISEASE_DRUG = "disease_drug"
    SELF_LOOP = "self_loop"

    @property
    def signature(self) -> tuple[NodeKind, NodeKind]:
        return _SIGNATURES[self]


_SIGNATURES = {
    RelationKind.DISEASE_DISEASE: (NodeKind.DISEASE, NodeKind.DISEASE),
    RelationKind.DISEASE_GENE: (NodeKind.DISEASE, NodeKind.GENE),
    RelationKind.GENE_GENE: (NodeKind.GENE, NodeKind.GENE),
    RelationKind.GENE_DRUG: (NodeKind.GENE, NodeKind.DRUG),
    RelationKind.DISEASE_DRUG: (NodeKind.DISEASE, NodeKind.DRUG),
}

# Relations usable as message-passing or prediction targets, in canonical order.
ASSOCIATION_RELATIONS = (
    RelationKind.DISEASE_DISEASE,
    RelationKind.DISEASE_GENE,
    RelationKind.GENE_GENE,
    RelationKind.GENE_DRUG,
    RelationKind.DISEASE_DRUG,
)


class LabelTable:
    """Bijective label <-> dense-id table with per-node kinds."""

    def __init__(self) -> None:
        self.labels: list[str] = []
        self.kinds: list[NodeKind] = []
        self._index: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.labels)

    def intern(self, label: str, kind: NodeKind) -> int:
        idx = self._index.get(label)
        if idx is None:
            idx = len(self.labels)
            self.labels.append(label)
            self.kinds.append(kind)
            self._index[label] = idx
        elif self.kinds[idx] != kind:
            raise GraphBuildError(
                f"label {label!r} used both as {self.kinds[idx].label} and as {kind.label}"
            )
        return idx

    def get(self, label: str) -> int | None:
        return self._index.get(label)


@dataclass
class EdgeList:
    """Deduplicated undirected pairs of node ids under one relation."""

    relation: RelationKind
    pairs: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)


def _canonical_pair(relation: RelationKind, i: int, j: int, kinds: list[NodeKind]) -> tuple[int, int]:
    ka, kb = relation.signature
    if ka == kb:
        return (i, j) if i < j else (j, i)
    if kinds[i] == ka:
        return (i, j)
    return (j, i)


def parse_edge_file(path: str | Path, relation: RelationKind, table: LabelTable) -> EdgeList:
    """Parse a tab-separated ``source<TAB>target`` edge file.

    ``#``-prefixed lines are comments. Pairs are deduplicated as unordered
    pairs; self-pairs are rejected with a warning. Unknown labels are interned
    into ``table`` with kinds taken from the relation signature.
    """
    if relation is RelationKind.SELF_LOOP:
        raise GraphBuildError("self-loop adjacency is implicit and never parsed from a file")
    ka, kb = relation.signature
    pairs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    n_lines = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}")
            src, dst = fields
            if not src or not dst:
                raise ParseError(f"{path}:{lineno}: empty label")
            n_lines += 1
            i = table.intern(src, ka)
            j = table.intern(dst, kb)
            if i == j:
                log.warning("%s:%d: self-pair %r rejected for relation %s", path, lineno, src, relation.value)
                continue
            key = (i, j) if i < j else (j, i)
            if key in seen:
                continue
            seen.add(key)
            pairs.append(_canonical_pair(relation, i, j, table.kinds))
    if n_lines == 0:
        raise ParseError(f"{path}: no edges found")
    return EdgeList(relation, pairs)


# ---------------------------------------------------------------------------
# MeSH tree-number rules
# ---------------------------------------------------------------------------

def parse_mesh_mapping(path: str | Path) -> dict[str, set[str]]:
    """Read a ``label<TAB>tree_number`` TSV into label -> set of codes."""
    mapping: dict[str, set[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}")
            mapping.setdefault(fields[0], set()).add(fields[1])
    return mapping


def mesh_expand(disease_label: str, mapping: dict[str, set[str]]) -> set[str]:
    """All tree numbers for a disease label; empty set when unmapped."""
    return set(mapping.get(disease_label, ()))


def _segments(code: str) -> tuple[str, ...]:
    return tuple(code.split("."))


def _parent_code(code: str) -> str | None:
    head, sep, _ = code.rpartition(".")
    return head if sep else None


def _is_proper_ancestor(ancestor: str, code: str) -> bool:
    a, c = _segments(ancestor), _segments(code)
    return len(a) < len(c) and c[: len(a)] == a


def mesh_tree_edges(codes: set[str], table: LabelTable) -> EdgeList:
    """Disease-disease edges linking each code to its immediate present parent.

    Only direct child->parent edges are emitted; no transitive closure.
    """
    if not codes:
        raise GraphBuildError("mesh_tree_edges requires a non-empty code set")
    pairs: list[tuple[int, int]] = []
    for code in sorted(codes):
        parent = _parent_code(code)
        if parent is not None and parent in codes:
            i = table.intern(code, NodeKind.DISEASE)
            j = table.intern(parent, NodeKind.DISEASE)
            pairs.append((i, j) if i < j else (j, i))
    return EdgeList(RelationKind.DISEASE_DISEASE, pairs)


def prune_upward_disease_gene(edges: EdgeList, table: LabelTable) -> EdgeList:
    """Drop disease-gene edges whose disease is an ancestor of another linked code.

    When a gene links to both a code and one of its tree ancestors, only the
    most specific edge on that branch survives. Idempotent.
    """
    if edges.relation is not RelationKind.DISEASE_GENE:
        raise GraphBuildError("upward pruning applies to disease-gene edges only")
    by_gene: dict[int, list[tuple[str, int]]] = {}
    for d, g in edges.pairs:
        by_gene.setdefault(g, []).append((table.labels[d], d))
    kept: list[tuple[int, int]] = []
    for d, g in edges.pairs:
        code = table.labels[d]
        # ancestor iff some other code of this gene extends ours segment-wise
        shadowed = any(
            other != code and _is_proper_ancestor(code, other) for other, _ in by_gene[g]
        )
        if not shadowed:
            kept.append((d, g))
    return EdgeList(RelationKind.DISEASE_GENE, kept)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

@dataclass
class KnowledgeGraph:
    """Immutable typed graph with per-relation sparse symmetric adjacency.

    ``adjacency`` maps every message-passing relation (self-loop included) to
    an N x N CSR 0/1 matrix. Target-relation pairs live only in
    ``positive_pairs`` and never enter any adjacency matrix.
    """

    n_nodes: int
    kinds: np.ndarray  # uint8, NodeKind values
    labels: tuple[str, ...]
    target_relation: RelationKind
    message_relations: tuple[RelationKind, ...]  # self-loop last
    adjacency: dict[RelationKind, sp.csr_array]
    edges: dict[RelationKind, np.ndarray]  # (E, 2) int64, canonical rows
    positive_pairs: np.ndarray  # (P, 2) int64, oriented by target signature

    def __post_init__(self) -> None:
        self._label_to_id = {lab: i for i, lab in enumerate(self.labels)}
        self._union = None
        self._kind_ids = None

    def node_id(self, label: str) -> int | None:
        return self._label_to_id.get(label)

    def nodes_of_kind(self, kind: NodeKind) -> np.ndarray:
        if self._kind_ids is None:
            self._kind_ids = {k: np.flatnonzero(self.kinds == int(k)) for k in NodeKind}
        return self._kind_ids[kind]

    def union_adjacency(self) -> sp.csr_array:
        """0/1 union of all message-passing relations, self-loop excluded."""
        if self._union is None:
            n = self.n_nodes
            acc = sp.csr_array((n, n), dtype=np.float64)
            for rel in self.message_relations:
                if rel is RelationKind.SELF_LOOP:
                    continue
                acc = acc + self.adjacency[rel]
            acc.data = np.ones_like(acc.data)
            self._union = acc
        return self._union

    def positive_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.positive_pairs}

    def content_digest(self) -> str:
        """Order-independent-of-nothing digest: any content change alters it."""
        h = hashlib.sha256()
        h.update(f"n={self.n_nodes};target={self.target_relation.value}".encode())
        h.update("\x00".join(self.labels).encode("utf-8"))
        h.update(self.kinds.astype(np.uint8).tobytes())
        for rel in self.message_relations:
            h.update(rel.value.encode())
            h.update(np.ascontiguousarray(self.edges.get(rel, np.empty((0, 2), np.int64)), dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.positive_pairs, dtype=np.int64).tobytes())
        return h.hexdigest()


def _edges_to_csr(n: int, pairs: np.ndarray) -> sp.csr_array:
    if len(pairs) == 0:
        return sp.csr_array((n, n), dtype=np.float64)
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    data = np.ones(len(rows), dtype=np.float64)
    mat = sp.coo_array((data, (rows, cols)), shape=(n, n)).tocsr()
    mat.data = np.ones_like(mat.data)  # collapse accidental duplicates
    return mat


def _identity_csr(n: int) -> sp.csr_array:
    return sp.csr_array(sp.eye(n, format="csr", dtype=np.float64))


def _largest_component_mask(n: int, pairs: np.ndarray) -> tuple[np.ndarray, int]:
    union = _edges_to_csr(n, pairs)
    n_comp, assignment = connected_components(union, directed=False)
    sizes = np.bincount(assignment, minlength=n_comp)
    keep = assignment == int(np.argmax(sizes))
    return keep, int(n_comp)


def assemble(
    edge_lists: list[EdgeList],
    table: LabelTable,
    target: RelationKind,
    *,
    per_relation_components: bool = False,
) -> tuple[KnowledgeGraph, dict]:
    """Merge relations, keep the largest connected component, hold out targets.

    Message-passing relations are the non-target lists; their undirected union
    defines the connected component that survives. Target pairs are restricted
    to surviving nodes and become the positive supervision set. With
    ``per_relation_components`` each relation is first restricted to its own
    largest component before merging (sensitivity-study mode).
    """
    if not any(el.relation is target for el in edge_lists):
        raise GraphBuildError(f"target relation {target.value} missing from edge lists")
    if not any(el.relation is not target for el in edge_lists):
        raise GraphBuildError("at least one non-target relation is required")

    n_all = len(table)
    merged: dict[RelationKind, set[tuple[int, int]]] = {}
    n_dupes = 0
    for el in edge_lists:
        bucket = merged.setdefault(el.relation, set())
        for i, j in el.pairs:
            key = (i, j) if i < j else (j, i)
            if key in bucket:
                n_dupes += 1
            else:
                bucket.add(key)
    if n_dupes:
        log.info("collapsed %d duplicate edges across input lists", n_dupes)

    def pairs_array(rel: RelationKind) -> np.ndarray:
        arr = np.array(sorted(merged.get(rel, ())), dtype=np.int64).reshape(-1, 2)
        return arr

    message_rels = [r for r in ASSOCIATION_RELATIONS if r is not target and r in merged]
    if per_relation_components:
        for rel in message_rels:
            arr = pairs_array(rel)
            keep, _ = _largest_component_mask(n_all, arr)
            merged[rel] = {(int(i), int(j)) for i, j in arr if keep[i] and keep[j]}

    union_pairs = np.concatenate([pairs_array(r) for r in message_rels]) if message_rels else np.empty((0, 2), np.int64)
    if len(union_pairs) == 0:
        raise GraphBuildError("merged message-passing graph is empty")
    keep_mask, n_components = _largest_component_mask(n_all, union_pairs)
    if not keep_mask.any():
        raise GraphBuildError("merged message-passing graph is empty")

    old_to_new = -np.ones(n_all, dtype=np.int64)
    survivors = np.flatnonzero(keep_mask)
    old_to_new[survivors] = np.arange(len(survivors))
    n = len(survivors)
    kinds = np.array([int(table.kinds[i]) for i in survivors], dtype=np.uint8)
    labels = tuple(table.labels[i] for i in survivors)

    edges: dict[RelationKind, np.ndarray] = {}
    adjacency: dict[RelationKind, sp.csr_array] = {}
    for rel in message_rels:
        arr = pairs_array(rel)
        sub = arr[keep_mask[arr[:, 0]] & keep_mask[arr[:, 1]]]
        remapped = old_to_new[sub]
        remapped = np.sort(remapped, axis=1)
        order = np.lexsort((remapped[:, 1], remapped[:, 0]))
        edges[rel] = remapped[order]
        adjacency[rel] = _edges_to_csr(n, edges[rel])
    adjacency[RelationKind.SELF_LOOP] = _identity_csr(n)

    target_arr = pairs_array(target)
    kept_targets = target_arr[keep_mask[target_arr[:, 0]] & keep_mask[target_arr[:, 1]]] if len(target_arr) else target_arr
    dropped_positives = len(target_arr) - len(kept_targets)
    if len(kept_targets) == 0:
        raise GraphBuildError("all target-relation pairs were dropped by component restriction")
    positives = old_to_new[kept_targets]
    ka, _ = target.signature
    flip = kinds[positives[:, 0]] != int(ka)
    positives[flip] = positives[flip][:, ::-1]
    if ka == target.signature[1]:
        positives = np.sort(positives, axis=1)
    order = np.lexsort((positives[:, 1], positives[:, 0]))
    positives = positives[order]

    graph = KnowledgeGraph(
        n_nodes=n,
        kinds=kinds,
        labels=labels,
        target_relation=target,
        message_relations=tuple(message_rels) + (RelationKind.SELF_LOOP,),
        adjacency=adjacency,
        edges=edges,
        positive_pairs=positives,
    )
    report = {
        "n_nodes": n,
        "nodes_by_kind": {k.label: int((kinds == int(k)).sum()) for k in NodeKind},
        "positives": int(len(positives)),
        "target_relation": target.value,
        "edges_by_relation": {r.value: int(len(edges[r])) for r in message_rels},
        "n_components_merged": n_components,
        "dropped_nodes": int(n_all - n),
        "dropped_positives": int(dropped_positives),
        "duplicate_edges_removed": int(n_dupes),
    }
    return graph, report


def adjacency_matvec(graph: KnowledgeGraph, relation: RelationKind, X: np.ndarray) -> np.ndarray:
    """Row i of the result sums X over i's neighbors under ``relation``."""
    if X.shape[0] != graph.n_nodes:
        raise GraphBuildError(f"feature matrix has {X.shape[0]} rows, graph has {graph.n_nodes} nodes")
    return graph.adjacency[relation] @ X


# ---------------------------------------------------------------------------
# Bundle serialization
# ---------------------------------------------------------------------------

def save_bundle(graph: KnowledgeGraph, path: str | Path, *, manifest_digest: str = "") -> None:
    meta = {
        "labels": list(graph.labels),
        "target_relation": graph.target_relation.value,
        "message_relations": [r.value for r in graph.message_relations],
        "manifest_digest": manifest_digest,
        "content_digest": graph.content_digest(),
    }
    arrays = {"kinds": graph.kinds.astype(np.uint8), "positives": graph.positive_pairs.astype(np.int64)}
    for rel in graph.message_relations:
        if rel is RelationKind.SELF_LOOP:
            continue
        arrays[f"edges.{rel.value}"] = graph.edges[rel].astype(np.int64)
    write_container(path, "graph_bundle", meta, arrays)


def load_bundle(path: str | Path) -> KnowledgeGraph:
    meta, arrays = read_container(path, expected_kind="graph_bundle")
    labels = tuple(meta["labels"])
    n = len(labels)
    kinds = arrays["kinds"].astype(np.uint8)
    message_rels = tuple(RelationKind(v) for v in meta["message_relations"])
    edges = {}
    adjacency = {}
    for rel in message_rels:
        if rel is RelationKind.SELF_LOOP:
            adjacency[rel] = _identity_csr(n)
            continue
        arr = arrays[f"edges.{rel.value}"].astype(np.int64).reshape(-1, 2)
        edges[rel] = arr
        adjacency[rel] = _edges_to_csr(n, arr)
    graph = KnowledgeGraph(
        n_nodes=n,
        kinds=kinds,
        labels=labels,
        target_relation=RelationKind(meta["target_relation"]),
        message_relations=message_rels,
        adjacency=adjacency,
        edges=edges,
        positive_pairs=arrays["positives"].astype(np.int64).reshape(-1, 2),
    )
    if graph.content_digest() != meta["content_digest"]:
        raise GraphBuildError(f"{path}: bundle content does not match its recorded digest")
    return graph


# ---------------------------------------------------------------------------
# Manifest-driven build (CLI entry)
# ---------------------------------------------------------------------------

def build_from_manifest(manifest: dict, base_dir: str | Path = ".") -> tuple[KnowledgeGraph, dict]:
    """Build a graph from a manifest: relation -> file path, plus target name.

    Manifest keys: ``edges`` (mapping relation name -> TSV path), ``target``
    (relation name), optional ``mesh_mapping`` (label<TAB>tree_number TSV),
    optional ``prune_upward`` (default true when a mapping is given) and
    ``per_relation_components`` (default false). Relative paths resolve
    against ``base_dir``.
    """
    base = Path(base_dir)
    try:
        target = RelationKind(manifest["target"])
    except (KeyError, ValueError) as exc:
        raise GraphBuildError(f"manifest: bad or missing target relation ({exc})") from exc
    if "edges" not in manifest or not isinstance(manifest["edges"], dict):
        raise GraphBuildError("manifest: missing 'edges' mapping")

    mapping: dict[str, set[str]] | None = None
    if manifest.get("mesh_mapping"):
        mapping = parse_mesh_mapping(base / manifest["mesh_mapping"])

    table = LabelTable()
    edge_lists: list[EdgeList] = []
    skipped: list[str] = []
    codes_seen: set[str] = set()
    for rel_name in sorted(manifest["edges"]):
        rel = RelationKind(rel_name)
        path = base / manifest["edges"][rel_name]
        if not path.exists():
            raise GraphBuildError(f"edge file not found: {path}")
        el = parse_edge_file(path, rel, table)
        if mapping is not None and NodeKind.DISEASE in rel.signature:
            el = _expand_disease_endpoints(el, table, mapping, skipped, codes_seen)
        edge_lists.append(el)

    if mapping is not None and codes_seen:
        if target is RelationKind.DISEASE_DISEASE:
            raise GraphBuildError(
                "tree-derived disease-disease edges conflict with a disease_disease target relation"
            )
        edge_lists.append(mesh_tree_edges(codes_seen, table))
        prune = manifest.get("prune_upward", True)
        if prune:
            for idx, el in enumerate(edge_lists):
                if el.relation is RelationKind.DISEASE_GENE and el.relation is not target:
                    edge_lists[idx] = prune_upward_disease_gene(el, table)

    graph, report = assemble(
        edge_lists,
        table,
        target,
        per_relation_components=bool(manifest.get("per_relation_components", False)),
    )
    report["skipped_labels"] = sorted(set(skipped))
    return graph, report


def _expand_disease_endpoints(
    el: EdgeList,
    table: LabelTable,
    mapping: dict[str, set[str]],
    skipped: list[str],
    codes_seen: set[str],
) -> EdgeList:
    ka, kb = el.relation.signature
    out: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()

    def expand(node: int) -> list[int]:
        label = table.labels[node]
        codes = mesh_expand(label, mapping)
        if not codes:
            skipped.append(label)
            return []
        codes_seen.update(codes)
        return [table.intern(code, NodeKind.DISEASE) for code in sorted(codes)]

    for i, j in el.pairs:
        lefts = expand(i) if ka == NodeKind.DISEASE else [i]
        rights = expand(j) if kb == NodeKind.DISEASE else [j]
        for a in lefts:
            for b in rights:
                if a == b:
                    continue
                key = (a, b) if a < b else (b, a)
                if key not in seen:
                    seen.add(key)
                    out.append(_canonical_pair(el.relation, a, b, table.kinds))
    return EdgeList(el.relation, out)

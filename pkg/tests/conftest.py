import numpy as np
import pytest

from kgexplain.kgraph import (
    EdgeList,
    KnowledgeGraph,
    LabelTable,
    NodeKind,
    RelationKind,
    assemble,
)


def make_random_graph(seed: int, n_disease=4, n_drug=4, n_gene=6, extra_edges=6, n_targets=4):
    """Small connected random graph with all four association relations.

    Chains over the same-kind relations plus one gene-drug edge per drug keep
    everything in one component; extra edges are sprinkled uniformly.
    """
    rng = np.random.default_rng(seed)
    table = LabelTable()
    dis = [table.intern(f"d{i}", NodeKind.DISEASE) for i in range(n_disease)]
    drg = [table.intern(f"c{i}", NodeKind.DRUG) for i in range(n_drug)]
    gen = [table.intern(f"g{i}", NodeKind.GENE) for i in range(n_gene)]

    dd = {(dis[i], dis[i + 1]) for i in range(n_disease - 1)}
    gg = {(gen[i], gen[i + 1]) for i in range(n_gene - 1)}
    gd = {(gen[int(rng.integers(n_gene))], c) for c in drg}
    dg = {(dis[int(rng.integers(n_disease))], gen[int(rng.integers(n_gene))]) for _ in range(3)}

    buckets = {
        RelationKind.DISEASE_DISEASE: (dd, dis, dis, True),
        RelationKind.DISEASE_GENE: (dg, dis, gen, False),
        RelationKind.GENE_GENE: (gg, gen, gen, True),
        RelationKind.GENE_DRUG: (gd, gen, drg, False),
    }
    for _ in range(extra_edges):
        rel = list(buckets)[int(rng.integers(len(buckets)))]
        edges, left, right, same = buckets[rel]
        i = left[int(rng.integers(len(left)))]
        j = right[int(rng.integers(len(right)))]
        if i == j:
            continue
        edges.add((min(i, j), max(i, j)) if same else (i, j))

    targets = set()
    tries = 0
    while len(targets) < n_targets and tries < 200:
        tries += 1
        targets.add((dis[int(rng.integers(n_disease))], drg[int(rng.integers(n_drug))]))

    edge_lists = [EdgeList(rel, sorted(edges)) for rel, (edges, *_rest) in buckets.items()]
    edge_lists.append(EdgeList(RelationKind.DISEASE_DRUG, sorted(targets)))
    graph, _ = assemble(edge_lists, table, RelationKind.DISEASE_DRUG)
    return graph


def single_node_graph() -> KnowledgeGraph:
    """One disease node with only the self-connection relation."""
    import scipy.sparse as sp

    eye = sp.csr_array(sp.eye(1, format="csr", dtype=np.float64))
    return KnowledgeGraph(
        n_nodes=1,
        kinds=np.array([int(NodeKind.DISEASE)], dtype=np.uint8),
        labels=("d0",),
        target_relation=RelationKind.DISEASE_DRUG,
        message_relations=(RelationKind.SELF_LOOP,),
        adjacency={RelationKind.SELF_LOOP: eye},
        edges={},
        positive_pairs=np.empty((0, 2), dtype=np.int64),
    )


def dense_forward(graph, params, config):
    """Dense-arithmetic reference for the sparse forward pass (test oracle)."""
    mats = []
    for rel in graph.message_relations:
        A = graph.adjacency[rel].toarray()
        if config.normalize_adjacency:
            deg = A.sum(axis=1)
            with np.errstate(divide="ignore"):
                dinv = 1.0 / np.sqrt(deg)
            dinv[~np.isfinite(dinv)] = 0.0
            A = np.diag(dinv) @ A @ np.diag(dinv)
        mats.append(A)
    X = params.X0
    for W_layer in params.W:
        Z = np.zeros((X.shape[0], W_layer.shape[2]))
        for r, A in enumerate(mats):
            Z += A @ X @ W_layer[r]
        X = np.tanh(Z)
    return X


def brute_force_roc(scores, labels) -> float:
    """Independent pair-counting estimator for the ranking probability."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (len(pos) * len(neg)))


@pytest.fixture(scope="session")
def trained_setup():
    """Synthetic mediator graph plus a trained checkpoint, shared across tests."""
    from kgexplain.evaluation import SyntheticSpec, generate_synthetic
    from kgexplain.model import ModelConfig, TrainConfig, train

    spec = SyntheticSpec(
        n_disease=15, n_drug=15, n_gene=30, mediator_fraction=0.9, noise_edges=0.2, seed=5
    )
    graph, truth = generate_synthetic(spec)
    ckpt = train(
        graph,
        ModelConfig(embed_dim=16, out_dim=16, seed=1),
        TrainConfig(epochs=40, learning_rate=3e-3),
    )
    return graph, truth, ckpt

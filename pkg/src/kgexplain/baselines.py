"""TransE and DistMult comparison models over the target relation.

Both score target-kind pairs from entity embeddings plus one shared relation
vector; message-passing relations are unused. They plug into the same
training loop, negative sampler and evaluation pipeline as the convolution
model, with higher-is-better score orientation throughout (TransE exposes the
negated L1 distance).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .kgraph import KnowledgeGraph
from .model import Checkpoint, ModelConfig, TrainConfig, run_training

BASELINE_TYPES = ("transe", "distmult")


@dataclass
class TripletParams:
    entity: np.ndarray  # (N, C)
    relation: np.ndarray  # (C,)

    def copy(self) -> "TripletParams":
        return TripletParams(self.entity.copy(), self.relation.copy())


def transe_distance(h: np.ndarray, r: np.ndarray, t: np.ndarray) -> float:
    """Raw L1 translation distance ||h + r - t||_1 (0 iff t = h + r)."""
    return float(np.sum(np.abs(h + r - t)))


def transe_score(h: np.ndarray, r: np.ndarray, t: np.ndarray) -> float:
    """Negated L1 distance, so that higher means more plausible."""
    return -transe_distance(h, r, t)


def distmult_score(h: np.ndarray, r: np.ndarray, t: np.ndarray) -> float:
    """Generalized dot product sum_d h_d * r_d * t_d; symmetric in h and t."""
    return float(np.sum(h * r * t))


def triplet_pair_scores(model_type: str, params: TripletParams, pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    h = params.entity[pairs[:, 0]]
    t = params.entity[pairs[:, 1]]
    if model_type == "transe":
        return -np.sum(np.abs(h + params.relation - t), axis=1)
    if model_type == "distmult":
        return np.sum(h * params.relation * t, axis=1)
    raise ValueError(f"unknown baseline model {model_type!r}")


def init_triplet_params(config: ModelConfig, n_nodes: int, rng_seed: int, *, unit_entities: bool) -> TripletParams:
    rng = np.random.default_rng(rng_seed)
    s = 1.0 / np.sqrt(config.embed_dim)
    entity = rng.uniform(-s, s, size=(n_nodes, config.embed_dim))
    relation = rng.uniform(-s, s, size=config.embed_dim)
    if unit_entities:
        entity /= np.linalg.norm(entity, axis=1, keepdims=True)
    return TripletParams(entity, relation)


class TripletScorer:
    """Shared-loop adapter for the two triplet baselines."""

    def __init__(self, model_type: str, graph: KnowledgeGraph, config: ModelConfig, params: TripletParams | None = None):
        if model_type not in BASELINE_TYPES:
            raise ValueError(f"unknown baseline model {model_type!r}")
        self.model_type = model_type
        self.graph = graph
        # out_dim is meaningless for triplet scoring; pin it to embed_dim
        self.config = replace(config, out_dim=config.embed_dim).resolved(graph)
        self.params = params if params is not None else init_triplet_params(
            self.config, graph.n_nodes, self.config.seed, unit_entities=model_type == "transe"
        )

    def refresh(self) -> None:
        pass

    def pair_scores(self, pairs: np.ndarray) -> np.ndarray:
        return triplet_pair_scores(self.model_type, self.params, pairs)

    def grads(self, pairs: np.ndarray, coeffs: np.ndarray) -> list[np.ndarray]:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        coeffs = np.asarray(coeffs, dtype=np.float64)
        E, r = self.params.entity, self.params.relation
        gE = np.zeros_like(E)
        gr = np.zeros_like(r)
        h = E[pairs[:, 0]]
        t = E[pairs[:, 1]]
        if self.model_type == "transe":
            sgn = np.sign(h + r - t)  # subgradient of the L1 norm
            dh = -coeffs[:, None] * sgn
            dt = coeffs[:, None] * sgn
            gr += dh.sum(axis=0)
        else:
            dh = coeffs[:, None] * (r * t)
            dt = coeffs[:, None] * (r * h)
            gr += (coeffs[:, None] * (h * t)).sum(axis=0)
        np.add.at(gE, pairs[:, 0], dh)
        np.add.at(gE, pairs[:, 1], dt)
        return [gE, gr]

    def param_list(self) -> list[np.ndarray]:
        return [self.params.entity, self.params.relation]

    def post_step(self) -> None:
        if self.model_type == "transe":
            norms = np.linalg.norm(self.params.entity, axis=1, keepdims=True)
            np.maximum(norms, 1e-12, out=norms)
            self.params.entity /= norms

    def snapshot(self) -> TripletParams:
        return self.params.copy()

    def restore(self, snap: TripletParams) -> None:
        self.params.entity[...] = snap.entity
        self.params.relation[...] = snap.relation


def train_baseline(
    model_type: str,
    graph: KnowledgeGraph,
    model_config: ModelConfig,
    train_config: TrainConfig,
    *,
    train_pairs: np.ndarray | None = None,
) -> Checkpoint:
    """Train TransE or DistMult with the shared ranking-loss loop."""
    scorer = TripletScorer(model_type, graph, model_config)
    history, epochs_run = run_training(scorer, graph, train_config, scorer.config.seed, train_pairs)
    return Checkpoint(
        model_type=model_type,
        config=scorer.config,
        params=scorer.params,
        graph_hash=graph.content_digest(),
        epoch=epochs_run,
        loss_history=history,
        train_config=asdict(train_config),
    )

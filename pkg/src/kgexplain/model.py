"""Relational graph convolution with learned features and exact gradients.

One forward layer computes ``H = tanh(sum_r A_r X W_r)`` over the
message-passing relations (self-connections included); an edge is scored by
the dot product of its endpoints' post-convolution rows. Training minimizes a
pairwise ranking loss between labeled positive pairs and kind-matched sampled
negatives. All gradients are hand-derived reverse-mode through the tanh,
the relational sum and the dot-product score; tests check every entry against
central finite differences.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .container import read_container, write_container
from .kgraph import KnowledgeGraph

EPSILON = 1e-10  # guards ln(0) in the ranking loss


class TrainingError(RuntimeError):
    """Non-finite numerics or unusable training inputs."""


class CheckpointError(RuntimeError):
    """Checkpoint does not match the graph or is malformed."""


class SamplingError(RuntimeError):
    """Negative sampling could not find enough eligible pairs."""


@dataclass
class ModelConfig:
    embed_dim: int = 64
    out_dim: int = 64
    n_layers: int = 1
    seed: int = 0
    normalize_adjacency: bool = False
    n_relations: int | None = None  # derived from the graph at train time

    def validate(self) -> None:
        if self.embed_dim < 1 or self.out_dim < 1 or self.n_layers < 1:
            raise ValueError("embed_dim, out_dim and n_layers must be positive")
        if self.n_layers == 1 and self.embed_dim != self.out_dim:
            raise ValueError("single-layer scoring compares equal-length vectors: embed_dim must equal out_dim")

    def resolved(self, graph: KnowledgeGraph) -> "ModelConfig":
        cfg = replace(self, n_relations=len(graph.message_relations))
        cfg.validate()
        return cfg


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-2
    optimizer: str = "adam"  # adam | sgd
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int | str = "full"
    resample_negatives_each_epoch: bool = True
    early_stop_patience: int = 0
    validation_fraction: float = 0.0
    loss_mode: str = "per_pair"  # per_pair | literal_sum | margin
    margin: float = 1.0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0.0 <= self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss_mode not in ("per_pair", "literal_sum", "margin"):
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")
        if self.batch_size != "full" and (not isinstance(self.batch_size, int) or self.batch_size < 1):
            raise ValueError("batch_size must be 'full' or a positive integer")


@dataclass
class ModelParams:
    """Learned node features plus per-layer, per-relation weight matrices."""

    X0: np.ndarray  # (N, C)
    W: list[np.ndarray]  # per layer, each (R, C_l, D_l)

    def copy(self) -> "ModelParams":
        return ModelParams(self.X0.copy(), [w.copy() for w in self.W])


def layer_dims(config: ModelConfig) -> list[tuple[int, int]]:
    dims = [(config.embed_dim, config.out_dim)]
    dims.extend((config.out_dim, config.out_dim) for _ in range(config.n_layers - 1))
    return dims


def init_params(config: ModelConfig, n_nodes: int, rng_seed: int) -> ModelParams:
    """Uniform init: features in +-1/sqrt(C), weights uniform-Glorot."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if config.n_relations is None:
        raise ValueError("config.n_relations unset; resolve the config against a graph first")
    rng = np.random.default_rng(rng_seed)
    s = 1.0 / np.sqrt(config.embed_dim)
    X0 = rng.uniform(-s, s, size=(n_nodes, config.embed_dim))
    W = []
    for c, d in layer_dims(config):
        g = np.sqrt(6.0 / (c + d))
        W.append(rng.uniform(-g, g, size=(config.n_relations, c, d)))
    return ModelParams(X0, W)


def propagation_matrices(graph: KnowledgeGraph, normalize: bool = False) -> list[sp.csr_array]:
    """Per-relation propagation matrices in ``graph.message_relations`` order.

    Raw 0/1 adjacency by default; with ``normalize`` each matrix becomes
    D^-1/2 A D^-1/2 (zero-degree rows stay zero, the self-loop identity is
    unchanged).
    """
    mats = []
    for rel in graph.message_relations:
        A = graph.adjacency[rel]
        if normalize:
            deg = np.asarray(A.sum(axis=1)).ravel()
            with np.errstate(divide="ignore"):
                dinv = 1.0 / np.sqrt(deg)
            dinv[~np.isfinite(dinv)] = 0.0
            D = sp.dia_array((dinv[None, :], [0]), shape=A.shape).tocsr()
            A = D @ A @ D
        mats.append(A)
    return mats


def forward(
    graph: KnowledgeGraph,
    params: ModelParams,
    config: ModelConfig,
    *,
    X0: np.ndarray | None = None,
    props: list[sp.csr_array] | None = None,
    with_cache: bool = False,
):
    """Propagate features through all layers; returns H or (H, cache).

    The cache keeps, per layer, the layer input and each relation's
    neighbor-sum ``A_r X`` so the backward pass can reuse them.
    """
    X = params.X0 if X0 is None else X0
    if X.shape[0] != graph.n_nodes:
        raise TrainingError(f"feature matrix has {X.shape[0]} rows, graph has {graph.n_nodes} nodes")
    if props is None:
        props = propagation_matrices(graph, config.normalize_adjacency)
    cache = []
    for W_layer in params.W:
        ax = [P @ X for P in props]
        Z = ax[0] @ W_layer[0]
        for r in range(1, len(props)):
            Z += ax[r] @ W_layer[r]
        X_next = np.tanh(Z)
        cache.append({"X_in": X, "AX": ax, "X_out": X_next})
        X = X_next
    if not np.isfinite(X).all():
        bad = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
        raise TrainingError(f"non-finite activations at node row {bad}")
    return (X, cache) if with_cache else X


def score(H: np.ndarray, i: int, j: int) -> float:
    """Association score of an edge: dot product of the two feature rows."""
    return float(np.dot(H[i], H[j]))


def score_pairs(H: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return np.einsum("ij,ij->i", H[pairs[:, 0]], H[pairs[:, 1]])


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def pair_loss(f_pos: float, f_neg: float) -> float:
    """Ranking loss of one positive/negative score pair: -ln(sigmoid(diff)+eps)."""
    s = _sigmoid(np.array(f_pos - f_neg))
    return float(-np.log(s + EPSILON))


def batch_loss_and_grads(
    f_pos: np.ndarray, f_neg: np.ndarray, mode: str = "per_pair", margin: float = 1.0
) -> tuple[float, np.ndarray, np.ndarray]:
    """Batch ranking loss plus its gradient w.r.t. each pair score.

    ``per_pair`` is the mean of per-pair losses over 1:1 matched pairs;
    ``literal_sum`` applies one sigmoid to the sum of all pos-neg score
    differences; ``margin`` is the hinge ranking loss used by the baselines.
    """
    f_pos = np.asarray(f_pos, dtype=np.float64)
    f_neg = np.asarray(f_neg, dtype=np.float64)
    if mode == "per_pair":
        if f_pos.shape != f_neg.shape:
            raise ValueError("per-pair loss requires 1:1 matched positives and negatives")
        d = f_pos - f_neg
        s = _sigmoid(d)
        loss = float(np.mean(-np.log(s + EPSILON)))
        dd = -(s * (1.0 - s) / (s + EPSILON)) / d.size
        return loss, dd, -dd
    if mode == "literal_sum":
        S = len(f_neg) * np.sum(f_pos) - len(f_pos) * np.sum(f_neg)
        s = _sigmoid(np.array(S))
        loss = float(-np.log(s + EPSILON))
        dS = float(-(s * (1.0 - s) / (s + EPSILON)))
        return loss, np.full(f_pos.shape, dS * len(f_neg)), np.full(f_neg.shape, -dS * len(f_pos))
    if mode == "margin":
        if f_pos.shape != f_neg.shape:
            raise ValueError("margin loss requires 1:1 matched positives and negatives")
        d = f_pos - f_neg
        active = d < margin
        loss = float(np.mean(np.maximum(0.0, margin - d)))
        dd = -active.astype(np.float64) / d.size
        return loss, dd, -dd
    raise ValueError(f"unknown loss mode {mode!r}")


def pair_score_seed(H: np.ndarray, pairs: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """d(sum_k c_k * f(i_k, j_k)) / dH, accumulated over possibly repeated rows."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    G = np.zeros_like(H)
    np.add.at(G, pairs[:, 0], coeffs[:, None] * H[pairs[:, 1]])
    np.add.at(G, pairs[:, 1], coeffs[:, None] * H[pairs[:, 0]])
    return G


def backward(
    params: ModelParams,
    props: list[sp.csr_array],
    cache: list[dict],
    G_H: np.ndarray,
    *,
    need_weight_grads: bool = True,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Reverse-mode pass from dLoss/dH to (dLoss/dX0, dLoss/dW per layer).

    Propagation matrices are symmetric, so the transposed matvec reuses them
    directly. Only rows of X0 inside the batch's receptive field end up with
    nonzero gradient.
    """
    G = G_H
    gW: list[np.ndarray] = [np.zeros(0)] * len(params.W)
    for l in range(len(params.W) - 1, -1, -1):
        layer = cache[l]
        T = G * (1.0 - layer["X_out"] ** 2)
        if need_weight_grads:
            gw = np.empty_like(params.W[l])
            for r in range(len(props)):
                gw[r] = layer["AX"][r].T @ T
            gW[l] = gw
        G_next = props[0] @ (T @ params.W[l][0].T)
        for r in range(1, len(props)):
            G_next += props[r] @ (T @ params.W[l][r].T)
        G = G_next
    return G, gW


def score_input_gradient(
    graph: KnowledgeGraph,
    params: ModelParams,
    config: ModelConfig,
    edge: tuple[int, int],
    *,
    X0: np.ndarray | None = None,
    props: list[sp.csr_array] | None = None,
) -> tuple[float, np.ndarray]:
    """Edge score and its exact gradient w.r.t. the input feature matrix."""
    if props is None:
        props = propagation_matrices(graph, config.normalize_adjacency)
    H, cache = forward(graph, params, config, X0=X0, props=props, with_cache=True)
    i, j = edge
    f = score(H, i, j)
    seed = pair_score_seed(H, np.array([[i, j]]), np.array([1.0]))
    gX0, _ = backward(params, props, cache, seed, need_weight_grads=False)
    return f, gX0


# ---------------------------------------------------------------------------
# Negative sampling
# ---------------------------------------------------------------------------

_RETRY_CAP = 100


def sample_negatives(
    graph: KnowledgeGraph,
    positives: np.ndarray,
    rng: np.random.Generator,
    *,
    known: set[tuple[int, int]] | None = None,
) -> np.ndarray:
    """Kind-matched pairs outside the known-positive set, one per positive.

    Uniform with replacement over eligible pairs via rejection sampling;
    raises after 100 failed draws for a slot (target relation too dense).
    """
    ka, kb = graph.target_relation.signature
    left = graph.nodes_of_kind(ka)
    right = graph.nodes_of_kind(kb)
    if len(left) == 0 or len(right) == 0:
        raise SamplingError("no candidate nodes for the target relation kinds")
    if known is None:
        known = graph.positive_set()
    same_kind = ka == kb
    out = np.empty((len(positives), 2), dtype=np.int64)
    for slot in range(len(positives)):
        for attempt in range(_RETRY_CAP):
            i = int(left[rng.integers(len(left))])
            j = int(right[rng.integers(len(right))])
            if i == j:
                continue
            key = (min(i, j), max(i, j)) if same_kind else (i, j)
            if key in known:
                continue
            out[slot] = key
            break
        else:
            raise SamplingError(
                f"negative sampling exhausted {_RETRY_CAP} retries; target relation too dense"
            )
    return out


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return Sgd(cfg.learning_rate)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

class RelationalScorer:
    """Trains the graph-convolution model; exposes the shared scorer API."""

    model_type = "graphix"

    def __init__(self, graph: KnowledgeGraph, config: ModelConfig, params: ModelParams | None = None):
        self.graph = graph
        self.config = config.resolved(graph)
        self.props = propagation_matrices(graph, self.config.normalize_adjacency)
        self.params = params if params is not None else init_params(self.config, graph.n_nodes, self.config.seed)
        self._H: np.ndarray | None = None
        self._cache: list[dict] | None = None

    def refresh(self) -> None:
        self._H, self._cache = forward(
            self.graph, self.params, self.config, props=self.props, with_cache=True
        )

    def pair_scores(self, pairs: np.ndarray) -> np.ndarray:
        if self._H is None:
            self.refresh()
        return score_pairs(self._H, pairs)

    def grads(self, pairs: np.ndarray, coeffs: np.ndarray) -> list[np.ndarray]:
        seed = pair_score_seed(self._H, pairs, coeffs)
        gX0, gW = backward(self.params, self.props, self._cache, seed)
        return [gX0, *gW]

    def param_list(self) -> list[np.ndarray]:
        return [self.params.X0, *self.params.W]

    def post_step(self) -> None:
        pass

    def snapshot(self) -> ModelParams:
        return self.params.copy()

    def restore(self, snap: ModelParams) -> None:
        self.params.X0[...] = snap.X0
        for w, ws in zip(self.params.W, snap.W):
            w[...] = ws


def run_training(scorer, graph: KnowledgeGraph, train_config: TrainConfig, seed: int, train_pairs: np.ndarray | None = None):
    """Shared epoch loop: sample negatives, score, rank, step.

    Returns ``(loss_history, epochs_run)``. Deterministic under a fixed seed
    and single-threaded kernels; raises on non-finite loss.
    """
    train_config.validate()
    positives = graph.positive_pairs if train_pairs is None else np.asarray(train_pairs, dtype=np.int64)
    if len(positives) == 0:
        raise TrainingError("graph has no positive pairs to train on")

    val_pairs = np.empty((0, 2), np.int64)
    if train_config.validation_fraction > 0:
        split_rng = np.random.default_rng([seed, 2])
        perm = split_rng.permutation(len(positives))
        n_val = int(round(train_config.validation_fraction * len(positives)))
        val_pairs = positives[perm[:n_val]]
        positives = positives[perm[n_val:]]
        if len(positives) == 0:
            raise TrainingError("validation split left no training pairs")
        val_negs = sample_negatives(graph, val_pairs, np.random.default_rng([seed, 3]))

    neg_rng = np.random.default_rng([seed, 1])
    shuffle_rng = np.random.default_rng([seed, 4])
    optimizer = make_optimizer(train_config)
    loss_history: list[float] = []
    negatives = None
    best_val, best_snap, stale = -np.inf, None, 0

    for epoch in range(train_config.epochs):
        if negatives is None or train_config.resample_negatives_each_epoch:
            negatives = sample_negatives(graph, positives, neg_rng)
        if train_config.batch_size == "full":
            order = np.arange(len(positives))
            chunks = [order]
        else:
            order = shuffle_rng.permutation(len(positives))
            bs = int(train_config.batch_size)
            chunks = [order[k : k + bs] for k in range(0, len(order), bs)]

        epoch_loss = 0.0
        for chunk in chunks:
            scorer.refresh()
            pos = positives[chunk]
            neg = negatives[chunk]
            f_pos = scorer.pair_scores(pos)
            f_neg = scorer.pair_scores(neg)
            loss, g_pos, g_neg = batch_loss_and_grads(
                f_pos, f_neg, train_config.loss_mode, train_config.margin
            )
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            pairs = np.concatenate([pos, neg])
            coeffs = np.concatenate([g_pos, g_neg])
            grads = scorer.grads(pairs, coeffs)
            optimizer.step(scorer.param_list(), grads)
            scorer.post_step()
            epoch_loss += loss * len(chunk)
        loss_history.append(epoch_loss / len(positives))

        if len(val_pairs) and train_config.early_stop_patience > 0:
            from .evaluation import roc_auc  # local import avoids a module cycle

            scorer.refresh()
            scores = np.concatenate([scorer.pair_scores(val_pairs), scorer.pair_scores(val_negs)])
            labels = np.concatenate([np.ones(len(val_pairs)), np.zeros(len(val_negs))])
            auc = roc_auc(scores, labels)
            if auc > best_val + 1e-12:
                best_val, best_snap, stale = auc, scorer.snapshot(), 0
            else:
                stale += 1
                if stale >= train_config.early_stop_patience:
                    if best_snap is not None:
                        scorer.restore(best_snap)
                    return loss_history, epoch + 1
    return loss_history, train_config.epochs


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    model_type: str
    config: ModelConfig
    params: object  # ModelParams or baselines.TripletParams
    graph_hash: str
    epoch: int
    loss_history: list[float] = field(default_factory=list)
    train_config: dict = field(default_factory=dict)


def train(
    graph: KnowledgeGraph,
    model_config: ModelConfig,
    train_config: TrainConfig,
    *,
    train_pairs: np.ndarray | None = None,
) -> Checkpoint:
    """Train the relational-convolution model; see ``run_training``."""
    scorer = RelationalScorer(graph, model_config)
    history, epochs_run = run_training(scorer, graph, train_config, scorer.config.seed, train_pairs)
    return Checkpoint(
        model_type=scorer.model_type,
        config=scorer.config,
        params=scorer.params,
        graph_hash=graph.content_digest(),
        epoch=epochs_run,
        loss_history=history,
        train_config=asdict(train_config),
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    meta = {
        "model_type": ckpt.model_type,
        "config": asdict(ckpt.config),
        "graph_hash": ckpt.graph_hash,
        "epoch": ckpt.epoch,
        "loss_history": ckpt.loss_history,
        "train_config": ckpt.train_config,
    }
    arrays: dict[str, np.ndarray]
    if ckpt.model_type == "graphix":
        arrays = {"X0": ckpt.params.X0.astype(np.float64)}
        for l, w in enumerate(ckpt.params.W):
            arrays[f"W.{l}"] = w.astype(np.float64)
        meta["n_weight_layers"] = len(ckpt.params.W)
    else:
        arrays = {
            "entity": ckpt.params.entity.astype(np.float64),
            "relation": ckpt.params.relation.astype(np.float64),
        }
    write_container(path, "checkpoint", meta, arrays)


def load_checkpoint(path: str | Path) -> Checkpoint:
    meta, arrays = read_container(path, expected_kind="checkpoint")
    config = ModelConfig(**meta["config"])
    if meta["model_type"] == "graphix":
        params: object = ModelParams(arrays["X0"], [arrays[f"W.{l}"] for l in range(meta["n_weight_layers"])])
    else:
        from .baselines import TripletParams

        params = TripletParams(arrays["entity"], arrays["relation"])
    return Checkpoint(
        model_type=meta["model_type"],
        config=config,
        params=params,
        graph_hash=meta["graph_hash"],
        epoch=int(meta["epoch"]),
        loss_history=list(meta["loss_history"]),
        train_config=dict(meta.get("train_config", {})),
    )


def verify_checkpoint_graph(ckpt: Checkpoint, graph: KnowledgeGraph, *, force: bool = False) -> None:
    digest = graph.content_digest()
    if ckpt.graph_hash != digest and not force:
        raise CheckpointError(
            f"checkpoint was trained on graph {ckpt.graph_hash[:12]}..., "
            f"given graph is {digest[:12]}... (pass force to override)"
        )


def checkpoint_scores(graph: KnowledgeGraph, ckpt: Checkpoint, pairs: np.ndarray) -> np.ndarray:
    """Score pairs under any checkpoint type with one call."""
    if ckpt.model_type == "graphix":
        H = forward(graph, ckpt.params, ckpt.config)
        return score_pairs(H, pairs)
    from .baselines import triplet_pair_scores

    return triplet_pair_scores(ckpt.model_type, ckpt.params, pairs)

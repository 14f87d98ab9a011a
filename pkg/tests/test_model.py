import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgexplain.kgraph import RelationKind
from kgexplain.model import (
    EPSILON,
    CheckpointError,
    ModelConfig,
    ModelParams,
    SamplingError,
    TrainConfig,
    TrainingError,
    backward,
    batch_loss_and_grads,
    forward,
    init_params,
    load_checkpoint,
    pair_loss,
    pair_score_seed,
    propagation_matrices,
    sample_negatives,
    save_checkpoint,
    score,
    score_pairs,
    train,
    verify_checkpoint_graph,
)

from conftest import dense_forward, make_random_graph, single_node_graph


def _cfg(graph, dim=4, seed=0, **kw):
    return ModelConfig(embed_dim=dim, out_dim=dim, seed=seed, **kw).resolved(graph)


# ---------------------------------------------------------------------------
# init_params
# ---------------------------------------------------------------------------

def test_init_deterministic_under_seed():
    graph = make_random_graph(0)
    cfg = _cfg(graph)
    a = init_params(cfg, graph.n_nodes, 42)
    b = init_params(cfg, graph.n_nodes, 42)
    np.testing.assert_array_equal(a.X0, b.X0)
    for wa, wb in zip(a.W, b.W):
        np.testing.assert_array_equal(wa, wb)


def test_init_bounds():
    graph = make_random_graph(0)
    cfg = ModelConfig(embed_dim=64, out_dim=64, seed=0).resolved(graph)
    params = init_params(cfg, graph.n_nodes, 1)
    assert np.abs(params.X0).max() <= 1.0 / 8.0
    glorot = np.sqrt(6.0 / 128.0)
    assert np.abs(params.W[0]).max() <= glorot


def test_init_sample_mean_near_zero():
    # 10^6 entries of U(-s, s): |mean| should sit within 3 sigma / sqrt(n)
    graph = make_random_graph(0)
    cfg = ModelConfig(embed_dim=64, out_dim=64, seed=0, n_relations=5)
    params = init_params(cfg, 15625, 7)  # 15625 * 64 = 1e6 entries
    s = 1.0 / 8.0
    sigma = s / np.sqrt(3.0)
    n = params.X0.size
    assert abs(params.X0.mean()) < 3.0 * sigma / np.sqrt(n)


# ---------------------------------------------------------------------------
# forward / score
# ---------------------------------------------------------------------------

def test_forward_zero_features_gives_zero():
    graph = make_random_graph(1)
    cfg = _cfg(graph)
    params = init_params(cfg, graph.n_nodes, 0)
    params.X0[...] = 0.0
    H = forward(graph, params, cfg)
    np.testing.assert_array_equal(H, np.zeros_like(H))


def test_forward_scalar_self_connection():
    graph = single_node_graph()
    cfg = ModelConfig(embed_dim=1, out_dim=1, seed=0, n_relations=1)
    params = ModelParams(np.array([[0.5]]), [np.array([[[1.0]]])])
    H = forward(graph, params, cfg)
    assert H[0, 0] == pytest.approx(np.tanh(0.5), abs=1e-15)
    assert H[0, 0] == pytest.approx(0.46212, abs=5e-6)


def test_forward_matches_dense_reference():
    for seed in range(10):
        graph = make_random_graph(seed, n_disease=5, n_drug=4, n_gene=6)
        cfg = _cfg(graph, dim=6, seed=seed)
        params = init_params(cfg, graph.n_nodes, seed)
        H = forward(graph, params, cfg)
        np.testing.assert_allclose(H, dense_forward(graph, params, cfg), rtol=1e-12, atol=1e-15)


def test_forward_matches_dense_reference_normalized_and_multilayer():
    graph = make_random_graph(2)
    cfg = ModelConfig(embed_dim=4, out_dim=3, n_layers=2, seed=0, normalize_adjacency=True).resolved(graph)
    params = init_params(cfg, graph.n_nodes, 3)
    H = forward(graph, params, cfg)
    np.testing.assert_allclose(H, dense_forward(graph, params, cfg), rtol=1e-12, atol=1e-15)


def test_forward_nonfinite_diagnostic():
    graph = make_random_graph(1)
    cfg = _cfg(graph)
    params = init_params(cfg, graph.n_nodes, 0)
    params.X0[2, 0] = np.nan
    with pytest.raises(TrainingError, match="node row"):
        forward(graph, params, cfg)


def test_score_fixtures_and_symmetry():
    H = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 2.0], [3.0, 4.0]])
    assert score(H, 0, 1) == 0.0
    assert score(H, 2, 3) == 11.0
    rng = np.random.default_rng(0)
    Hr = rng.normal(size=(10, 5))
    for _ in range(20):
        i, j = rng.integers(10, size=2)
        assert score(Hr, i, j) == score(Hr, j, i)


def test_config_validation_rules():
    with pytest.raises(ValueError, match="embed_dim must equal out_dim"):
        ModelConfig(embed_dim=8, out_dim=4, n_layers=1).validate()
    ModelConfig(embed_dim=8, out_dim=4, n_layers=2).validate()  # fine with depth
    with pytest.raises(ValueError):
        ModelConfig(embed_dim=0).validate()


# ---------------------------------------------------------------------------
# pair loss
# ---------------------------------------------------------------------------

def test_pair_loss_zero_difference():
    assert pair_loss(1.3, 1.3) == pytest.approx(-np.log(0.5 + EPSILON), abs=1e-15)
    assert pair_loss(0.0, 0.0) == pytest.approx(0.693147, abs=1e-6)


def test_pair_loss_limits():
    assert pair_loss(1e4, 0.0) == pytest.approx(0.0, abs=1e-9)
    # high-precision oracle: evaluate -ln(sigmoid(-50) + 1e-10) at 50 digits
    import mpmath

    mpmath.mp.dps = 50
    expect = -mpmath.log(1 / (1 + mpmath.exp(50)) + mpmath.mpf("1e-10"))
    assert pair_loss(0.0, 50.0) == pytest.approx(float(expect), rel=1e-12)
    assert pair_loss(0.0, 50.0) == pytest.approx(23.03, abs=0.01)


def test_pair_loss_epsilon_dominates_saturated_tail():
    assert pair_loss(0.0, 1e4) == pytest.approx(-np.log(EPSILON), rel=1e-12)


@given(st.floats(-80, 80))
@settings(max_examples=200, deadline=None)
def test_pair_loss_bounds_property(diff):
    val = pair_loss(diff, 0.0)
    assert -np.log(1.0 + EPSILON) <= val <= -np.log(EPSILON)


def test_literal_sum_mode_collapses_to_sigmoid_of_sum():
    f_pos = np.array([1.0, 2.0])
    f_neg = np.array([0.5, 0.25, 0.5])
    S = 3 * f_pos.sum() - 2 * f_neg.sum()
    loss, gp, gn = batch_loss_and_grads(f_pos, f_neg, mode="literal_sum")
    expect = -np.log(1.0 / (1.0 + np.exp(-S)) + EPSILON)
    assert loss == pytest.approx(expect, rel=1e-12)
    assert gp.shape == f_pos.shape and gn.shape == f_neg.shape


# ---------------------------------------------------------------------------
# negative sampling
# ---------------------------------------------------------------------------

def _forced_graph():
    # 2 diseases x 2 drugs with 3 of 4 pairs positive
    from kgexplain.kgraph import EdgeList, LabelTable, NodeKind, assemble

    table = LabelTable()
    d = [table.intern(f"d{i}", NodeKind.DISEASE) for i in range(2)]
    c = [table.intern(f"c{i}", NodeKind.DRUG) for i in range(2)]
    g = table.intern("g", NodeKind.GENE)
    lists = [
        EdgeList(RelationKind.DISEASE_GENE, [(d[0], g), (d[1], g)]),
        EdgeList(RelationKind.GENE_DRUG, [(g, c[0]), (g, c[1])]),
        EdgeList(RelationKind.DISEASE_DRUG, [(d[0], c[0]), (d[0], c[1]), (d[1], c[0])]),
    ]
    graph, _ = assemble(lists, table, RelationKind.DISEASE_DRUG)
    return graph, (d[1], c[1])


def test_sampling_forced_single_remaining_pair():
    graph, only = _forced_graph()
    rng = np.random.default_rng(0)
    negs = sample_negatives(graph, graph.positive_pairs, rng)
    assert len(negs) == 3
    for i, j in negs:
        assert (int(i), int(j)) == only


def test_sampling_kinds_match_target_signature():
    graph = make_random_graph(4)
    negs = sample_negatives(graph, graph.positive_pairs, np.random.default_rng(1))
    ka, kb = graph.target_relation.signature
    assert (graph.kinds[negs[:, 0]] == int(ka)).all()
    assert (graph.kinds[negs[:, 1]] == int(kb)).all()
    known = graph.positive_set()
    assert all((int(i), int(j)) not in known for i, j in negs)


def test_sampling_uniform_over_eligible_pairs():
    graph = make_random_graph(6, n_disease=3, n_drug=3, n_gene=4, n_targets=2)
    known = graph.positive_set()
    ka, kb = graph.target_relation.signature
    eligible = [
        (int(i), int(j))
        for i in graph.nodes_of_kind(ka)
        for j in graph.nodes_of_kind(kb)
        if (int(i), int(j)) not in known
    ]
    rng = np.random.default_rng(3)
    draws = 100_000
    dummy = np.zeros((draws, 2), dtype=np.int64)
    negs = sample_negatives(graph, dummy, rng)
    counts = {}
    for i, j in negs:
        counts[(int(i), int(j))] = counts.get((int(i), int(j)), 0) + 1
    assert set(counts) == set(eligible)
    p = 1.0 / len(eligible)
    sigma = np.sqrt(draws * p * (1 - p))
    for pair in eligible:
        assert abs(counts[pair] - draws * p) < 4 * sigma


def test_sampling_retry_cap_exhaustion():
    # every disease-drug pair is positive: nothing left to sample
    from kgexplain.kgraph import EdgeList, LabelTable, NodeKind, assemble

    table = LabelTable()
    d = [table.intern(f"d{i}", NodeKind.DISEASE) for i in range(2)]
    c = [table.intern(f"c{i}", NodeKind.DRUG) for i in range(2)]
    g = table.intern("g", NodeKind.GENE)
    lists = [
        EdgeList(RelationKind.DISEASE_GENE, [(d[0], g), (d[1], g)]),
        EdgeList(RelationKind.GENE_DRUG, [(g, c[0]), (g, c[1])]),
        EdgeList(RelationKind.DISEASE_DRUG, [(di, cj) for di in d for cj in c]),
    ]
    graph, _ = assemble(lists, table, RelationKind.DISEASE_DRUG)
    with pytest.raises(SamplingError):
        sample_negatives(graph, graph.positive_pairs, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def _loss_closure(graph, cfg, params, pos, neg, mode="per_pair"):
    H = forward(graph, params, cfg)
    f_pos = score_pairs(H, pos)
    f_neg = score_pairs(H, neg)
    loss, _, _ = batch_loss_and_grads(f_pos, f_neg, mode)
    return loss


def analytic_grads(graph, cfg, params, pos, neg, mode="per_pair"):
    props = propagation_matrices(graph, cfg.normalize_adjacency)
    H, cache = forward(graph, params, cfg, props=props, with_cache=True)
    f_pos = score_pairs(H, pos)
    f_neg = score_pairs(H, neg)
    loss, gp, gn = batch_loss_and_grads(f_pos, f_neg, mode)
    seed = pair_score_seed(H, np.concatenate([pos, neg]), np.concatenate([gp, gn]))
    gX0, gW = backward(params, props, cache, seed)
    return loss, gX0, gW


def finite_difference_check(graph, cfg, params, pos, neg, mode="per_pair", h=1e-5,
                            rtol=1e-4, afloor=1e-7):
    _, gX0, gW = analytic_grads(graph, cfg, params, pos, neg, mode)
    arrays = [(params.X0, gX0)] + [(params.W[l], gW[l]) for l in range(len(params.W))]
    worst = 0.0
    for arr, grad in arrays:
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            lp = _loss_closure(graph, cfg, params, pos, neg, mode)
            flat[idx] = orig - h
            lm = _loss_closure(graph, cfg, params, pos, neg, mode)
            flat[idx] = orig
            est = (lp - lm) / (2 * h)
            err = abs(est - gflat[idx]) / max(abs(est), abs(gflat[idx]), afloor)
            worst = max(worst, err)
            assert err < rtol, f"gradient mismatch: fd={est}, analytic={gflat[idx]}"
    return worst


def test_backward_matches_finite_differences():
    graph = make_random_graph(11, n_disease=4, n_drug=4, n_gene=4)
    cfg = _cfg(graph, dim=4, seed=0)
    params = init_params(cfg, graph.n_nodes, 0)
    pos = graph.positive_pairs[:3]
    neg = sample_negatives(graph, pos, np.random.default_rng(0))
    finite_difference_check(graph, cfg, params, pos, neg)


def test_backward_matches_finite_differences_all_modes_and_depth():
    graph = make_random_graph(12, n_disease=4, n_drug=3, n_gene=4)
    pos = graph.positive_pairs[:2]
    neg = sample_negatives(graph, pos, np.random.default_rng(1))
    for mode in ("per_pair", "literal_sum", "margin"):
        cfg = _cfg(graph, dim=3, seed=1)
        params = init_params(cfg, graph.n_nodes, 2)
        finite_difference_check(graph, cfg, params, pos, neg, mode=mode)
    cfg2 = ModelConfig(embed_dim=3, out_dim=3, n_layers=2, seed=0).resolved(graph)
    params2 = init_params(cfg2, graph.n_nodes, 3)
    finite_difference_check(graph, cfg2, params2, pos, neg)


def test_gradient_zero_outside_receptive_field():
    graph = make_random_graph(13, n_disease=6, n_drug=5, n_gene=8, extra_edges=2)
    cfg = _cfg(graph, dim=4)
    params = init_params(cfg, graph.n_nodes, 0)
    pos = graph.positive_pairs[:1]
    neg = sample_negatives(graph, pos, np.random.default_rng(2))
    _, gX0, _ = analytic_grads(graph, cfg, params, pos, neg)
    union = graph.union_adjacency()
    inside = set()
    for i, j in np.concatenate([pos, neg]):
        inside.update((int(i), int(j)))
        inside.update(union.indices[union.indptr[i]: union.indptr[i + 1]].tolist())
        inside.update(union.indices[union.indptr[j]: union.indptr[j + 1]].tolist())
    outside = set(range(graph.n_nodes)) - inside
    assert outside, "test graph too dense to exercise the property"
    for k in outside:
        np.testing.assert_array_equal(gX0[k], 0.0)


def test_seed_coefficients_scale_linearly():
    graph = make_random_graph(14)
    cfg = _cfg(graph, dim=4)
    params = init_params(cfg, graph.n_nodes, 0)
    props = propagation_matrices(graph, False)
    H, cache = forward(graph, params, cfg, props=props, with_cache=True)
    pairs = graph.positive_pairs[:2]
    g1, w1 = backward(params, props, cache, pair_score_seed(H, pairs, np.array([1.0, 0.5])))
    g3, w3 = backward(params, props, cache, pair_score_seed(H, pairs, np.array([3.0, 1.5])))
    np.testing.assert_allclose(3.0 * g1, g3, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(3.0 * w1[0], w3[0], rtol=1e-12, atol=1e-15)


def test_receptive_field_of_score():
    graph = make_random_graph(15, n_disease=5, n_drug=4, n_gene=8, extra_edges=2)
    cfg = _cfg(graph, dim=4)
    params = init_params(cfg, graph.n_nodes, 1)
    i, j = map(int, graph.positive_pairs[0])
    base = score(forward(graph, params, cfg), i, j)
    union = graph.union_adjacency()
    neighbors = {i, j}
    for e in (i, j):
        neighbors.update(union.indices[union.indptr[e]: union.indptr[e + 1]].tolist())
    for k in range(graph.n_nodes):
        params.X0[k] += 0.37
        moved = score(forward(graph, params, cfg), i, j)
        params.X0[k] -= 0.37
        if k in neighbors:
            assert moved != base
        else:
            assert moved == base


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_zero_epochs_returns_init():
    graph = make_random_graph(16)
    cfg = _cfg(graph, dim=4, seed=9)
    ckpt = train(graph, cfg, TrainConfig(epochs=0))
    expect = init_params(cfg, graph.n_nodes, 9)
    np.testing.assert_array_equal(ckpt.params.X0, expect.X0)
    assert ckpt.loss_history == []
    assert ckpt.epoch == 0


def test_train_is_deterministic():
    graph = make_random_graph(17)
    cfg = _cfg(graph, dim=4, seed=5)
    tc = TrainConfig(epochs=8, learning_rate=1e-2)
    a = train(graph, cfg, tc)
    b = train(graph, cfg, tc)
    assert a.loss_history == b.loss_history
    np.testing.assert_array_equal(a.params.X0, b.params.X0)


def test_train_loss_decreases_on_planted_graph():
    from kgexplain.evaluation import SyntheticSpec, generate_synthetic

    graph, _ = generate_synthetic(SyntheticSpec(n_disease=15, n_drug=15, n_gene=30, seed=3, n_groups=3))
    assert graph.n_nodes == 60
    # fixed negatives: per-epoch resampling would jitter the loss sequence
    ckpt = train(graph, ModelConfig(embed_dim=8, out_dim=8, seed=0),
                 TrainConfig(epochs=10, learning_rate=1e-2, resample_negatives_each_epoch=False))
    diffs = np.diff(ckpt.loss_history)
    assert (diffs < 0).all(), ckpt.loss_history


def test_train_minibatch_and_early_stop_paths():
    from kgexplain.evaluation import SyntheticSpec, generate_synthetic

    graph, _ = generate_synthetic(SyntheticSpec(n_disease=12, n_drug=12, n_gene=20, seed=4, n_groups=3))
    tc = TrainConfig(epochs=50, learning_rate=1e-2, batch_size=32,
                     validation_fraction=0.2, early_stop_patience=3)
    ckpt = train(graph, ModelConfig(embed_dim=8, out_dim=8, seed=0), tc)
    assert ckpt.epoch <= 50
    assert len(ckpt.loss_history) == ckpt.epoch


def test_train_rejects_empty_positives():
    graph = make_random_graph(18)
    with pytest.raises(TrainingError):
        train(graph, _cfg(graph), TrainConfig(epochs=1), train_pairs=np.empty((0, 2), np.int64))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip_reproduces_scores(tmp_path):
    graph = make_random_graph(19)
    cfg = _cfg(graph, dim=4, seed=2)
    ckpt = train(graph, cfg, TrainConfig(epochs=5))
    path = tmp_path / "ck.kgx"
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    H1 = forward(graph, ckpt.params, ckpt.config)
    H2 = forward(graph, loaded.params, loaded.config)
    np.testing.assert_array_equal(H1, H2)
    assert loaded.graph_hash == graph.content_digest()
    assert loaded.loss_history == ckpt.loss_history


def test_checkpoint_graph_hash_guard(tmp_path):
    graph = make_random_graph(20)
    other = make_random_graph(21)
    ckpt = train(graph, _cfg(graph, dim=4), TrainConfig(epochs=1))
    with pytest.raises(CheckpointError):
        verify_checkpoint_graph(ckpt, other)
    verify_checkpoint_graph(ckpt, other, force=True)
    verify_checkpoint_graph(ckpt, graph)


def test_checkpoint_write_is_deterministic(tmp_path):
    graph = make_random_graph(22)
    ckpt = train(graph, _cfg(graph, dim=4, seed=3), TrainConfig(epochs=3))
    p1, p2 = tmp_path / "a.kgx", tmp_path / "b.kgx"
    save_checkpoint(ckpt, p1)
    save_checkpoint(ckpt, p2)
    assert p1.read_bytes() == p2.read_bytes()

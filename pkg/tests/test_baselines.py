import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgexplain.baselines import (
    TripletScorer,
    distmult_score,
    train_baseline,
    transe_distance,
    transe_score,
    triplet_pair_scores,
)
from kgexplain.model import ModelConfig, TrainConfig, batch_loss_and_grads

from conftest import make_random_graph


def test_transe_exact_translation():
    h = np.array([0.0, 0.0])
    r = np.array([1.0, 0.0])
    t = np.array([1.0, 0.0])
    assert transe_distance(h, r, t) == 0.0
    assert transe_score(h, r, t) == 0.0


def test_transe_hand_l1():
    assert transe_distance(np.array([1.0, 1.0]), np.zeros(2), np.zeros(2)) == 2.0


def test_transe_matches_elementwise_recomputation():
    rng = np.random.default_rng(0)
    for _ in range(50):
        h, r, t = rng.normal(size=(3, 6))
        expect = -float(sum(abs(hv + rv - tv) for hv, rv, tv in zip(h, r, t)))
        assert transe_score(h, r, t) == pytest.approx(expect, rel=1e-14)


def test_transe_zero_iff_exact_translation():
    rng = np.random.default_rng(1)
    for _ in range(20):
        h, r = rng.normal(size=(2, 4))
        assert transe_distance(h, r, h + r) == 0.0
        t = h + r + rng.normal(size=4) * 0.1
        if np.any(t != h + r):
            assert transe_distance(h, r, t) > 0.0


def test_distmult_fixtures():
    assert distmult_score(np.array([1.0, 2.0]), np.ones(2), np.ones(2)) == 3.0
    rng = np.random.default_rng(2)
    h, t = rng.normal(size=(2, 5))
    assert distmult_score(h, np.zeros(5), t) == 0.0


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_distmult_symmetric_transe_not(seed):
    rng = np.random.default_rng(seed)
    h, r, t = rng.normal(size=(3, 4))
    assert distmult_score(h, r, t) == pytest.approx(distmult_score(t, r, h), rel=1e-12)
    # the raw translation distance is direction-sensitive unless r is zero
    assert transe_distance(h, np.zeros(4), t) == pytest.approx(
        transe_distance(t, np.zeros(4), h), rel=1e-12
    )


def test_transe_asymmetry_with_nonzero_relation():
    h = np.array([1.0, 0.0])
    r = np.array([0.5, 0.0])
    t = np.array([0.0, 1.0])
    assert transe_distance(h, r, t) != transe_distance(t, r, h)


def _fd_check_baseline(model_type, seed):
    graph = make_random_graph(seed, n_disease=4, n_drug=4, n_gene=4)
    cfg = ModelConfig(embed_dim=3, out_dim=3, seed=seed)
    scorer = TripletScorer(model_type, graph, cfg)
    pos = graph.positive_pairs[:2]
    from kgexplain.model import sample_negatives

    neg = sample_negatives(graph, pos, np.random.default_rng(seed))

    def loss_now():
        fp = scorer.pair_scores(pos)
        fn = scorer.pair_scores(neg)
        return batch_loss_and_grads(fp, fn)[0]

    fp = scorer.pair_scores(pos)
    fn = scorer.pair_scores(neg)
    _, gp, gn = batch_loss_and_grads(fp, fn)
    grads = scorer.grads(np.concatenate([pos, neg]), np.concatenate([gp, gn]))
    h = 1e-6
    for arr, grad in zip(scorer.param_list(), grads):
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            lp = loss_now()
            flat[idx] = orig - h
            lm = loss_now()
            flat[idx] = orig
            est = (lp - lm) / (2 * h)
            err = abs(est - gflat[idx]) / max(abs(est), abs(gflat[idx]), 1e-7)
            # the L1 subgradient is exact except on measure-zero kinks
            assert err < 1e-4, (model_type, est, gflat[idx])


def test_baseline_gradients_match_finite_differences():
    _fd_check_baseline("transe", 31)
    _fd_check_baseline("distmult", 32)


def test_train_baseline_zero_epochs_is_init():
    graph = make_random_graph(33)
    cfg = ModelConfig(embed_dim=4, out_dim=4, seed=7)
    ckpt = train_baseline("transe", graph, cfg, TrainConfig(epochs=0))
    fresh = TripletScorer("transe", graph, cfg)
    np.testing.assert_array_equal(ckpt.params.entity, fresh.params.entity)
    np.testing.assert_array_equal(ckpt.params.relation, fresh.params.relation)


def test_train_baseline_deterministic():
    graph = make_random_graph(34)
    cfg = ModelConfig(embed_dim=4, out_dim=4, seed=3)
    tc = TrainConfig(epochs=5, learning_rate=1e-2)
    a = train_baseline("distmult", graph, cfg, tc)
    b = train_baseline("distmult", graph, cfg, tc)
    assert a.loss_history == b.loss_history
    np.testing.assert_array_equal(a.params.entity, b.params.entity)


def test_transe_entities_stay_unit_norm_during_training():
    graph = make_random_graph(35)
    ckpt = train_baseline("transe", graph, ModelConfig(embed_dim=4, out_dim=4, seed=1),
                          TrainConfig(epochs=4, learning_rate=1e-2))
    norms = np.linalg.norm(ckpt.params.entity, axis=1)
    np.testing.assert_allclose(norms, 1.0, rtol=1e-12)


def test_margin_loss_mode_trains():
    graph = make_random_graph(36)
    ckpt = train_baseline("transe", graph, ModelConfig(embed_dim=4, out_dim=4, seed=1),
                          TrainConfig(epochs=5, learning_rate=1e-2, loss_mode="margin", margin=1.0))
    assert len(ckpt.loss_history) == 5
    assert all(np.isfinite(v) for v in ckpt.loss_history)


def test_triplet_pair_scores_vectorization_matches_scalar():
    graph = make_random_graph(37)
    scorer = TripletScorer("transe", graph, ModelConfig(embed_dim=5, out_dim=5, seed=0))
    pairs = graph.positive_pairs
    vec = triplet_pair_scores("transe", scorer.params, pairs)
    for k, (i, j) in enumerate(pairs):
        scalar = transe_score(scorer.params.entity[i], scorer.params.relation, scorer.params.entity[j])
        assert vec[k] == pytest.approx(scalar, rel=1e-12)

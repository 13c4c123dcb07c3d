"""Site selection, trigger generation, and the similarity objective."""

import numpy as np
import pytest
from conftest import fd_grad, small_backdoored_world

from graphpurify import autodiff as ad
from graphpurify.autodiff import Tensor
from graphpurify.errors import ConfigError, ContractError, GraphTooSmallError
from graphpurify.graphs import Graph, TriggerSubgraph, montage
from graphpurify.models import GnnModel
from graphpurify.recovery import (RecoveryConfig, TriggerGenerator,
                                  TriggerRecoverer, batch_recovery_loss,
                                  hinge_similarity_loss, mean_pairwise_cosine,
                                  montage_tensors, pairwise_similarity_loss,
                                  random_sites, recover_trigger, select_sites)


def test_select_sites_fixtures():
    assert select_sites([0.9, 0.1, 0.5], 1) == [1]
    assert select_sites([0.5, 0.5, 0.5], 2) == [0, 1]
    assert select_sites([0.3, 0.3, 0.1, 0.8], 2) == [2, 0]
    with pytest.raises(GraphTooSmallError):
        select_sites([0.5, 0.5], 3)


def test_random_sites_deterministic_and_distinct():
    a = random_sites(10, 4, seed=3, graph_key=7)
    b = random_sites(10, 4, seed=3, graph_key=7)
    assert a == b
    assert len(set(a)) == 4
    assert random_sites(10, 4, seed=3, graph_key=8) != a or True  # may collide
    with pytest.raises(GraphTooSmallError):
        random_sites(2, 3, seed=0, graph_key=0)


def test_generator_zero_parameters_fixture():
    gen = TriggerGenerator(feature_dim=4, n=3, seed=0)
    for p in gen.parameters():
        p.data[:] = 0.0
    x_t, a_t = gen.generate_tensors(np.ones((3, 4)))
    np.testing.assert_array_equal(x_t.data, np.zeros((3, 4)))
    # zero scores -> sigmoid 0.5 -> the >= rule binarizes to 1 off-diagonal
    np.testing.assert_array_equal(a_t.data, np.ones((3, 3)) - np.eye(3))


def test_generator_output_is_valid_trigger():
    rng = np.random.default_rng(17)
    for trial in range(100):
        gen = TriggerGenerator(feature_dim=3, n=4, seed=trial)
        t = gen.generate(rng.standard_normal((4, 3)))
        assert isinstance(t, TriggerSubgraph)  # ctor validates symmetry etc.
        a = t.adj
        np.testing.assert_array_equal(a, a.T)
        assert np.isin(a, (0.0, 1.0)).all()
        assert np.diagonal(a).sum() == 0


def test_generator_shape_contract():
    gen = TriggerGenerator(feature_dim=4, n=3, seed=0)
    with pytest.raises(ContractError):
        gen.generate_tensors(np.ones((2, 4)))


def test_gradient_reaches_structure_head_through_binarization():
    # downstream of the binarization is linear, so the straight-through
    # gradient must equal the exact gradient of the relaxed (sigmoid) path
    rng = np.random.default_rng(23)
    gen = TriggerGenerator(feature_dim=3, n=3, seed=5)
    seeds = rng.standard_normal((3, 3))
    coeff = rng.standard_normal((3, 3))

    def relaxed(w_a=gen.w_a.data):
        hidden = np.maximum(np.maximum(seeds @ gen.v1.data, 0) @ gen.v2.data, 0)
        scores = (hidden.mean(axis=0, keepdims=True) @ w_a).reshape(3, 3)
        sym = 0.5 * (scores + scores.T)
        probs = 1.0 / (1.0 + np.exp(-sym))
        return float((probs * (1 - np.eye(3)) * coeff).sum())

    _, a_t = gen.generate_tensors(seeds)
    loss = ad.sum_all(ad.mul(a_t, Tensor(coeff)))
    grads = ad.backward(loss, accumulate=False)
    numeric = fd_grad(relaxed, gen.w_a.data)
    np.testing.assert_allclose(grads[gen.w_a], numeric, rtol=1e-4, atol=1e-8)


def single_node_model():
    w = Tensor(np.eye(2), requires_grad=True)
    head = Tensor(np.eye(2), requires_grad=True)
    return GnnModel("gin", [w], head)


def test_pairwise_similarity_loss_fixtures():
    model = single_node_model()
    adj2 = np.zeros((2, 2))
    g1 = Graph(np.array([[1.0, 0.0], [0.5, 0.5]]), adj2, 0)
    t = TriggerSubgraph(np.array([[0.25, 0.25]]), np.zeros((1, 1)))
    same = pairwise_similarity_loss(model, g1, g1, t, [1], [1])
    np.testing.assert_allclose(same.data, -1.0, atol=1e-12)

    # orthogonal embeddings by construction: trigger zeroes node 1,
    # leaving [1,0]/2 vs [0,1]/2
    zero_t = TriggerSubgraph(np.array([[0.0, 0.0]]), np.zeros((1, 1)))
    ga = Graph(np.array([[1.0, 0.0], [9.0, 9.0]]), adj2, 0)
    gb = Graph(np.array([[0.0, 1.0], [9.0, 9.0]]), adj2, 0)
    ortho = pairwise_similarity_loss(model, ga, gb, zero_t, [1], [1])
    np.testing.assert_allclose(ortho.data, 0.0, atol=1e-12)
    assert -1.0 <= float(ortho.data) <= 1.0


def test_hinge_similarity_loss_arithmetic():
    # two embeddings at cosine 0.4 against threshold 0.9: both ordered
    # pairs contribute 0.5
    e1 = Tensor(np.array([[1.0, 0.0]]))
    e2 = Tensor(np.array([[0.4, np.sqrt(1 - 0.16)]]))
    loss = hinge_similarity_loss([e1, e2], threshold=0.9)
    np.testing.assert_allclose(loss.data, 1.0, atol=1e-12)

    # saturated hinge: identical embeddings clear any threshold
    zero = hinge_similarity_loss([e1, e1], threshold=0.9)
    np.testing.assert_allclose(zero.data, 0.0, atol=1e-12)

    with pytest.raises(ConfigError):
        hinge_similarity_loss([e1], threshold=0.9)


def test_hinge_loss_monotone_in_threshold():
    rng = np.random.default_rng(31)
    embs = [Tensor(rng.standard_normal((1, 5))) for _ in range(4)]
    low = float(hinge_similarity_loss(embs, 0.5).data)
    high = float(hinge_similarity_loss(embs, 0.95).data)
    assert high >= low >= 0.0


def test_montage_tensors_matches_montage():
    rng = np.random.default_rng(41)
    for _ in range(25):
        n_nodes = int(rng.integers(4, 9))
        adj = np.zeros((n_nodes, n_nodes))
        for i in range(n_nodes):
            for j in range(i + 1, n_nodes):
                if rng.random() < 0.4:
                    adj[i, j] = adj[j, i] = 1.0
        g = Graph(rng.standard_normal((n_nodes, 3)), adj, 0)
        k = int(rng.integers(1, 4))
        t_adj = np.zeros((k, k))
        for i in range(k):
            for j in range(i + 1, k):
                if rng.random() < 0.7:
                    t_adj[i, j] = t_adj[j, i] = 1.0
        t = TriggerSubgraph(rng.standard_normal((k, 3)), t_adj)
        sites = [int(s) for s in rng.choice(n_nodes, size=k, replace=False)]
        reference = montage(g, t, sites)
        x, a = montage_tensors(g, Tensor(t.x), Tensor(t.adj), sites)
        np.testing.assert_allclose(x.data, reference.x, atol=1e-12)
        np.testing.assert_allclose(a.data, reference.adj, atol=1e-12)


def test_montage_tensors_errors():
    g = Graph(np.ones((3, 2)), np.zeros((3, 3)), 0)
    x_t, a_t = Tensor(np.ones((2, 2))), Tensor(np.zeros((2, 2)))
    with pytest.raises(ContractError):
        montage_tensors(g, x_t, a_t, [0, 0])
    with pytest.raises(ContractError):
        montage_tensors(g, x_t, a_t, [0, 3])
    big_x, big_a = Tensor(np.ones((4, 2))), Tensor(np.zeros((4, 4)))
    with pytest.raises(GraphTooSmallError):
        montage_tensors(g, big_x, big_a, [0, 1, 2, 3])


def test_recovery_config_validation():
    with pytest.raises(ConfigError):
        RecoveryConfig(n=0)
    with pytest.raises(ConfigError):
        RecoveryConfig(threshold=1.5)
    with pytest.raises(ConfigError):
        RecoveryConfig(batch_size=1)
    with pytest.raises(ConfigError):
        RecoveryConfig(placement="middle")


def test_batch_recovery_loss_nonnegative():
    world = small_backdoored_world(seed=1, num_graphs=60, epochs=10)
    model = world["model"]
    gen = TriggerGenerator(16, 3, seed=2)
    cfg = RecoveryConfig(n=3, placement="random")
    batch = world["poisoned_ds"].holdout_graphs[:3]
    loss = batch_recovery_loss(model, batch, gen, None, cfg, seed=0)
    assert float(loss.data) >= 0.0
    with pytest.raises(ConfigError):
        batch_recovery_loss(model, batch[:1], gen, None, cfg, seed=0)


def test_mean_pairwise_cosine_values():
    assert mean_pairwise_cosine([[1.0, 0.0], [1.0, 0.0]]) == pytest.approx(1.0)
    assert mean_pairwise_cosine([[1.0, 0.0], [0.0, 1.0]]) == pytest.approx(0.0)
    with pytest.raises(ConfigError):
        mean_pairwise_cosine([[1.0, 0.0]])


def test_recover_trigger_smoke_and_determinism():
    world = small_backdoored_world(seed=3, num_graphs=80, epochs=15)
    model = world["model"]
    holdout = world["poisoned_ds"].holdout_graphs
    cfg = RecoveryConfig(n=3, epochs=3, placement="random")
    t1, cos1 = recover_trigger(model, holdout, cfg, seed=5)
    t2, cos2 = recover_trigger(model, holdout, cfg, seed=5)
    assert t1.num_nodes == 3 and t1.feature_dim == 16
    np.testing.assert_array_equal(t1.x, t2.x)
    np.testing.assert_array_equal(t1.adj, t2.adj)
    assert cos1 == cos2
    assert -1.0 <= cos1 <= 1.0
    with pytest.raises(ConfigError):
        recover_trigger(model, [], cfg, seed=5)


def test_trigger_recoverer_estimator():
    world = small_backdoored_world(seed=4, num_graphs=80, epochs=15)
    rec = TriggerRecoverer(n=2, epochs=2, placement="random", seed=1)
    assert rec.get_params()["n"] == 2
    rec.fit(world["poisoned_ds"].holdout_graphs, world["model"])
    assert rec.trigger_.num_nodes == 2
    assert isinstance(rec.mean_cosine_, float)

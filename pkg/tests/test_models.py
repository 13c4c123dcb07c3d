"""Layer fixtures, forward-pass properties, training, and persistence."""

import numpy as np
import pytest
from conftest import check_grads

from graphpurify import autodiff as ad
from graphpurify.autodiff import Tensor
from graphpurify.errors import ConfigError, ContractError, FrozenModelError
from graphpurify.graphs import Graph, normalized_adjacency, synthesize_dataset
from graphpurify.models import (GnnModel, GraphClassifier, fine_tune,
                                gcn_layer_forward, gin_layer_forward, train)


def edge_graph(x=((1.0, 0.0), (0.0, 1.0)), labels=0):
    adj = np.array([[0.0, 1.0], [1.0, 0.0]])
    return Graph(np.asarray(x, dtype=float), adj, labels)


def test_gcn_layer_fixtures():
    # single node passes features straight through
    out = gcn_layer_forward(Tensor([[1.0]]), Tensor([[1.0, 1.0]]),
                            Tensor(np.eye(2)))
    np.testing.assert_allclose(out.data, [[1.0, 1.0]])

    # two-node edge graph: every V_norm entry is 0.5, rows average
    v = Tensor(np.full((2, 2), 0.5))
    out = gcn_layer_forward(v, Tensor(np.eye(2)), Tensor(np.eye(2)))
    np.testing.assert_allclose(out.data, [[0.5, 0.5], [0.5, 0.5]])

    # ReLU clamps negative pre-activations
    out = gcn_layer_forward(Tensor([[1.0]]), Tensor([[-2.0]]), Tensor([[1.0]]))
    assert out.data.tolist() == [[0.0]]


def test_gin_layer_fixtures():
    # isolated node: no neighbor term
    out = gin_layer_forward(Tensor([[0.0]]), Tensor([[3.0]]), Tensor([[2.0]]))
    np.testing.assert_allclose(out.data, [[6.0]])

    # two-node edge: self plus neighbor
    adj = Tensor([[0.0, 1.0], [1.0, 0.0]])
    out = gin_layer_forward(adj, Tensor([[1.0], [3.0]]), Tensor([[1.0]]))
    np.testing.assert_allclose(out.data, [[4.0], [4.0]])

    # empty adjacency degenerates to sigma(Z W)
    out = gin_layer_forward(Tensor(np.zeros((2, 2))), Tensor([[1.0], [3.0]]),
                            Tensor([[1.0]]))
    np.testing.assert_allclose(out.data, [[1.0], [3.0]])


def test_forward_hand_computed_gcn():
    g = edge_graph(x=[[1.0, 2.0], [3.0, 4.0]])
    w = Tensor(np.eye(2), requires_grad=True)
    head = Tensor(np.eye(2), requires_grad=True)
    model = GnnModel("gcn", [w], head)
    trace = model.forward(g)
    # V_norm all 0.5 -> both rows become the mean [2, 3]; embedding [2, 3]
    np.testing.assert_allclose(trace.feature_maps[0].data,
                               [[2.0, 3.0], [2.0, 3.0]], atol=1e-12)
    np.testing.assert_allclose(trace.embedding.data, [[2.0, 3.0]], atol=1e-12)
    np.testing.assert_allclose(trace.logits.data, [[2.0, 3.0]], atol=1e-12)


def test_zero_head_zeroes_logits_not_embedding():
    g = edge_graph()
    model = GnnModel.init("gin", in_dim=2, hidden_dims=(4,), num_classes=2, seed=1)
    model.head.data[:] = 0.0
    trace = model.forward(g)
    np.testing.assert_array_equal(trace.logits.data, [[0.0, 0.0]])
    assert np.abs(trace.embedding.data).sum() > 0


@pytest.mark.parametrize("kind", ["gcn", "gin"])
def test_permutation_invariance(kind):
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(3, 8))
        adj = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.4:
                    adj[i, j] = adj[j, i] = 1.0
        x = rng.standard_normal((n, 5))
        g = Graph(x, adj, 0)
        model = GnnModel.init(kind, in_dim=5, hidden_dims=(8, 8), num_classes=3,
                              seed=int(rng.integers(1000)))
        perm = rng.permutation(n)
        gp = Graph(x[perm], adj[np.ix_(perm, perm)], 0)
        np.testing.assert_allclose(model.logits_array(gp), model.logits_array(g),
                                   atol=1e-9)


@pytest.mark.parametrize("kind", ["gcn", "gin"])
def test_model_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(11)
    g = Graph(rng.standard_normal((4, 3)),
              np.array([[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 0],
                        [1, 0, 0, 0]], dtype=float), 1)
    model = GnnModel.init(kind, in_dim=3, hidden_dims=(5,), num_classes=2, seed=4)

    def loss():
        return ad.cross_entropy(model.forward(g).logits, g.label)

    check_grads(loss, model.parameters())


def test_train_reaches_separable_accuracy():
    ds = synthesize_dataset(num_graphs=40, feature_dim=6, seed=7)
    model = GnnModel.init("gin", in_dim=6, hidden_dims=(16, 16), num_classes=2,
                          seed=7)
    train(model, ds.graphs, epochs=50, lr=0.05, batch_size=16, seed=7)
    preds = model.predict_many(ds.graphs)
    acc = float(np.mean(preds == [g.label for g in ds.graphs]))
    assert acc >= 0.95


def test_zero_epochs_leaves_model_unchanged():
    ds = synthesize_dataset(num_graphs=10, feature_dim=4, seed=1)
    model = GnnModel.init("gcn", in_dim=4, num_classes=2, seed=2)
    before = [w.data.copy() for w in model.parameters()]
    train(model, ds.graphs, epochs=0, seed=0)
    for w, b in zip(model.parameters(), before):
        np.testing.assert_array_equal(w.data, b)


def test_train_determinism():
    ds = synthesize_dataset(num_graphs=20, feature_dim=4, seed=3)
    runs = []
    for _ in range(2):
        model = GnnModel.init("gin", in_dim=4, hidden_dims=(8,), num_classes=2,
                              seed=5)
        train(model, ds.graphs, epochs=3, lr=0.05, batch_size=8, seed=5)
        runs.append([p.data.copy() for p in model.parameters()])
    for a, b in zip(*runs):
        np.testing.assert_array_equal(a, b)


def test_train_empty_split_rejected():
    model = GnnModel.init("gin", in_dim=4, num_classes=2, seed=0)
    with pytest.raises(ConfigError):
        train(model, [], epochs=1)


def test_fine_tune_contract():
    ds = synthesize_dataset(num_graphs=10, feature_dim=4, seed=9)
    model = GnnModel.init("gin", in_dim=4, hidden_dims=(8,), num_classes=2, seed=9)
    original = [p.data.copy() for p in model.parameters()]

    teacher = fine_tune(model, ds.graphs, epochs=0)
    assert teacher.frozen
    for t, o in zip(teacher.parameters(), original):
        np.testing.assert_array_equal(t.data, o)

    teacher2 = fine_tune(model, ds.graphs, epochs=2, lr=0.01)
    for m, o in zip(model.parameters(), original):
        np.testing.assert_array_equal(m.data, o)  # original untouched
    with pytest.raises(FrozenModelError):
        teacher2.step(0.1)
    with pytest.raises(FrozenModelError):
        train(teacher2, ds.graphs, epochs=1)
    with pytest.raises(ConfigError):
        fine_tune(model, [], epochs=1)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    model = GnnModel.init("gcn", in_dim=5, hidden_dims=(7, 3), num_classes=4,
                          seed=13)
    p1, p2 = tmp_path / "m.json", tmp_path / "m2.json"
    model.save(str(p1))
    loaded = GnnModel.load(str(p1))
    loaded.save(str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    for a, b in zip(model.parameters(), loaded.parameters()):
        np.testing.assert_array_equal(a.data, b.data)
    g = edge_graph(x=[[1.0, 0.0, 0.0, 0.0, 2.0], [0.0, 1.0, 0.0, 1.0, 0.0]])
    np.testing.assert_array_equal(model.logits_array(g), loaded.logits_array(g))


def test_frozen_flag_survives_checkpoint(tmp_path):
    model = GnnModel.init("gin", in_dim=2, num_classes=2, seed=1).freeze()
    path = tmp_path / "frozen.json"
    model.save(str(path))
    loaded = GnnModel.load(str(path))
    assert loaded.frozen
    with pytest.raises(FrozenModelError):
        loaded.step(0.1)


def test_bad_kind_and_dims():
    with pytest.raises(ConfigError):
        GnnModel("sage", [Tensor(np.eye(2))], Tensor(np.eye(2)))
    with pytest.raises(ContractError):
        GnnModel("gin", [Tensor(np.ones((2, 3)))], Tensor(np.ones((4, 2))))
    model = GnnModel.init("gin", in_dim=3, num_classes=2, seed=0)
    with pytest.raises(ContractError):
        model.forward(edge_graph())  # feature dim 2 vs model 3


def test_classifier_estimator_api():
    ds = synthesize_dataset(num_graphs=30, feature_dim=6, seed=21)
    clf = GraphClassifier(kind="gin", hidden_dims=(12,), epochs=30, lr=0.05,
                          batch_size=16, seed=21)
    params = clf.get_params()
    assert params["kind"] == "gin" and params["epochs"] == 30
    clf.set_params(epochs=40)
    clf.fit(ds.graphs)
    y = np.array([g.label for g in ds.graphs])
    assert clf.score(ds.graphs, y) >= 0.9
    proba = clf.predict_proba(ds.graphs[:5])
    np.testing.assert_allclose(proba.sum(axis=1), np.ones(5), atol=1e-12)
    assert set(clf.predict(ds.graphs)) <= {0, 1}

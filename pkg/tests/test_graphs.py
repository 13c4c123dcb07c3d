"""Data-model, splitting, loader, and random-subgraph checks."""

import numpy as np
import pytest

from graphpurify.errors import (ConfigError, ContractError, DatasetError,
                                FormatError)
from graphpurify.graphs import (Graph, GraphDataset, TriggerSubgraph,
                                erdos_renyi_subgraph, load_tu_dataset,
                                normalized_adjacency, split_dataset,
                                synthesize_dataset)


def tiny_graph(n=2, d=3, label=0):
    adj = np.zeros((n, n))
    if n > 1:
        adj[0, 1] = adj[1, 0] = 1.0
    return Graph(np.ones((n, d)), adj, label)


def test_graph_validation():
    with pytest.raises(ContractError):
        Graph(np.ones((2, 2)), np.array([[0.0, 1.0], [0.0, 0.0]]), 0)  # asymmetric
    with pytest.raises(ContractError):
        Graph(np.ones((2, 2)), np.array([[1.0, 0.0], [0.0, 0.0]]), 0)  # self loop
    with pytest.raises(ContractError):
        Graph(np.ones((2, 2)), np.array([[0.0, 2.0], [2.0, 0.0]]), 0)  # not binary
    with pytest.raises(ContractError):
        Graph(np.ones((2, 2)), np.zeros((2, 2)), -1)


def test_dataset_invariants():
    graphs = [tiny_graph(label=i % 2) for i in range(10)]
    with pytest.raises(ContractError):
        GraphDataset(graphs, 2, train_idx=[0, 1], test_idx=[1, 2])
    with pytest.raises(ContractError):
        GraphDataset(graphs, 2, train_idx=[0], test_idx=[1], holdout_idx=[2])
    with pytest.raises(ContractError):
        GraphDataset(graphs, 1)  # label=1 out of range
    ds = GraphDataset(graphs, 2, train_idx=[0, 1], test_idx=[2, 3],
                      holdout_idx=[3])
    assert len(ds.train_graphs) == 2 and len(ds.holdout_graphs) == 1


def test_normalized_adjacency_fixtures():
    single = Graph(np.ones((1, 1)), np.zeros((1, 1)), 0)
    np.testing.assert_allclose(normalized_adjacency(single), [[1.0]])

    edge = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(normalized_adjacency(edge), np.full((2, 2), 0.5),
                               atol=1e-15)

    triangle = np.ones((3, 3)) - np.eye(3)
    np.testing.assert_allclose(normalized_adjacency(triangle),
                               np.full((3, 3), 1.0 / 3.0), atol=1e-15)


def test_normalized_adjacency_regular_graph():
    # 4-cycle is 2-regular: every edge entry (and diagonal) must be 1/(2+1)
    n = 4
    adj = np.zeros((n, n))
    for i in range(n):
        adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = 1.0
    v = normalized_adjacency(adj)
    on_edges = v[(adj + np.eye(n)) > 0]
    np.testing.assert_allclose(on_edges, 1.0 / 3.0, atol=1e-15)
    np.testing.assert_allclose(v, v.T, atol=1e-15)


def test_split_counts_and_determinism():
    graphs = [tiny_graph(label=i % 2) for i in range(100)]
    ds = GraphDataset(graphs, 2)
    split = split_dataset(ds, 0.8, 0.03, seed=7)
    assert len(split.train_idx) == 80
    assert len(split.test_idx) == 20
    assert len(split.holdout_idx) == 3
    assert set(split.holdout_idx) <= set(split.test_idx)
    assert not set(split.train_idx) & set(split.test_idx)

    again = split_dataset(ds, 0.8, 0.03, seed=7)
    assert split.train_idx == again.train_idx
    assert split.holdout_idx == again.holdout_idx
    other = split_dataset(ds, 0.8, 0.03, seed=8)
    assert split.train_idx != other.train_idx


def test_split_holdout_scales_with_dataset():
    graphs = [tiny_graph(n=1, label=0) for _ in range(2000)]
    # single-class is fine for splitting arithmetic
    ds = GraphDataset(graphs, 1)
    split = split_dataset(ds, 0.8, 0.10, seed=3)
    assert len(split.holdout_idx) == 200


def test_split_fraction_validation():
    ds = GraphDataset([tiny_graph(label=0) for _ in range(10)], 1)
    with pytest.raises(ConfigError):
        split_dataset(ds, 1.5, 0.03, seed=0)
    with pytest.raises(ConfigError):
        split_dataset(ds, 0.8, 0.0, seed=0)


def test_erdos_renyi_extremes():
    full = erdos_renyi_subgraph(3, 1.0, 4, seed=0)
    np.testing.assert_array_equal(full.adj, np.ones((3, 3)) - np.eye(3))
    empty = erdos_renyi_subgraph(3, 0.0, 4, seed=0)
    np.testing.assert_array_equal(empty.adj, np.zeros((3, 3)))
    assert full.x.shape == (3, 4)


def test_erdos_renyi_edge_count_statistics():
    # n=4, p=0.5: expected 3.0 edges; check the sample mean of 10k draws
    counts = []
    for s in range(10000):
        t = erdos_renyi_subgraph(4, 0.5, 2, seed=s)
        counts.append(t.adj.sum() / 2.0)
    mean = np.mean(counts)
    stderr = np.sqrt(6 * 0.25 / 10000)
    assert abs(mean - 3.0) <= 3 * stderr


def test_erdos_renyi_feature_pool():
    pool = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    t = erdos_renyi_subgraph(5, 0.5, 2, seed=1, feature_pool=pool)
    for row in t.x:
        assert any(np.array_equal(row, p) for p in pool)


def test_synthesize_dataset_shape():
    ds = synthesize_dataset(num_graphs=40, feature_dim=8, seed=5)
    assert len(ds) == 40
    assert ds.num_classes == 2
    assert ds.feature_dim == 8
    labels = [g.label for g in ds.graphs]
    assert labels.count(0) == 20 and labels.count(1) == 20
    again = synthesize_dataset(num_graphs=40, feature_dim=8, seed=5)
    for a, b in zip(ds.graphs, again.graphs):
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.adj, b.adj)


def test_dataset_json_roundtrip(tmp_path):
    ds = synthesize_dataset(num_graphs=12, feature_dim=4, seed=2)
    ds = split_dataset(ds, 0.8, 0.1, seed=2)
    p1 = tmp_path / "ds.json"
    p2 = tmp_path / "ds2.json"
    ds.save(str(p1))
    loaded = GraphDataset.load(str(p1))
    loaded.save(str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    for a, b in zip(ds.graphs, loaded.graphs):
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.adj, b.adj)
        assert a.label == b.label
    assert loaded.holdout_idx == ds.holdout_idx


def test_trigger_json_roundtrip(tmp_path):
    t = erdos_renyi_subgraph(3, 0.5, 4, seed=9)
    path = tmp_path / "trigger.json"
    t.save(str(path), extra={"mean_cosine": 0.91})
    back = TriggerSubgraph.load(str(path))
    np.testing.assert_array_equal(back.x, t.x)
    np.testing.assert_array_equal(back.adj, t.adj)


# ---------------------------------------------------------------------------
# TU-format loader
# ---------------------------------------------------------------------------

def write_tu_fixture(root, name="toy", dangling=False):
    """Graph 1: triangle (nodes 1-3). Graph 2: single edge (nodes 4-5)."""
    edges = [(1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1), (4, 5), (5, 4)]
    if dangling:
        edges.append((6, 1))
    (root / f"{name}_A.txt").write_text(
        "".join(f"{u}, {v}\n" for u, v in edges))
    (root / f"{name}_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
    (root / f"{name}_graph_labels.txt").write_text("1\n-1\n")
    (root / f"{name}_node_labels.txt").write_text("0\n1\n0\n1\n1\n")


def test_load_tu_toy(tmp_path):
    write_tu_fixture(tmp_path)
    ds = load_tu_dataset(str(tmp_path))
    assert [g.num_nodes for g in ds.graphs] == [3, 2]
    assert ds.num_classes == 2
    # labels -1,1 remap to 0,1 in sorted order
    assert [g.label for g in ds.graphs] == [1, 0]
    np.testing.assert_array_equal(ds.graphs[0].adj, np.ones((3, 3)) - np.eye(3))
    # node labels one-hot encoded
    np.testing.assert_array_equal(ds.graphs[0].x,
                                  [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])


def test_load_tu_dangling_edge(tmp_path):
    write_tu_fixture(tmp_path, dangling=True)
    with pytest.raises(FormatError):
        load_tu_dataset(str(tmp_path))


def test_load_tu_missing_file(tmp_path):
    write_tu_fixture(tmp_path)
    (tmp_path / "toy_graph_labels.txt").unlink()
    with pytest.raises(DatasetError):
        load_tu_dataset(str(tmp_path))

"""Graph data model, dataset loading and splitting, and random subgraphs.

Graphs are dense: an N x d float feature matrix plus an N x N binary
symmetric adjacency with zero diagonal. Datasets carry train/test split
assignments and a small clean holdout drawn from the test portion.
"""

from __future__ import annotations

import glob
import json
import os

import numpy as np

from .errors import (ConfigError, ContractError, DatasetError, FormatError,
                     GraphTooSmallError)
from .validation import check_adjacency, check_features, check_fraction, check_label

# rng stream tags so different stages never share a sequence for one seed
_SPLIT_STREAM = 101
_ER_STREAM = 102
_SYNTH_STREAM = 103


class Graph:
    """One classification instance: features, adjacency, class label."""

    __slots__ = ("x", "adj", "label")

    def __init__(self, x, adj, label, validate: bool = True):
        if validate:
            self.x = check_features(x)
            self.adj = check_adjacency(adj, num_nodes=self.x.shape[0])
            self.label = check_label(label)
        else:
            self.x = x
            self.adj = adj
            self.label = label

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    def copy(self) -> "Graph":
        return Graph(self.x.copy(), self.adj.copy(), self.label, validate=False)

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "adj": self.adj.astype(int).tolist(),
            "label": int(self.label),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Graph":
        return cls(d["x"], d["adj"], d["label"])

    def __repr__(self):
        return f"Graph(n={self.num_nodes}, d={self.feature_dim}, y={self.label})"


class TriggerSubgraph:
    """The injected pattern: an n x d feature block and n x n adjacency."""

    __slots__ = ("x", "adj")

    def __init__(self, x, adj):
        self.x = check_features(x)
        self.adj = check_adjacency(adj, num_nodes=self.x.shape[0])

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "adj": self.adj.astype(int).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TriggerSubgraph":
        return cls(d["x"], d["adj"])

    def save(self, path: str, extra: dict | None = None):
        doc = self.to_dict()
        doc["n"] = self.num_nodes
        doc["d"] = self.feature_dim
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "TriggerSubgraph":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def __repr__(self):
        return f"TriggerSubgraph(n={self.num_nodes}, d={self.feature_dim})"


class GraphDataset:
    """A list of graphs with class count and split assignments.

    Train and test are disjoint index sets; the clean holdout is a subset
    of the test indices (the defender samples it from the test pool).
    """

    def __init__(self, graphs, num_classes: int,
                 train_idx=(), test_idx=(), holdout_idx=()):
        if not graphs:
            raise DatasetError("dataset must contain at least one graph")
        dims = {g.feature_dim for g in graphs}
        if len(dims) != 1:
            raise DatasetError(f"inconsistent feature dimensions: {sorted(dims)}")
        for g in graphs:
            check_label(g.label, num_classes)
        self.graphs = list(graphs)
        self.num_classes = int(num_classes)
        self.train_idx = tuple(int(i) for i in train_idx)
        self.test_idx = tuple(int(i) for i in test_idx)
        self.holdout_idx = tuple(int(i) for i in holdout_idx)
        self._check_splits()

    def _check_splits(self):
        m = len(self.graphs)
        for name, idx in (("train", self.train_idx), ("test", self.test_idx),
                          ("holdout", self.holdout_idx)):
            if any(i < 0 or i >= m for i in idx):
                raise ContractError(f"{name} split index out of range")
            if len(set(idx)) != len(idx):
                raise ContractError(f"{name} split contains duplicates")
        if set(self.train_idx) & set(self.test_idx):
            raise ContractError("train and test splits overlap")
        if not set(self.holdout_idx) <= set(self.test_idx):
            raise ContractError("holdout must be drawn from the test split")

    def __len__(self):
        return len(self.graphs)

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim

    @property
    def avg_nodes(self) -> float:
        return float(np.mean([g.num_nodes for g in self.graphs]))

    def subset(self, idx) -> list:
        return [self.graphs[i] for i in idx]

    @property
    def train_graphs(self) -> list:
        return self.subset(self.train_idx)

    @property
    def test_graphs(self) -> list:
        return self.subset(self.test_idx)

    @property
    def holdout_graphs(self) -> list:
        return self.subset(self.holdout_idx)

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "train_idx": list(self.train_idx),
            "test_idx": list(self.test_idx),
            "holdout_idx": list(self.holdout_idx),
            "graphs": [g.to_dict() for g in self.graphs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GraphDataset":
        graphs = [Graph.from_dict(g) for g in d["graphs"]]
        return cls(graphs, d["num_classes"], d["train_idx"], d["test_idx"],
                   d["holdout_idx"])

    def save(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "GraphDataset":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def montage(g: Graph, t: TriggerSubgraph, sites) -> Graph:
    """Stamp a trigger into a host graph by node replacement.

    Trigger node i takes over host node sites[i]: its feature row and
    the induced adjacency block among the selected nodes are replaced,
    while every edge between selected and unselected nodes is kept. The
    node count is unchanged, so the result stays node-aligned with g.
    """
    if t.feature_dim != g.feature_dim:
        raise ContractError(
            f"trigger feature dim {t.feature_dim} != graph dim {g.feature_dim}")
    if t.num_nodes > g.num_nodes:
        raise GraphTooSmallError(
            f"trigger has {t.num_nodes} nodes but graph only {g.num_nodes}")
    sites = [int(s) for s in sites]
    if len(sites) != t.num_nodes:
        raise ContractError(
            f"expected {t.num_nodes} sites, got {len(sites)}")
    if len(set(sites)) != len(sites):
        raise ContractError(f"duplicate injection sites: {sites}")
    if any(s < 0 or s >= g.num_nodes for s in sites):
        raise ContractError(f"injection site out of range: {sites}")
    x = g.x.copy()
    x[sites] = t.x
    adj = g.adj.copy()
    adj[np.ix_(sites, sites)] = t.adj
    return Graph(x, adj, g.label, validate=False)


def normalized_adjacency(g) -> np.ndarray:
    """Symmetric degree-normalized adjacency with self-loops added.

    Accepts a Graph or a raw adjacency matrix and returns
    (D+I)^(-1/2) (A+I) (D+I)^(-1/2), the propagation matrix of the
    convolutional layers. Self-loops guarantee positive degrees.
    """
    adj = g.adj if isinstance(g, Graph) else np.asarray(g, dtype=np.float64)
    a_tilde = adj + np.eye(adj.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]


def split_dataset(ds: GraphDataset, train_frac: float = 0.8,
                  holdout_frac: float = 0.03, seed: int = 0) -> GraphDataset:
    """Assign train/test membership and carve the clean holdout.

    The holdout is sampled from the test portion and sized as a fraction
    of the whole dataset (at least one graph), so a 0.03 rate on 100
    graphs gives 80 train, 20 test, 3 holdout.
    """
    train_frac = check_fraction(train_frac, "train_frac")
    holdout_frac = check_fraction(holdout_frac, "holdout_frac")
    m = len(ds)
    rng = np.random.default_rng([seed, _SPLIT_STREAM])
    order = rng.permutation(m)
    n_train = int(round(train_frac * m))
    train_idx = np.sort(order[:n_train])
    test_idx = np.sort(order[n_train:])
    if len(test_idx) == 0:
        raise ConfigError("train_frac leaves no test graphs")
    n_hold = max(1, int(round(holdout_frac * m)))
    if n_hold > len(test_idx):
        raise ConfigError(
            f"holdout of {n_hold} graphs exceeds test split of {len(test_idx)}")
    holdout_idx = np.sort(rng.permutation(test_idx)[:n_hold])
    return GraphDataset(ds.graphs, ds.num_classes, train_idx.tolist(),
                        test_idx.tolist(), holdout_idx.tolist())


def erdos_renyi_subgraph(n: int, p: float, d: int, seed: int,
                         feature_pool: np.ndarray | None = None) -> TriggerSubgraph:
    """Random trigger: each undirected edge present with probability p.

    Node features are drawn uniformly from feature_pool rows when given
    (the training-set feature rows, so the trigger matches the ambient
    distribution) and standard normal otherwise.
    """
    if n < 1:
        raise ContractError(f"trigger needs at least one node, got n={n}")
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng([seed, _ER_STREAM])
    adj = np.zeros((n, n))
    upper = rng.random((n, n)) < p
    for i in range(n):
        for j in range(i + 1, n):
            if upper[i, j]:
                adj[i, j] = adj[j, i] = 1.0
    if feature_pool is not None:
        pool = check_features(feature_pool)
        rows = rng.integers(0, pool.shape[0], size=n)
        x = pool[rows].copy()
    else:
        x = rng.standard_normal((n, d))
    return TriggerSubgraph(x, adj)


def synthesize_dataset(num_graphs: int = 500, feature_dim: int = 8,
                       seed: int = 0, min_nodes: int = 10, max_nodes: int = 20,
                       edge_p=(0.15, 0.30), noise: float = 0.3) -> GraphDataset:
    """Build the bundled two-class corpus; no splits assigned yet.

    Each class owns half of the feature dimensions and splits into one
    latent mode per owned dimension: a graph's nodes share a one-hot-like
    mean vector inside the class half. Classes stay linearly separable
    while same-class graphs from different modes embed far apart, which
    mirrors the within-class diversity (and the near-one-hot features)
    of real corpora. Edge density is a second, per-class knob.
    """
    if num_graphs < 2:
        raise ConfigError("synthetic dataset needs at least two graphs")
    if feature_dim < 2:
        raise ConfigError("synthetic graphs need at least two feature dims")
    rng = np.random.default_rng([seed, _SYNTH_STREAM])
    half = feature_dim // 2
    modes = {0: list(range(half)), 1: list(range(half, feature_dim))}
    graphs = []
    for i in range(num_graphs):
        label = i % 2
        mean = np.zeros(feature_dim)
        mean[modes[label][int(rng.integers(len(modes[label])))]] = 1.0
        n = int(rng.integers(min_nodes, max_nodes + 1))
        adj = np.zeros((n, n))
        upper = rng.random((n, n)) < edge_p[label]
        for a in range(n):
            for b in range(a + 1, n):
                if upper[a, b]:
                    adj[a, b] = adj[b, a] = 1.0
        x = mean + noise * rng.standard_normal((n, feature_dim))
        graphs.append(Graph(x, adj, label))
    return GraphDataset(graphs, num_classes=2)


# ---------------------------------------------------------------------------
# TU-format ingestion
# ---------------------------------------------------------------------------

def _tu_file(path: str, name: str, suffix: str, required: bool) -> str | None:
    candidate = os.path.join(path, f"{name}_{suffix}.txt")
    if os.path.isfile(candidate):
        return candidate
    if required:
        raise DatasetError(f"missing TU file: {candidate}")
    return None


def load_tu_dataset(path: str) -> GraphDataset:
    """Read a TU-format directory (edge list, graph indicator, labels).

    Node attributes are used as features when present; otherwise node
    labels are one-hot encoded; otherwise every node gets the constant
    feature [1]. Graph labels are remapped to 0..C-1 in sorted order.
    """
    if not os.path.isdir(path):
        raise DatasetError(f"not a directory: {path}")
    markers = sorted(glob.glob(os.path.join(path, "*_A.txt")))
    if not markers:
        raise DatasetError(f"no *_A.txt edge file under {path}")
    name = os.path.basename(markers[0])[:-len("_A.txt")]

    indicator_file = _tu_file(path, name, "graph_indicator", required=True)
    labels_file = _tu_file(path, name, "graph_labels", required=True)
    attrs_file = _tu_file(path, name, "node_attributes", required=False)
    nlabels_file = _tu_file(path, name, "node_labels", required=False)

    with open(indicator_file) as fh:
        indicator = [int(line.strip()) for line in fh if line.strip()]
    with open(labels_file) as fh:
        raw_labels = [int(line.strip()) for line in fh if line.strip()]

    num_nodes_total = len(indicator)
    num_graphs = len(raw_labels)
    if num_graphs == 0 or num_nodes_total == 0:
        raise DatasetError("empty TU dataset")
    if max(indicator) > num_graphs or min(indicator) < 1:
        raise FormatError("graph indicator references an unknown graph id")

    # node ids are global and 1-indexed; map to (graph, local index)
    sizes = [0] * num_graphs
    for gid in indicator:
        sizes[gid - 1] += 1
    if min(sizes) == 0:
        raise DatasetError("TU dataset contains a graph with zero nodes")
    node_graph = np.asarray(indicator, dtype=int) - 1
    local_index = np.empty(num_nodes_total, dtype=int)
    seen = [0] * num_graphs
    for node, gid in enumerate(node_graph):
        local_index[node] = seen[gid]
        seen[gid] += 1

    adjs = [np.zeros((s, s)) for s in sizes]
    with open(markers[0]) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise FormatError(f"malformed edge line: {line!r}")
            u, v = int(parts[0]), int(parts[1])
            if not (1 <= u <= num_nodes_total and 1 <= v <= num_nodes_total):
                raise FormatError(f"edge references unknown node: {line!r}")
            gu, gv = node_graph[u - 1], node_graph[v - 1]
            if gu != gv:
                raise FormatError(f"edge crosses graphs: {line!r}")
            if u == v:
                continue
            lu, lv = local_index[u - 1], local_index[v - 1]
            adjs[gu][lu, lv] = adjs[gu][lv, lu] = 1.0

    if attrs_file is not None:
        with open(attrs_file) as fh:
            rows = [[float(t) for t in line.replace(",", " ").split()]
                    for line in fh if line.strip()]
        if len(rows) != num_nodes_total:
            raise FormatError("node attribute count differs from node count")
        feats = np.asarray(rows)
    elif nlabels_file is not None:
        with open(nlabels_file) as fh:
            nl = [int(line.strip()) for line in fh if line.strip()]
        if len(nl) != num_nodes_total:
            raise FormatError("node label count differs from node count")
        values = sorted(set(nl))
        index = {v: k for k, v in enumerate(values)}
        feats = np.zeros((num_nodes_total, len(values)))
        for node, v in enumerate(nl):
            feats[node, index[v]] = 1.0
    else:
        feats = np.ones((num_nodes_total, 1))

    per_graph_rows = [np.zeros((s, feats.shape[1])) for s in sizes]
    for node in range(num_nodes_total):
        per_graph_rows[node_graph[node]][local_index[node]] = feats[node]

    label_values = sorted(set(raw_labels))
    label_map = {v: k for k, v in enumerate(label_values)}
    graphs = []
    for gid in range(num_graphs):
        graphs.append(Graph(per_graph_rows[gid], adjs[gid],
                            label_map[raw_labels[gid]]))
    return GraphDataset(graphs, num_classes=len(label_values))

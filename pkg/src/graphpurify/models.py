"""Graph classifiers: stacked conv layers, mean-pool readout, linear head.

Two aggregation kinds are supported. The "gcn" layer propagates through
the symmetric degree-normalized adjacency; the "gin" layer sums self and
neighbor features. Layers are bias-free so the class-activation weights
of the explainability module stay exact. A single tensor-level forward
serves both fixed graphs and differentiable (learned) inputs.
"""

from __future__ import annotations

import json

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .errors import ConfigError, ContractError, FrozenModelError
from .graphs import Graph, GraphDataset, normalized_adjacency

_INIT_STREAM = 201
_TRAIN_STREAM = 202

KINDS = ("gcn", "gin")


def gcn_layer_forward(v_norm: Tensor, z_prev: Tensor, w: Tensor) -> Tensor:
    """ReLU(V_norm @ Z @ W) with V_norm the normalized adjacency."""
    return ad.relu(ad.matmul(ad.matmul(v_norm, z_prev), w))


def gin_layer_forward(adj: Tensor, z_prev: Tensor, w: Tensor,
                      eps: float = 0.0) -> Tensor:
    """ReLU(((1 + eps) * Z + A @ Z) @ W); eps stays 0 throughout."""
    combined = ad.add(ad.mul(as_tensor(1.0 + eps), z_prev),
                      ad.matmul(adj, z_prev))
    return ad.relu(ad.matmul(combined, w))


class ForwardTrace:
    """All intermediates of one forward pass, kept differentiable.

    feature_maps[l] is the N x d_l output of layer l; embedding is its
    column-wise mean (1 x d_L); logits are pre-softmax scores (1 x C).
    """

    __slots__ = ("feature_maps", "embedding", "logits")

    def __init__(self, feature_maps, embedding, logits):
        self.feature_maps = feature_maps
        self.embedding = embedding
        self.logits = logits

    @property
    def num_layers(self) -> int:
        return len(self.feature_maps)


class GnnModel:
    """Weights plus aggregation kind; plays clean, backdoored, teacher,
    and student roles depending on who trains it."""

    def __init__(self, kind: str, weights, head, frozen: bool = False):
        if kind not in KINDS:
            raise ConfigError(f"unknown model kind {kind!r}, expected one of {KINDS}")
        self.kind = kind
        self.weights = list(weights)
        self.head = head
        self.frozen = bool(frozen)
        dims = [w.data.shape for w in self.weights] + [self.head.data.shape]
        for prev, cur in zip(dims, dims[1:]):
            if prev[1] != cur[0]:
                raise ContractError(f"layer dimensions do not chain: {dims}")

    @classmethod
    def init(cls, kind: str, in_dim: int, hidden_dims=(32, 32, 32),
             num_classes: int = 2, seed: int = 0) -> "GnnModel":
        rng = np.random.default_rng([seed, _INIT_STREAM])
        dims = [in_dim, *hidden_dims]
        weights = []
        for d_in, d_out in zip(dims, dims[1:]):
            scale = np.sqrt(2.0 / d_in)
            weights.append(Tensor(scale * rng.standard_normal((d_in, d_out)),
                                  requires_grad=True))
        head_scale = np.sqrt(1.0 / dims[-1])
        head = Tensor(head_scale * rng.standard_normal((dims[-1], num_classes)),
                      requires_grad=True)
        return cls(kind, weights, head)

    @property
    def in_dim(self) -> int:
        return self.weights[0].data.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.head.data.shape[0]

    @property
    def num_classes(self) -> int:
        return self.head.data.shape[1]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list:
        return [*self.weights, self.head]

    def copy(self) -> "GnnModel":
        weights = [Tensor(w.data.copy(), requires_grad=True) for w in self.weights]
        head = Tensor(self.head.data.copy(), requires_grad=True)
        return GnnModel(self.kind, weights, head)

    def freeze(self) -> "GnnModel":
        self.frozen = True
        for p in self.parameters():
            p.requires_grad = False
        return self

    def step(self, lr: float, grads=None):
        if self.frozen:
            raise FrozenModelError("cannot update a frozen model")
        ad.sgd_step(self.parameters(), lr, grads)

    # ---- forward passes ----

    def forward_tensors(self, x: Tensor, adj: Tensor,
                        v_norm: Tensor | None = None) -> ForwardTrace:
        """Forward from tensors so gradients can reach learned inputs."""
        if x.data.shape[1] != self.in_dim:
            raise ContractError(
                f"feature dim {x.data.shape[1]} does not match model {self.in_dim}")
        if self.kind == "gcn":
            if v_norm is None:
                v_norm = _normalized_adjacency_tensor(adj)
            prop = v_norm
        else:
            prop = adj
        z = x
        maps = []
        for w in self.weights:
            if self.kind == "gcn":
                z = gcn_layer_forward(prop, z, w)
            else:
                z = gin_layer_forward(prop, z, w)
            maps.append(z)
        embedding = ad.mean_rows(z)
        logits = ad.matmul(embedding, self.head)
        return ForwardTrace(maps, embedding, logits)

    def forward(self, g: Graph, track_inputs: bool = False) -> ForwardTrace:
        # track_inputs makes the trace differentiable even when every
        # weight is frozen (needed to attribute frozen models)
        x = Tensor(g.x, requires_grad=track_inputs)
        if self.kind == "gcn":
            v_norm = Tensor(normalized_adjacency(g))
            return self.forward_tensors(x, Tensor(g.adj), v_norm)
        return self.forward_tensors(x, Tensor(g.adj))

    def logits_array(self, g: Graph) -> np.ndarray:
        return self.forward(g).logits.data[0]

    def embedding_array(self, g: Graph) -> np.ndarray:
        return self.forward(g).embedding.data[0]

    def predict(self, g: Graph) -> int:
        return int(np.argmax(self.logits_array(g)))

    def predict_many(self, graphs) -> np.ndarray:
        return np.array([self.predict(g) for g in graphs], dtype=int)

    # ---- persistence ----

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "frozen": self.frozen,
            "weights": [w.data.tolist() for w in self.weights],
            "head": self.head.data.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GnnModel":
        weights = [Tensor(w, requires_grad=True) for w in d["weights"]]
        head = Tensor(d["head"], requires_grad=True)
        model = cls(d["kind"], weights, head)
        if d.get("frozen"):
            model.freeze()
        return model

    def save(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "GnnModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _normalized_adjacency_tensor(adj: Tensor) -> Tensor:
    """Differentiable (D+I)^(-1/2) (A+I) (D+I)^(-1/2)."""
    n = adj.data.shape[0]
    a_tilde = ad.add(adj, Tensor(np.eye(n)))
    inv_sqrt = ad.power(ad.sum_rows(a_tilde), -0.5)
    return ad.mul(ad.mul(a_tilde, inv_sqrt), ad.transpose(inv_sqrt))


def _as_graph_list(data) -> list:
    if isinstance(data, GraphDataset):
        return data.train_graphs
    return list(data)


def mean_cross_entropy(model: GnnModel, graphs) -> Tensor:
    """Mean classification loss over a batch, as one differentiable scalar."""
    total = None
    for g in graphs:
        loss = ad.cross_entropy(model.forward(g).logits, g.label)
        total = loss if total is None else ad.add(total, loss)
    return ad.mul(total, as_tensor(1.0 / len(graphs)))


def train(model: GnnModel, data, epochs: int, lr: float = 0.05,
          batch_size: int = 64, seed: int = 0) -> GnnModel:
    """Mini-batch SGD on cross-entropy; trains in place and returns model.

    ``data`` is a GraphDataset (its training split is used) or a plain
    list of graphs. Deterministic given the seed.
    """
    graphs = _as_graph_list(data)
    if not graphs:
        raise ConfigError("training split is empty")
    if model.frozen:
        raise FrozenModelError("cannot train a frozen model")
    rng = np.random.default_rng([seed, _TRAIN_STREAM])
    for _ in range(int(epochs)):
        order = rng.permutation(len(graphs))
        for start in range(0, len(order), batch_size):
            batch = [graphs[i] for i in order[start:start + batch_size]]
            loss = mean_cross_entropy(model, batch)
            grads = ad.backward(loss, accumulate=False)
            model.step(lr, grads)
    return model


def fine_tune(model: GnnModel, holdout, epochs: int, lr: float = 0.001,
              batch_size: int = 64, seed: int = 0) -> GnnModel:
    """Clean-data fine-tuning for the distillation teacher.

    Returns a frozen copy; the input model is untouched.
    """
    holdout = list(holdout)
    if not holdout:
        raise ConfigError("holdout is empty")
    teacher = model.copy()
    if epochs > 0:
        train(teacher, holdout, epochs, lr=lr, batch_size=batch_size, seed=seed)
    return teacher.freeze()


class GraphClassifier(BaseEstimator, ClassifierMixin):
    """Estimator wrapper: fit on a list of graphs, predict class labels.

    Labels are taken from the graphs themselves unless ``y`` is passed
    to ``fit``. The fitted network is available as ``model_``.
    """

    def __init__(self, kind="gin", hidden_dims=(32, 32, 32), num_classes=None,
                 epochs=30, lr=0.05, batch_size=64, seed=0):
        self.kind = kind
        self.hidden_dims = hidden_dims
        self.num_classes = num_classes
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, graphs, y=None):
        graphs = list(graphs)
        if not graphs:
            raise ConfigError("cannot fit on an empty graph list")
        if y is not None:
            y = np.asarray(y, dtype=int)
            if len(y) != len(graphs):
                raise ContractError("y length does not match graph count")
            graphs = [Graph(g.x, g.adj, int(label), validate=False)
                      for g, label in zip(graphs, y)]
        labels = [g.label for g in graphs]
        n_classes = self.num_classes or max(labels) + 1
        self.classes_ = np.arange(n_classes)
        self.model_ = GnnModel.init(self.kind, graphs[0].feature_dim,
                                    tuple(self.hidden_dims), n_classes,
                                    seed=self.seed)
        train(self.model_, graphs, self.epochs, lr=self.lr,
              batch_size=self.batch_size, seed=self.seed)
        return self

    def predict(self, graphs) -> np.ndarray:
        return self.model_.predict_many(list(graphs))

    def predict_proba(self, graphs) -> np.ndarray:
        rows = []
        for g in graphs:
            logits = self.model_.forward(g).logits
            rows.append(ad.softmax_rows(logits).data[0])
        return np.asarray(rows)

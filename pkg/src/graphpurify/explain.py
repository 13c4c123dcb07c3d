"""Instance-level explainability: node-importance masks and class heatmaps.

Two tools drive the defense. A mask explainer scores how much each node's
features matter to a prediction by optimizing a sigmoid-parameterized
soft mask. A class-activation mapper attributes the class score to nodes
layer by layer: per-feature weights are the mean gradient of the score
over nodes, and the heatmap is the ReLU of the weighted feature map.
"""

from __future__ import annotations

import csv

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, OptimizationError
from .graphs import Graph, normalized_adjacency
from .models import ForwardTrace, GnnModel


def class_score(trace: ForwardTrace, c: int) -> Tensor:
    """The pre-softmax score of class c, as a differentiable scalar."""
    num_classes = trace.logits.data.shape[1]
    if not 0 <= c < num_classes:
        raise ContractError(f"class {c} out of range for {num_classes} classes")
    onehot = np.zeros((1, num_classes))
    onehot[0, c] = 1.0
    return ad.sum_all(ad.mul(trace.logits, Tensor(onehot)))


def feature_map_grads(trace: ForwardTrace, c: int) -> list[np.ndarray]:
    """Gradient of the class-c score w.r.t. every layer's feature map."""
    grads = ad.backward(class_score(trace, c), accumulate=False)
    out = []
    for fm in trace.feature_maps:
        g = grads.get(fm)
        if g is None:
            raise ContractError(
                "trace is not differentiable; forward the graph on a model "
                "with trainable weights or with track_inputs=True")
        out.append(g)
    return out


def grad_cam_weights(trace: ForwardTrace, model: GnnModel, c: int,
                     layer: int) -> np.ndarray:
    """Per-feature class weights at one layer: node-mean of score gradients."""
    if not 0 <= layer < trace.num_layers:
        raise ContractError(f"layer {layer} out of range for {trace.num_layers}")
    return feature_map_grads(trace, c)[layer].mean(axis=0)


class HeatMap:
    """Per-layer, per-node non-negative class attribution."""

    __slots__ = ("layers", "class_index")

    def __init__(self, layers, class_index: int):
        self.layers = [np.asarray(v, dtype=np.float64) for v in layers]
        self.class_index = int(class_index)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def __getitem__(self, layer: int) -> np.ndarray:
        return self.layers[layer]


def grad_cam_heatmap(trace: ForwardTrace, model: GnnModel, c: int) -> HeatMap:
    """ReLU(F^l @ alpha^l) per layer, one non-negative value per node."""
    alphas = feature_map_grads(trace, c)
    layers = []
    for fm, grad in zip(trace.feature_maps, alphas):
        alpha = grad.mean(axis=0)
        layers.append(np.maximum(fm.data @ alpha, 0.0))
    return HeatMap(layers, c)


def heatmap_tensors(trace: ForwardTrace, c: int, alphas) -> list[Tensor]:
    """Differentiable per-layer heat vectors with the weights held constant.

    ``alphas`` are the numeric per-layer weight vectors (from
    feature_map_grads, node-averaged). Treating them as constants keeps
    the heat differentiable in the model parameters through the feature
    maps alone, so no second-order derivatives are ever needed.
    """
    out = []
    for fm, alpha in zip(trace.feature_maps, alphas):
        col = Tensor(np.asarray(alpha, dtype=np.float64).reshape(-1, 1))
        out.append(ad.relu(ad.matmul(fm, col)))
    return out


def gnn_explain(model: GnnModel, g: Graph, y: int | None = None,
                steps: int = 100, lr_mask: float = 0.05,
                beta: float = 0.01) -> np.ndarray:
    """Optimize a per-node soft feature mask; higher value = more important.

    The mask is sigmoid-parameterized, applied multiplicatively to node
    features, and trained to keep the class-y prediction while staying
    sparse (beta penalty). Returns the final mask values in (0, 1),
    length N. With steps=0 every node scores exactly 0.5.
    """
    if y is None:
        y = model.predict(g)
    x = Tensor(g.x)
    adj = Tensor(g.adj)
    v_norm = Tensor(normalized_adjacency(g)) if model.kind == "gcn" else None
    raw = Tensor(np.zeros((g.num_nodes, 1)), requires_grad=True)
    for _ in range(int(steps)):
        mask = ad.sigmoid(raw)
        trace = model.forward_tensors(ad.mul(x, mask), adj, v_norm)
        loss = ad.add(ad.cross_entropy(trace.logits, y),
                      ad.mul(ad.sum_all(mask), ad.as_tensor(beta)))
        if not np.isfinite(loss.data):
            raise OptimizationError("mask optimization produced a non-finite loss")
        grads = ad.backward(loss, accumulate=False)
        ad.sgd_step([raw], lr_mask, grads)
    final = 1.0 / (1.0 + np.exp(-raw.data))
    return final.reshape(-1)


class NodeMaskExplainer(BaseEstimator):
    """Configured mask explainer, pluggable wherever site selection happens."""

    def __init__(self, steps=100, lr_mask=0.05, beta=0.01):
        self.steps = steps
        self.lr_mask = lr_mask
        self.beta = beta

    def __call__(self, model: GnnModel, g: Graph, y: int | None = None) -> np.ndarray:
        return gnn_explain(model, g, y, steps=self.steps, lr_mask=self.lr_mask,
                           beta=self.beta)


def export_heatmaps_csv(rows, path: str):
    """Write (graph_id, HeatMap) pairs as CSV: graph id, layer, node, value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["graph_id", "layer", "node", "value"])
        for graph_id, heatmap in rows:
            for layer, values in enumerate(heatmap.layers):
                for node, value in enumerate(values):
                    writer.writerow([graph_id, layer, node, repr(float(value))])


def export_masks_csv(rows, path: str):
    """Write (graph_id, mask) pairs as CSV; masks use layer index -1."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["graph_id", "layer", "node", "value"])
        for graph_id, mask in rows:
            for node, value in enumerate(np.asarray(mask).reshape(-1)):
                writer.writerow([graph_id, -1, node, repr(float(value))])

"""Evaluation metrics: attack success rate, accuracy, confusion counts,
pairwise embedding similarity, and embedding dumps for external plotting."""

from __future__ import annotations

import csv

import numpy as np

from .errors import ConfigError, MetricError
from .graphs import Graph, TriggerSubgraph, montage
from .models import GnnModel
from .recovery import mean_pairwise_cosine, sites_for_graph


def asr(model: GnnModel, attack_set, target_label: int) -> float:
    """Fraction of the stamped set classified as the target label.

    The caller guarantees every graph carries a trigger and none was
    originally labeled target_label.
    """
    attack_set = list(attack_set)
    if not attack_set:
        raise MetricError("attack set is empty")
    preds = model.predict_many(attack_set)
    return float(np.mean(preds == target_label))


def accuracy(model: GnnModel, graphs) -> float:
    graphs = list(graphs)
    if not graphs:
        raise MetricError("cannot score an empty set")
    preds = model.predict_many(graphs)
    return float(np.mean(preds == np.array([g.label for g in graphs])))


def confusion(model: GnnModel, graphs, num_classes: int | None = None):
    """C x C count matrix, rows indexed by true label, columns by prediction."""
    graphs = list(graphs)
    if not graphs:
        raise MetricError("cannot score an empty set")
    if num_classes is None:
        num_classes = model.num_classes
    mat = np.zeros((num_classes, num_classes), dtype=int)
    for g, p in zip(graphs, model.predict_many(graphs)):
        if not 0 <= g.label < num_classes:
            raise MetricError(f"label {g.label} outside {num_classes} classes")
        mat[g.label, int(p)] += 1
    return mat


def similarity_table(model: GnnModel, graphs,
                     trigger: TriggerSubgraph | None = None,
                     placement: str = "random", explainer=None,
                     seed: int = 0) -> float:
    """Mean pairwise cosine of graph embeddings, stamping first if a
    trigger is given."""
    graphs = list(graphs)
    if len(graphs) < 2:
        raise MetricError("similarity needs at least two graphs")
    if trigger is not None:
        stamped = []
        for i, g in enumerate(graphs):
            sites = sites_for_graph(model, g, trigger.num_nodes, placement,
                                    explainer, seed, graph_key=i)
            stamped.append(montage(g, trigger, sites))
        graphs = stamped
    embeddings = [model.embedding_array(g) for g in graphs]
    try:
        return mean_pairwise_cosine(embeddings)
    except ConfigError as exc:
        raise MetricError(str(exc)) from exc


def dump_embeddings(model: GnnModel, graphs, path: str,
                    triggered=None) -> None:
    """CSV of graph-level embeddings: id, true label, triggered flag,
    then the embedding components. Floats are written with repr so a
    parse recovers them exactly."""
    graphs = list(graphs)
    if triggered is None:
        triggered = [False] * len(graphs)
    triggered = list(triggered)
    if len(triggered) != len(graphs):
        raise MetricError("triggered flags must match the graph count")
    header = ["graph_id", "label", "triggered"]
    header += [f"e{k}" for k in range(model.embed_dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, (g, flag) in enumerate(zip(graphs, triggered)):
            emb = model.embedding_array(g)
            writer.writerow([i, g.label, int(bool(flag))]
                            + [repr(float(v)) for v in emb])


def load_embeddings(path: str):
    """Inverse of dump_embeddings: returns (ids, labels, flags, matrix)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MetricError(f"no header in {path}")
    body = rows[1:]
    ids = [int(r[0]) for r in body]
    labels = [int(r[1]) for r in body]
    flags = [bool(int(r[2])) for r in body]
    width = len(rows[0]) - 3
    matrix = np.array([[float(v) for v in r[3:]] for r in body],
                      dtype=np.float64).reshape(len(body), width)
    return ids, labels, flags, matrix

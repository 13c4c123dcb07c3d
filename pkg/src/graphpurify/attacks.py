"""Backdoor attacks: dataset poisoning with subgraph triggers.

Three attack families are implemented. The fixed-trigger attack stamps a
random dense subgraph into a fraction of the training graphs (placement
random or explainer-guided) and flips their labels to the target class.
The learned-trigger attack alternates model training with generator
updates so the trigger itself is optimized. The adaptive attack knows
the defense exists and additionally pushes trigger-stamped embeddings
apart to break the similarity signal the recovery relies on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .errors import (ConfigError, ContractError, GraphTooSmallError,
                     PoisoningInfeasibleError)
from .graphs import Graph, GraphDataset, TriggerSubgraph, montage
from .models import GnnModel, train
from .recovery import TriggerGenerator, montage_tensors, select_sites

_POISON_STREAM = 401
_ATTACK_SET_STREAM = 402
_GTA_STREAM = 403
_ADAPTIVE_STREAM = 404

PLACEMENTS = ("random", "top", "bottom")


@dataclass
class PoisonSpec:
    """What the attacker is allowed to do to the training set."""

    target_label: int
    injection_ratio: float = 0.05
    trigger_frac: float = 0.20
    placement: str = "random"

    def __post_init__(self):
        if self.target_label < 0:
            raise ConfigError("target label must be non-negative")
        if not 0.0 < self.injection_ratio < 1.0:
            raise ConfigError(
                f"injection ratio must lie in (0, 1), got {self.injection_ratio}")
        if not 0.0 < self.trigger_frac < 1.0:
            raise ConfigError(
                f"trigger fraction must lie in (0, 1), got {self.trigger_frac}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"placement must be one of {PLACEMENTS}")

    def trigger_size(self, ds: GraphDataset) -> int:
        """Trigger node count: the given fraction of the average size."""
        return max(1, int(round(ds.avg_nodes * self.trigger_frac)))


def _placement_sites(g: Graph, n: int, placement: str, explainer, rng) -> list:
    if g.num_nodes < n:
        raise GraphTooSmallError(
            f"graph with {g.num_nodes} nodes cannot host {n} trigger nodes")
    if placement == "random":
        return sorted(int(i) for i in rng.choice(g.num_nodes, size=n,
                                                 replace=False))
    mask = np.asarray(explainer(g), dtype=np.float64).reshape(-1)
    if placement == "top":
        order = np.argsort(-mask, kind="stable")
        return [int(i) for i in order[:n]]
    return select_sites(mask, n)


def poison_dataset(ds: GraphDataset, spec: PoisonSpec, t: TriggerSubgraph,
                   explainer=None, seed: int = 0):
    """Stamp and relabel training graphs; returns (dataset, manifest).

    ceil(injection_ratio * |train|) graphs are drawn from the non-target
    classes, each gets the trigger via montage and its label flipped to
    the target. ``explainer`` is a callable graph -> importance mask,
    required for the explainer placements (the attacker binds it to a
    model trained on clean data beforehand). The manifest lists
    (graph id, sites, original label) for every poisoned graph.
    """
    if spec.target_label >= ds.num_classes:
        raise ConfigError(
            f"target label {spec.target_label} out of range for "
            f"{ds.num_classes} classes")
    if spec.placement != "random" and explainer is None:
        raise ConfigError(f"placement {spec.placement!r} needs an explainer")
    if not ds.train_idx:
        raise ConfigError("dataset has no training split")
    n = t.num_nodes
    count = math.ceil(spec.injection_ratio * len(ds.train_idx))
    candidates = [i for i in ds.train_idx
                  if ds.graphs[i].label != spec.target_label
                  and ds.graphs[i].num_nodes >= n]
    if len(candidates) < count:
        raise PoisoningInfeasibleError(
            f"need {count} poisonable training graphs, only {len(candidates)} "
            f"are non-target and large enough")
    rng = np.random.default_rng([seed, _POISON_STREAM])
    chosen = sorted(int(candidates[i]) for i in
                    rng.choice(len(candidates), size=count, replace=False))
    graphs = list(ds.graphs)
    manifest = []
    for gi in chosen:
        g = graphs[gi]
        sites = _placement_sites(g, n, spec.placement, explainer, rng)
        stamped = montage(g, t, sites)
        graphs[gi] = Graph(stamped.x, stamped.adj, spec.target_label,
                           validate=False)
        manifest.append({"graph_id": gi, "sites": sites,
                         "original_label": int(g.label)})
    poisoned = GraphDataset(graphs, ds.num_classes, ds.train_idx, ds.test_idx,
                            ds.holdout_idx)
    return poisoned, manifest


def save_manifest(manifest, path: str):
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True)


def build_attack_set(ds: GraphDataset, target_label: int, t: TriggerSubgraph,
                     placement: str = "random", explainer=None,
                     seed: int = 0) -> list:
    """Trigger-stamped copies of every non-target test graph.

    Original labels are kept so the success-rate metric can verify each
    graph really belongs to another class.
    """
    if placement not in PLACEMENTS:
        raise ConfigError(f"placement must be one of {PLACEMENTS}")
    if placement != "random" and explainer is None:
        raise ConfigError(f"placement {placement!r} needs an explainer")
    rng = np.random.default_rng([seed, _ATTACK_SET_STREAM])
    out = []
    for g in ds.test_graphs:
        if g.label == target_label:
            continue
        sites = _placement_sites(g, t.num_nodes, placement, explainer, rng)
        out.append(montage(g, t, sites))
    return out


def learned_trigger_attack(ds: GraphDataset, spec: PoisonSpec, model: GnnModel,
                           epochs: int = 20, model_lr: float = 0.05,
                           gen_lr: float = 0.01, batch_size: int = 64,
                           seed: int = 0):
    """Bi-level attack: alternate model training and trigger-generator steps.

    Each outer iteration stamps the current generated triggers into the
    chosen training graphs, trains the model one epoch on that data, then
    takes one gradient step on the generator to pull trigger-stamped
    graphs toward the target class. Returns (model, trigger, history,
    manifest) where history records the attack loss per iteration and the
    manifest matches poison_dataset's shape. With 0 iterations the model
    is untouched and nothing is poisoned.
    """
    n = spec.trigger_size(ds)
    count = math.ceil(spec.injection_ratio * len(ds.train_idx))
    candidates = [i for i in ds.train_idx
                  if ds.graphs[i].label != spec.target_label
                  and ds.graphs[i].num_nodes >= n]
    if len(candidates) < count:
        raise PoisoningInfeasibleError(
            f"need {count} poisonable training graphs, only {len(candidates)}")
    rng = np.random.default_rng([seed, _GTA_STREAM])
    chosen = sorted(int(candidates[i]) for i in
                    rng.choice(len(candidates), size=count, replace=False))
    sites = {gi: sorted(int(s) for s in
                        rng.choice(ds.graphs[gi].num_nodes, size=n,
                                   replace=False))
             for gi in chosen}
    gen = TriggerGenerator(ds.feature_dim, n, seed=seed)
    seed_feats = {gi: ds.graphs[gi].x[sites[gi]] for gi in chosen}
    mean_seed = np.mean(np.stack(list(seed_feats.values())), axis=0)
    history = []
    for it in range(int(epochs)):
        graphs = list(ds.graphs)
        for gi in chosen:
            trig = gen.generate(seed_feats[gi])
            stamped = montage(ds.graphs[gi], trig, sites[gi])
            graphs[gi] = Graph(stamped.x, stamped.adj, spec.target_label,
                               validate=False)
        train(model, [graphs[i] for i in ds.train_idx], epochs=1, lr=model_lr,
              batch_size=batch_size, seed=seed * 1009 + it)

        total = None
        for gi in chosen[:batch_size]:
            x_t, a_t = gen.generate_tensors(seed_feats[gi])
            x, adj = montage_tensors(ds.graphs[gi], x_t, a_t, sites[gi])
            loss = ad.cross_entropy(model.forward_tensors(x, adj).logits,
                                    spec.target_label)
            total = loss if total is None else ad.add(total, loss)
        loss = ad.mul(total, as_tensor(1.0 / len(chosen[:batch_size])))
        history.append(float(loss.data))
        grads = ad.backward(loss, accumulate=False)
        ad.sgd_step(gen.parameters(), gen_lr, grads)
    manifest = [{"graph_id": gi, "sites": sites[gi],
                 "original_label": int(ds.graphs[gi].label)} for gi in chosen]
    return model, gen.generate(mean_seed), history, manifest


def adaptive_attack_loss(l_atk, l_pq, alpha: float) -> Tensor:
    """Attack loss minus alpha times the batch similarity term."""
    if alpha <= 0:
        raise ContractError(f"adaptive weight must be positive, got {alpha}")
    return ad.sub(as_tensor(l_atk), ad.mul(as_tensor(float(alpha)),
                                           as_tensor(l_pq)))


def train_adaptive(model: GnnModel, ds: GraphDataset, poisoned_ids, alpha: float,
                   epochs: int, lr: float = 0.05, batch_size: int = 64,
                   seed: int = 0) -> GnnModel:
    """Train on a poisoned dataset while dispersing stamped embeddings.

    The batch similarity term is the mean pairwise negative cosine over
    the poisoned graphs present in the batch; subtracting alpha times it
    rewards the attacker for making stamped embeddings dissimilar.
    alpha = 0 degenerates to plain training on the poisoned data.
    """
    if alpha < 0:
        raise ContractError(f"adaptive weight must be >= 0, got {alpha}")
    poisoned_ids = set(int(i) for i in poisoned_ids)
    train_ids = list(ds.train_idx)
    if not train_ids:
        raise ConfigError("dataset has no training split")
    rng = np.random.default_rng([seed, _ADAPTIVE_STREAM])
    for _ in range(int(epochs)):
        order = rng.permutation(len(train_ids))
        for start in range(0, len(order), batch_size):
            batch = [train_ids[i] for i in order[start:start + batch_size]]
            ce_total = None
            stamped_embeddings = []
            for gi in batch:
                g = ds.graphs[gi]
                trace = model.forward(g)
                loss = ad.cross_entropy(trace.logits, g.label)
                ce_total = loss if ce_total is None else ad.add(ce_total, loss)
                if gi in poisoned_ids:
                    stamped_embeddings.append(trace.embedding)
            loss = ad.mul(ce_total, as_tensor(1.0 / len(batch)))
            # ReLU-dead graphs pool to a zero embedding early in training;
            # cosine is undefined there and carries no dispersal signal
            live = [e for e in stamped_embeddings
                    if float(np.linalg.norm(e.data)) > 0.0]
            if alpha > 0 and len(live) >= 2:
                sim_total = None
                pairs = 0
                for p in range(len(live)):
                    for q in range(p + 1, len(live)):
                        neg = ad.mul(ad.cosine(live[p], live[q]),
                                     as_tensor(-1.0))
                        sim_total = neg if sim_total is None else ad.add(sim_total, neg)
                        pairs += 1
                l_pq = ad.mul(sim_total, as_tensor(1.0 / pairs))
                loss = adaptive_attack_loss(loss, l_pq, alpha)
            grads = ad.backward(loss, accumulate=False)
            model.step(lr, grads)
    return model

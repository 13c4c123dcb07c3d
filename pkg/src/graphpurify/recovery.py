"""Reverse-engineering a universal trigger from a backdoored model.

The defender only has the model and a small clean holdout. The key
observation is that a backdoored model collapses trigger-stamped inputs
to nearly identical embeddings, so a trigger can be recovered by
synthesizing the subgraph that maximizes pairwise embedding similarity
of stamped holdout graphs. Sites come from a mask explainer (the least
important nodes), features and structure from a small generator trained
through a straight-through binarization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .errors import ConfigError, ContractError, GraphTooSmallError
from .explain import NodeMaskExplainer
from .graphs import Graph, TriggerSubgraph, montage
from .models import GnnModel

_GEN_STREAM = 301
_RECOVER_STREAM = 302
_SITE_STREAM = 303

PLACEMENTS = ("explainer", "random")


@dataclass
class RecoveryConfig:
    """Knobs of the trigger search."""

    n: int = 3
    threshold: float = 0.9
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.001
    placement: str = "explainer"

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"trigger node count must be >= 1, got {self.n}")
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError(f"threshold must lie in (0, 1], got {self.threshold}")
        if self.batch_size < 2:
            raise ConfigError("batch size must be at least 2 for pairwise loss")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"placement must be one of {PLACEMENTS}")


def select_sites(mask, n: int) -> list[int]:
    """Indices of the n least important nodes; ties break by node index."""
    mask = np.asarray(mask, dtype=np.float64).reshape(-1)
    if n > mask.shape[0]:
        raise GraphTooSmallError(
            f"need {n} sites but the graph has {mask.shape[0]} nodes")
    order = np.argsort(mask, kind="stable")
    return [int(i) for i in order[:n]]


def random_sites(num_nodes: int, n: int, seed, graph_key: int) -> list[int]:
    """Seeded random placement, the baseline the explainer competes with."""
    if n > num_nodes:
        raise GraphTooSmallError(f"need {n} sites but the graph has {num_nodes}")
    rng = np.random.default_rng([seed, _SITE_STREAM, graph_key])
    return sorted(int(i) for i in rng.choice(num_nodes, size=n, replace=False))


def sites_for_graph(model: GnnModel, g: Graph, n: int, placement: str,
                    explainer, seed: int, graph_key: int) -> list[int]:
    if placement == "random":
        return random_sites(g.num_nodes, n, seed, graph_key)
    return select_sites(explainer(model, g), n)


class TriggerGenerator:
    """Two-layer MLP with a feature head and a structure head.

    Per selected node the MLP maps its original features to a hidden
    state; the feature head emits that node's trigger features, and the
    structure head maps the pooled hidden state to an n x n score matrix
    that is symmetrized, squashed, and binarized (straight-through) into
    the trigger adjacency.
    """

    def __init__(self, feature_dim: int, n: int, hidden: int = 32, seed: int = 0):
        if n < 1:
            raise ConfigError(f"trigger node count must be >= 1, got {n}")
        rng = np.random.default_rng([seed, _GEN_STREAM])
        self.feature_dim = int(feature_dim)
        self.n = int(n)
        self.hidden = int(hidden)
        def init(d_in, d_out, scale):
            return Tensor(scale * rng.standard_normal((d_in, d_out)),
                          requires_grad=True)
        self.v1 = init(feature_dim, hidden, np.sqrt(2.0 / feature_dim))
        self.v2 = init(hidden, hidden, np.sqrt(2.0 / hidden))
        # quiet heads: the initial trigger has near-zero features and a
        # dense adjacency (scores ~ 0 squash to 0.5, binarized to 1), so
        # optimization grows the features instead of taming a loud start
        self.w_f = init(hidden, feature_dim, 0.1 * np.sqrt(1.0 / hidden))
        self.w_a = init(hidden, n * n, 0.1 * np.sqrt(1.0 / hidden))
        self._off_diag = Tensor(1.0 - np.eye(n))

    def parameters(self) -> list:
        return [self.v1, self.v2, self.w_f, self.w_a]

    def generate_tensors(self, seed_features) -> tuple:
        """Differentiable trigger: (features n x d, binary adjacency n x n)."""
        s = as_tensor(np.asarray(seed_features, dtype=np.float64)
                      if not isinstance(seed_features, Tensor) else seed_features)
        if s.data.shape != (self.n, self.feature_dim):
            raise ContractError(
                f"seed features must be {(self.n, self.feature_dim)}, "
                f"got {s.data.shape}")
        hidden = ad.relu(ad.matmul(ad.relu(ad.matmul(s, self.v1)), self.v2))
        x_t = ad.matmul(hidden, self.w_f)
        scores = ad.reshape(ad.matmul(ad.mean_rows(hidden), self.w_a),
                            (self.n, self.n))
        sym = ad.mul(ad.add(scores, ad.transpose(scores)), as_tensor(0.5))
        hard = ad.binarize_ste(ad.sigmoid(sym))
        a_t = ad.mul(hard, self._off_diag)
        return x_t, a_t

    def generate(self, seed_features) -> TriggerSubgraph:
        x_t, a_t = self.generate_tensors(seed_features)
        return TriggerSubgraph(x_t.data.copy(), a_t.data.copy())


def montage_tensors(g: Graph, x_t: Tensor, a_t: Tensor, sites) -> tuple:
    """Differentiable montage: gradients reach the trigger tensors.

    Same replacement semantics as montage(); the host contributions are
    constants and the trigger enters through selection matrices.
    """
    n = x_t.data.shape[0]
    if a_t.data.shape != (n, n):
        raise ContractError("trigger feature and adjacency sizes disagree")
    if n > g.num_nodes:
        raise GraphTooSmallError(
            f"trigger has {n} nodes but graph only {g.num_nodes}")
    sites = [int(s) for s in sites]
    if len(sites) != n or len(set(sites)) != n:
        raise ContractError(f"sites must be {n} distinct indices, got {sites}")
    if any(s < 0 or s >= g.num_nodes for s in sites):
        raise ContractError(f"injection site out of range: {sites}")
    select = np.zeros((g.num_nodes, n))
    select[sites, range(n)] = 1.0
    x_keep = g.x.copy()
    x_keep[sites] = 0.0
    a_keep = g.adj.copy()
    a_keep[np.ix_(sites, sites)] = 0.0
    sel = Tensor(select)
    x = ad.add(Tensor(x_keep), ad.matmul(sel, x_t))
    adj = ad.add(Tensor(a_keep),
                 ad.matmul(ad.matmul(sel, a_t), Tensor(select.T)))
    return x, adj


def pairwise_similarity_loss(model: GnnModel, g_p: Graph, g_q: Graph,
                             t: TriggerSubgraph, sites_p, sites_q) -> Tensor:
    """Negative cosine of the two trigger-stamped embeddings, in [-1, 1]."""
    emb_p = model.forward(montage(g_p, t, sites_p)).embedding
    emb_q = model.forward(montage(g_q, t, sites_q)).embedding
    return ad.mul(ad.cosine(emb_p, emb_q), as_tensor(-1.0))


def stamped_embeddings(model: GnnModel, graphs, gen: TriggerGenerator,
                       site_list) -> list:
    """Differentiable embeddings of each graph stamped with its own
    generated trigger (seeded by the selected nodes' features)."""
    embeddings = []
    for g, sites in zip(graphs, site_list):
        x_t, a_t = gen.generate_tensors(g.x[sites])
        x, adj = montage_tensors(g, x_t, a_t, sites)
        embeddings.append(model.forward_tensors(x, adj).embedding)
    return embeddings


def hinge_similarity_loss(embeddings, threshold: float) -> Tensor:
    """Sum over ordered pairs of max(0, threshold - cosine).

    Zero exactly when every pairwise cosine clears the threshold;
    minimizing it pulls all stamped embeddings together.
    """
    if len(embeddings) < 2:
        raise ConfigError("pairwise loss needs at least two embeddings")
    thr = as_tensor(float(threshold))
    total = None
    for p in range(len(embeddings)):
        for q in range(p + 1, len(embeddings)):
            # ordered pairs (p,q) and (q,p) contribute identically
            hinge = ad.relu(ad.sub(thr, ad.cosine(embeddings[p], embeddings[q])))
            pair = ad.mul(hinge, as_tensor(2.0))
            total = pair if total is None else ad.add(total, pair)
    return total


def batch_recovery_loss(model: GnnModel, batch, gen: TriggerGenerator,
                        explainer, cfg: RecoveryConfig, seed: int = 0,
                        site_cache: dict | None = None) -> Tensor:
    """The recovery objective over one batch of clean graphs."""
    batch = list(batch)
    if len(batch) < 2:
        raise ConfigError("recovery batch must contain at least two graphs")
    site_list = []
    for key, g in enumerate(batch):
        if site_cache is not None and key in site_cache:
            site_list.append(site_cache[key])
            continue
        sites = sites_for_graph(model, g, cfg.n, cfg.placement, explainer,
                                seed, key)
        if site_cache is not None:
            site_cache[key] = sites
        site_list.append(sites)
    embeddings = stamped_embeddings(model, batch, gen, site_list)
    return hinge_similarity_loss(embeddings, cfg.threshold)


def mean_pairwise_cosine(vectors) -> float:
    """Plain numpy mean cosine over unordered pairs."""
    vectors = [np.asarray(v, dtype=np.float64).reshape(-1) for v in vectors]
    if len(vectors) < 2:
        raise ConfigError("need at least two vectors for pairwise similarity")
    total = 0.0
    count = 0
    for p in range(len(vectors)):
        for q in range(p + 1, len(vectors)):
            na, nb = np.linalg.norm(vectors[p]), np.linalg.norm(vectors[q])
            if na == 0.0 or nb == 0.0:
                raise ConfigError("degenerate zero embedding in similarity")
            total += float(vectors[p] @ vectors[q]) / (na * nb)
            count += 1
    return total / count


def recover_trigger(model: GnnModel, holdout, cfg: RecoveryConfig, seed: int = 0,
                    explainer=None) -> tuple:
    """Optimize the generator on the holdout; return (trigger, mean cosine).

    Sites and seed features are fixed up front (the inspected model does
    not change during recovery). The returned universal trigger comes
    from the mean seed features over the holdout, and the reported value
    is the final mean pairwise cosine of holdout graphs stamped with it.
    """
    holdout = list(holdout)
    if not holdout:
        raise ConfigError("recovery needs a non-empty holdout")
    if explainer is None:
        explainer = NodeMaskExplainer()
    site_list = [sites_for_graph(model, g, cfg.n, cfg.placement, explainer,
                                 seed, key)
                 for key, g in enumerate(holdout)]
    seed_feats = [g.x[sites] for g, sites in zip(holdout, site_list)]
    mean_seed = np.mean(np.stack(seed_feats), axis=0)
    gen = TriggerGenerator(holdout[0].feature_dim, cfg.n, seed=seed)
    rng = np.random.default_rng([seed, _RECOVER_STREAM])
    for _ in range(cfg.epochs):
        order = rng.permutation(len(holdout))
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start:start + cfg.batch_size]
            if len(chunk) < 2:
                continue  # a singleton forms no pairs
            embeddings = stamped_embeddings(
                model, [holdout[i] for i in chunk], gen,
                [site_list[i] for i in chunk])
            loss = hinge_similarity_loss(embeddings, cfg.threshold)
            grads = ad.backward(loss, accumulate=False)
            ad.sgd_step(gen.parameters(), cfg.lr, grads)
        gen.generate(mean_seed)  # validates shape/symmetry every epoch
    trigger = gen.generate(mean_seed)
    stamped = [model.embedding_array(montage(g, trigger, sites))
               for g, sites in zip(holdout, site_list)]
    return trigger, mean_pairwise_cosine(stamped)


class TriggerRecoverer(BaseEstimator):
    """Estimator facade: fit(holdout graphs, backdoored model).

    After fitting, ``trigger_`` holds the recovered subgraph and
    ``mean_cosine_`` the final stamped-similarity score.
    """

    def __init__(self, n=3, threshold=0.9, epochs=20, batch_size=64, lr=0.001,
                 placement="explainer", explainer_steps=100, seed=0):
        self.n = n
        self.threshold = threshold
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.placement = placement
        self.explainer_steps = explainer_steps
        self.seed = seed

    def _config(self) -> RecoveryConfig:
        return RecoveryConfig(n=self.n, threshold=self.threshold,
                              epochs=self.epochs, batch_size=self.batch_size,
                              lr=self.lr, placement=self.placement)

    def fit(self, graphs, model: GnnModel):
        explainer = NodeMaskExplainer(steps=self.explainer_steps)
        self.trigger_, self.mean_cosine_ = recover_trigger(
            model, list(graphs), self._config(), seed=self.seed,
            explainer=explainer)
        return self

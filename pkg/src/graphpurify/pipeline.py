"""End-to-end orchestration: per seed, build the corpus, plant the
backdoor, measure it, recover a trigger, purify, and measure again.
Aggregates across seeds into a JSON report whose bytes are a pure
function of the configuration."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .attacks import (build_attack_set, learned_trigger_attack, poison_dataset,
                      save_manifest, train_adaptive)
from .config import ExperimentConfig
from .explain import NodeMaskExplainer
from .graphs import (GraphDataset, erdos_renyi_subgraph, load_tu_dataset,
                     split_dataset, synthesize_dataset)
from .metrics import accuracy, asr, confusion, dump_embeddings, similarity_table
from .models import GnnModel, train
from .recovery import recover_trigger
from .unlearning import purify, write_purify_log

# Offset separating the clean surrogate's weight stream from the
# backdoored model's at the same run seed.
_SURROGATE_SEED_OFFSET = 7


def build_dataset(cfg: ExperimentConfig, seed: int) -> GraphDataset:
    """Synthesize or load the corpus and assign train/holdout/test splits."""
    d = cfg.dataset
    if d.kind == "tu":
        ds = load_tu_dataset(d.path)
    else:
        ds = synthesize_dataset(d.num_graphs, d.feature_dim, seed,
                                min_nodes=d.min_nodes, max_nodes=d.max_nodes,
                                edge_p=d.edge_p, noise=d.noise)
    return split_dataset(ds, d.train_frac, d.holdout_frac, seed)


def train_clean_model(cfg: ExperimentConfig, ds: GraphDataset,
                      seed: int) -> GnnModel:
    """Fit the no-attack reference model on the clean training split."""
    model = GnnModel.init(cfg.model.kind, ds.feature_dim,
                          cfg.model.hidden_dims, ds.num_classes,
                          seed=seed + _SURROGATE_SEED_OFFSET)
    train(model, ds.train_graphs, epochs=cfg.training.epochs,
          lr=cfg.training.lr, batch_size=cfg.training.batch_size, seed=seed)
    return model


def _surrogate_explainer(cfg, ds, seed):
    surrogate = train_clean_model(cfg, ds, seed)
    mask = NodeMaskExplainer()
    return lambda g: mask(surrogate, g)


def run_attack(cfg: ExperimentConfig, ds: GraphDataset, seed: int,
               placement_explainer=None):
    """Plant the configured backdoor; returns (model, trigger, manifest).

    Sub-BA stamps a fixed random-data trigger at random sites, Exp-BA the
    same trigger at the most important sites of a clean surrogate's
    explanations (pass the surrogate as placement_explainer or it is
    trained here), GTA learns the trigger jointly with the model, and the
    adaptive attack adds the embedding-dispersal term while training.
    """
    spec = cfg.attack.poison_spec()
    tr = cfg.training
    model = GnnModel.init(cfg.model.kind, ds.feature_dim,
                          cfg.model.hidden_dims, ds.num_classes, seed=seed)
    if cfg.attack.kind == "gta":
        model, trigger, _, manifest = learned_trigger_attack(
            ds, spec, model, epochs=tr.epochs, model_lr=tr.lr, gen_lr=tr.lr,
            batch_size=tr.batch_size, seed=seed)
        return model, trigger, manifest

    pool = np.vstack([g.x for g in ds.train_graphs])
    trigger = erdos_renyi_subgraph(spec.trigger_size(ds),
                                   cfg.attack.trigger_density,
                                   ds.feature_dim, seed, feature_pool=pool)
    explainer = None
    if cfg.attack.kind == "expba":
        explainer = placement_explainer or _surrogate_explainer(cfg, ds, seed)
    poisoned, manifest = poison_dataset(ds, spec, trigger,
                                        explainer=explainer, seed=seed)
    if cfg.attack.kind == "adaptive":
        ids = [row["graph_id"] for row in manifest]
        train_adaptive(model, poisoned, ids, cfg.attack.alpha,
                       epochs=tr.epochs, lr=tr.lr,
                       batch_size=tr.batch_size, seed=seed)
    else:
        train(model, poisoned, epochs=tr.epochs, lr=tr.lr,
              batch_size=tr.batch_size, seed=seed)
    return model, trigger, manifest


def attack_test_set(cfg: ExperimentConfig, ds: GraphDataset, trigger,
                    seed: int, placement_explainer=None):
    """Stamped non-target test graphs, placed the way the attack places."""
    if cfg.attack.kind == "expba":
        explainer = placement_explainer or _surrogate_explainer(cfg, ds, seed)
        return build_attack_set(ds, cfg.attack.target_label, trigger,
                                placement="top", explainer=explainer,
                                seed=seed)
    return build_attack_set(ds, cfg.attack.target_label, trigger, seed=seed)


def run_seed(cfg: ExperimentConfig, seed: int, seed_dir: str) -> dict:
    """One complete attack-defense cycle; artifacts land in seed_dir."""
    os.makedirs(seed_dir, exist_ok=True)
    y_t = cfg.attack.target_label
    ds = build_dataset(cfg, seed)
    pe = _surrogate_explainer(cfg, ds, seed) if cfg.attack.kind == "expba" else None

    model, trigger, manifest = run_attack(cfg, ds, seed, placement_explainer=pe)
    save_manifest(manifest, os.path.join(seed_dir, "poison_manifest.json"))
    trigger.save(os.path.join(seed_dir, "trigger_true.json"))
    model.save(os.path.join(seed_dir, "model_backdoored.json"))

    aset = attack_test_set(cfg, ds, trigger, seed, placement_explainer=pe)
    row = {"seed": seed}
    row["asr_before"] = asr(model, aset, y_t)
    row["acc_before"] = accuracy(model, ds.test_graphs)
    row["sim_without_trigger"] = similarity_table(model, ds.test_graphs)
    row["sim_with_trigger"] = similarity_table(model, ds.test_graphs,
                                               trigger=trigger, seed=seed)
    row["confusion_before"] = confusion(model, ds.test_graphs).tolist()
    dump_embeddings(model, list(ds.test_graphs) + list(aset),
                    os.path.join(seed_dir, "embeddings.csv"),
                    triggered=[False] * len(ds.test_graphs) + [True] * len(aset))

    explainer = NodeMaskExplainer()
    recovered, rec_cos = recover_trigger(model, ds.holdout_graphs,
                                         cfg.recovery, seed=seed,
                                         explainer=explainer)
    recovered.save(os.path.join(seed_dir, "trigger_recovered.json"))
    rec_set = build_attack_set(ds, y_t, recovered, placement="bottom",
                               explainer=lambda g: explainer(model, g),
                               seed=seed)
    row["recovery_asr"] = asr(model, rec_set, y_t)
    row["recovery_cosine"] = rec_cos

    student, _, log = purify(model, ds.holdout_graphs, recovered,
                             explainer=explainer, cfg=cfg.unlearn, seed=seed)
    write_purify_log(log, os.path.join(seed_dir, "purify_log.csv"))
    student.save(os.path.join(seed_dir, "model_purified.json"))

    row["asr_after"] = asr(student, aset, y_t)
    row["acc_after"] = accuracy(student, ds.test_graphs)
    row["confusion_after"] = confusion(student, ds.test_graphs).tolist()
    return row


def aggregate_rows(rows) -> dict:
    """Population mean and std of every scalar metric over finished seeds."""
    ok = [r for r in rows if "error" not in r]
    keys = sorted(k for k in (ok[0] if ok else {})
                  if k != "seed" and isinstance(ok[0][k], (int, float)))
    mean, std = {}, {}
    for k in keys:
        vals = np.array([r[k] for r in ok], dtype=float)
        mean[k] = float(vals.mean())
        std[k] = float(vals.std())
    return {"mean": mean, "std": std, "seeds_completed": len(ok)}


def run_pipeline(cfg: ExperimentConfig, parallel: bool = False) -> dict:
    """Run every configured seed and persist report.json under out_dir.

    A failing seed is recorded as {"seed", "error"} without aborting the
    others. The report bytes depend only on the config, so a rerun is
    bit-identical.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)

    def one(seed):
        seed_dir = os.path.join(cfg.out_dir, f"seed{seed}")
        try:
            return run_seed(cfg, seed, seed_dir)
        except Exception as exc:
            return {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}

    if parallel and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=len(cfg.seeds)) as pool:
            rows = list(pool.map(one, cfg.seeds))
    else:
        rows = [one(s) for s in cfg.seeds]
    rows.sort(key=lambda r: r["seed"])

    report = {"config": cfg.to_dict(), "per_seed": rows,
              "aggregate": aggregate_rows(rows)}
    path = os.path.join(cfg.out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report

import json
import os
import sys
import warnings

import numpy as np

sys.path.insert(0, "src")
warnings.filterwarnings("error")
from graphpurify.attacks import PoisonSpec, build_attack_set, poison_dataset
from graphpurify.explain import NodeMaskExplainer
from graphpurify.graphs import (TriggerSubgraph, erdos_renyi_subgraph,
                                split_dataset, synthesize_dataset)
from graphpurify.metrics import accuracy, asr
from graphpurify.models import GnnModel, train
from graphpurify.recovery import RecoveryConfig, recover_trigger
from graphpurify.unlearning import UnlearnConfig, purify

CACHE = "/tmp/c7cache"
SEEDS = range(5)


def world(seed):
    sp = dict(min_nodes=14, max_nodes=26, edge_p=(0.08, 0.08), noise=0.2)
    ds = split_dataset(synthesize_dataset(800, 16, seed, **sp), 0.8, 0.03, seed)
    spec = PoisonSpec(target_label=1, injection_ratio=0.05, trigger_frac=0.20)
    pool = np.vstack([g.x for g in ds.train_graphs])
    trig = erdos_renyi_subgraph(spec.trigger_size(ds), 0.8, ds.feature_dim, seed,
                                feature_pool=pool)
    return ds, spec, trig


def build():
    os.makedirs(CACHE, exist_ok=True)
    for seed in SEEDS:
        d = f"{CACHE}/seed{seed}"
        os.makedirs(d, exist_ok=True)
        ds, spec, trig = world(seed)
        poisoned, _ = poison_dataset(ds, spec, trig, seed=seed)
        model = GnnModel.init("gcn", ds.feature_dim, (32, 32, 32), 2, seed=seed)
        train(model, poisoned, epochs=200, lr=0.05, batch_size=16, seed=seed)
        model.save(f"{d}/model.json")
        explainer = NodeMaskExplainer(steps=100)
        cfg = RecoveryConfig(n=3, epochs=20, batch_size=64, lr=0.05,
                             threshold=0.99, placement="explainer")
        rec, cos = recover_trigger(model, ds.holdout_graphs, cfg, seed=seed,
                                   explainer=explainer)
        rec.save(f"{d}/rec3.json")
        aset = build_attack_set(ds, 1, trig, seed=seed)
        print(f"built seed {seed}: asr {asr(model, aset, 1):.4f} cos {cos:.4f}",
              flush=True)


def sweep(lr, epochs, te, full_lam=0.5):
    rows = []
    for seed in SEEDS:
        d = f"{CACHE}/seed{seed}"
        ds, spec, trig = world(seed)
        model = GnnModel.load(f"{d}/model.json")
        rec = TriggerSubgraph.load(f"{d}/rec3.json")
        aset = build_attack_set(ds, 1, trig, seed=seed)
        explainer = NodeMaskExplainer(steps=100)
        row = {"seed": seed}
        for tag, lam in (("full", full_lam), ("l0", 0.0)):
            cfg = UnlearnConfig(lam=lam, epochs=epochs, batch_size=64, lr=lr,
                                teacher_epochs=te, placement="explainer")
            student, _, _ = purify(model, ds.holdout_graphs, rec,
                                   explainer=explainer, cfg=cfg, seed=seed)
            row[f"{tag}_asr"] = asr(student, aset, 1)
            row[f"{tag}_acc"] = accuracy(student, ds.test_graphs)
        row["acc_before"] = accuracy(model, ds.test_graphs)
        rows.append(row)
        print(json.dumps(row), flush=True)
    keys = [k for k in rows[0] if k != "seed"]
    mean = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    asr_dir = mean["l0_asr"] - mean["full_asr"]
    acc_dir = mean["full_acc"] - mean["l0_acc"]
    drop = mean["acc_before"] - mean["full_acc"]
    print(f"CAND lr={lr} ep={epochs} te={te} lam={full_lam} "
          + json.dumps({k: round(v, 4) for k, v in mean.items()})
          + f" asr_dir {asr_dir:+.4f} acc_dir {acc_dir:+.4f} drop {drop:.4f}",
          flush=True)


if __name__ == "__main__":
    if sys.argv[1] == "build":
        build()
    else:
        lam = float(sys.argv[4]) if len(sys.argv) > 4 else 0.5
        sweep(float(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3]), lam)

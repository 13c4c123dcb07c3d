import json
import sys
import time
import warnings

import numpy as np

sys.path.insert(0, "src")
warnings.filterwarnings("error")
from graphpurify.attacks import PoisonSpec, build_attack_set, poison_dataset
from graphpurify.explain import NodeMaskExplainer
from graphpurify.graphs import erdos_renyi_subgraph, split_dataset, synthesize_dataset
from graphpurify.metrics import accuracy, asr, similarity_table
from graphpurify.models import GnnModel, train
from graphpurify.recovery import RecoveryConfig, recover_trigger
from graphpurify.unlearning import UnlearnConfig, purify

REC_LR, UNL_LR, UNL_EP, T = 0.05, 0.02, 60, 0.99
seeds = [int(s) for s in sys.argv[1:]] or list(range(5))

records = []
for seed in seeds:
    t0 = time.time()
    sp = dict(min_nodes=14, max_nodes=26, edge_p=(0.08, 0.08), noise=0.2)
    ds = split_dataset(synthesize_dataset(800, 16, seed, **sp), 0.8, 0.03, seed)
    spec = PoisonSpec(target_label=1, injection_ratio=0.05, trigger_frac=0.20)
    pool = np.vstack([g.x for g in ds.train_graphs])
    trig = erdos_renyi_subgraph(spec.trigger_size(ds), 0.8, ds.feature_dim, seed,
                                feature_pool=pool)
    poisoned, _ = poison_dataset(ds, spec, trig, seed=seed)
    aset = build_attack_set(ds, 1, trig, seed=seed)
    model = GnnModel.init("gcn", ds.feature_dim, (32, 32, 32), 2, seed=seed)
    train(model, poisoned, epochs=200, lr=0.05, batch_size=16, seed=seed)
    r = {"seed": seed}
    r["asr_before"] = asr(model, aset, 1)
    r["acc_before"] = accuracy(model, ds.test_graphs)
    r["sim_wo"] = similarity_table(model, ds.test_graphs)
    r["sim_w"] = similarity_table(model, ds.test_graphs, trigger=trig, seed=seed)
    clean = GnnModel.init("gcn", ds.feature_dim, (32, 32, 32), 2, seed=seed + 7)
    train(clean, [ds.graphs[i] for i in ds.train_idx], epochs=200, lr=0.05,
          batch_size=16, seed=seed + 7)
    r["clean_sim_wo"] = similarity_table(clean, ds.test_graphs)
    r["clean_sim_w"] = similarity_table(clean, ds.test_graphs, trigger=trig, seed=seed)

    explainer = NodeMaskExplainer(steps=100)

    def recover(n=3, placement="explainer"):
        cfg = RecoveryConfig(n=n, epochs=20, batch_size=64, lr=REC_LR,
                             threshold=T, placement=placement)
        rec, cos = recover_trigger(model, ds.holdout_graphs, cfg, seed=seed,
                                   explainer=explainer if placement != "random" else None)
        rset = build_attack_set(ds, 1, rec, placement="bottom",
                                explainer=lambda g: explainer(model, g), seed=seed)
        return rec, asr(model, rset, 1), cos

    def pur(trigger, lam=0.5, epochs=UNL_EP):
        cfg = UnlearnConfig(lam=lam, epochs=epochs, batch_size=64, lr=UNL_LR,
                            teacher_epochs=10, placement="explainer")
        student, _, _ = purify(model, ds.holdout_graphs, trigger,
                               explainer=explainer, cfg=cfg, seed=seed)
        return asr(student, aset, 1), accuracy(student, ds.test_graphs)

    rec3, r["rec_asr"], r["rec_cos"] = recover()
    r["asr_after"], r["acc_after"] = pur(rec3)
    rec_rnd, r["rnd_rec_asr"], _ = recover(placement="random")
    r["rnd_asr_after"], r["rnd_acc_after"] = pur(rec_rnd)
    r["l0_asr_after"], r["l0_acc_after"] = pur(rec3, lam=0.0)
    for n in (1, 5, 7):
        recn, _, _ = recover(n=n)
        r[f"n{n}_asr_after"], r[f"n{n}_acc_after"] = pur(recn)
    r["runtime_s"] = round(time.time() - t0, 1)
    records.append(r)
    print(json.dumps(r), flush=True)

keys = [k for k in records[0] if k != "seed"]
mean = {k: float(np.mean([r[k] for r in records])) for k in keys}
med = {k: float(np.median([r[k] for r in records])) for k in keys}
print("MEAN " + json.dumps({k: round(v, 4) for k, v in mean.items()}))
print("MEDIAN " + json.dumps({k: round(v, 4) for k, v in med.items()}))

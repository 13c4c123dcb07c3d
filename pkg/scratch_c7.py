import sys
import time
import warnings

import numpy as np

sys.path.insert(0, "src")
warnings.filterwarnings("error")
from graphpurify.attacks import PoisonSpec, build_attack_set, poison_dataset
from graphpurify.explain import NodeMaskExplainer
from graphpurify.graphs import erdos_renyi_subgraph, split_dataset, synthesize_dataset
from graphpurify.metrics import accuracy, asr
from graphpurify.models import GnnModel, train
from graphpurify.recovery import RecoveryConfig, recover_trigger
from graphpurify.unlearning import UnlearnConfig, purify

lams = [float(x) for x in sys.argv[1].split(",")]
seeds = [int(s) for s in sys.argv[2:]] or list(range(5))

acc_rows, asr_rows = [], []
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

    explainer = NodeMaskExplainer(steps=100)
    rcfg = RecoveryConfig(n=3, epochs=20, batch_size=64, lr=0.05,
                          placement="explainer")
    rec, _ = recover_trigger(model, ds.holdout_graphs, rcfg, seed=seed,
                             explainer=explainer)
    a_row, c_row = [], []
    for lam in lams:
        cfg = UnlearnConfig(lam=lam, epochs=60, batch_size=64, lr=float(__import__("os").environ.get("ULR","0.01")),
                            teacher_epochs=10, placement="explainer")
        student, _, _ = purify(model, ds.holdout_graphs, rec,
                               explainer=explainer, cfg=cfg, seed=seed)
        a_row.append(asr(student, aset, 1))
        c_row.append(accuracy(student, ds.test_graphs))
    asr_rows.append(a_row)
    acc_rows.append(c_row)
    print(f"seed {seed}: " + "  ".join(
        f"lam={l} {a:.3f}/{c:.3f}" for l, a, c in zip(lams, a_row, c_row))
        + f"  [{time.time()-t0:.0f}s]", flush=True)

am, cm = np.mean(asr_rows, axis=0), np.mean(acc_rows, axis=0)
print("MEANS: " + "  ".join(f"lam={l} {a:.3f}/{c:.3f}" for l, a, c in zip(lams, am, cm)))

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

seeds = [int(s) for s in sys.argv[1:]] or list(range(3))

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
    asr_b, acc_b = asr(model, aset, 1), accuracy(model, ds.test_graphs)

    explainer = NodeMaskExplainer(steps=100)
    rcfg = RecoveryConfig(n=3, epochs=20, batch_size=64, lr=0.05,
                          placement="explainer")
    rec, _ = recover_trigger(model, ds.holdout_graphs, rcfg, seed=seed,
                             explainer=explainer)

    def pur(lam=0.5, placement="explainer", trigger=rec, epochs=60):
        cfg = UnlearnConfig(lam=lam, epochs=epochs, batch_size=64, lr=0.02,
                            teacher_epochs=10, placement=placement)
        student, _, _ = purify(model, ds.holdout_graphs, trigger,
                               explainer=explainer, cfg=cfg, seed=seed)
        return asr(student, aset, 1), accuracy(student, ds.test_graphs)

    a_exp, c_exp = pur()
    a_rnd, c_rnd = pur(placement="random")
    a_l0, c_l0 = pur(lam=0.0)

    row = [f"seed {seed}: full {a_exp:.3f}/{c_exp:.3f} rnd {a_rnd:.3f}/{c_rnd:.3f} "
           f"l0 {a_l0:.3f}/{c_l0:.3f}"]
    for n in (1, 5, 7):
        rc = RecoveryConfig(n=n, epochs=20, batch_size=64, lr=0.05,
                            placement="explainer")
        rn, _ = recover_trigger(model, ds.holdout_graphs, rc, seed=seed,
                                explainer=explainer)
        an, cn = pur(trigger=rn)
        row.append(f"n{n} {an:.3f}/{cn:.3f}")
    print("  ".join(row) + f"  [{time.time()-t0:.0f}s]", flush=True)

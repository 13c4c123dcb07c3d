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

unl_ep = int(sys.argv[1]) if len(sys.argv) > 1 else 60
seeds = [int(s) for s in sys.argv[2:]] or list(range(5))

rows = []
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

    def chain(placement):
        rcfg = RecoveryConfig(n=3, epochs=20, batch_size=64, lr=0.05,
                              placement=placement)
        rec, _ = recover_trigger(model, ds.holdout_graphs, rcfg, seed=seed,
                                 explainer=explainer if placement != "random" else None)
        rset = build_attack_set(ds, 1, rec, placement="bottom",
                                explainer=lambda g: explainer(model, g), seed=seed)
        r_asr = asr(model, rset, 1)
        cfg = UnlearnConfig(lam=0.5, epochs=unl_ep, batch_size=64, lr=0.02,
                            teacher_epochs=10, placement="explainer")
        student, _, _ = purify(model, ds.holdout_graphs, rec,
                               explainer=explainer, cfg=cfg, seed=seed)
        return r_asr, asr(student, aset, 1), accuracy(student, ds.test_graphs)

    re_r, ue_r, ce_r = chain("explainer")
    rr_r, ur_r, cr_r = chain("random")
    rows.append((re_r, ue_r, rr_r, ur_r))
    print(f"seed {seed}: explainer rec {re_r:.3f} unl {ue_r:.3f}/{ce_r:.3f} | "
          f"random rec {rr_r:.3f} unl {ur_r:.3f}/{cr_r:.3f}  [{time.time()-t0:.0f}s]",
          flush=True)

m = np.mean(np.array(rows), axis=0)
print(f"MEANS: explainer rec {m[0]:.3f} unl {m[1]:.3f} | random rec {m[2]:.3f} unl {m[3]:.3f}")

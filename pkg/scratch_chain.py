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

rec_lr = float(sys.argv[1]) if len(sys.argv) > 1 else 0.001
unl_lr = float(sys.argv[2]) if len(sys.argv) > 2 else 0.001
unl_ep = int(sys.argv[3]) if len(sys.argv) > 3 else 30
seeds = [int(s) for s in sys.argv[4:]] or list(range(5))

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
    rcfg = RecoveryConfig(n=3, epochs=20, batch_size=64, lr=rec_lr,
                          placement="explainer")
    t1 = time.time()
    rec, mean_cos = recover_trigger(model, ds.holdout_graphs, rcfg, seed=seed,
                                    explainer=explainer)
    rset = build_attack_set(ds, 1, rec, placement="bottom",
                            explainer=lambda g: explainer(model, g), seed=seed)
    rec_asr = asr(model, rset, 1)
    t_rec = time.time() - t1

    ucfg = UnlearnConfig(lam=0.5, epochs=unl_ep, batch_size=64, lr=unl_lr,
                         teacher_epochs=10, placement="explainer")
    t2 = time.time()
    student, _, _ = purify(model, ds.holdout_graphs, rec, explainer=explainer,
                           cfg=ucfg, seed=seed)
    asr_a, acc_a = asr(student, aset, 1), accuracy(student, ds.test_graphs)
    print(f"seed {seed}: ASR {asr_b:.3f}->{asr_a:.3f} ACC {acc_b:.3f}->{acc_a:.3f} "
          f"RecASR {rec_asr:.3f} cos {mean_cos:.2f} Xt|{np.linalg.norm(rec.x):.1f}| "
          f"[rec {t_rec:.0f}s pur {time.time()-t2:.0f}s tot {time.time()-t0:.0f}s]",
          flush=True)

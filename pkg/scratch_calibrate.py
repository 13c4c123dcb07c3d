import sys
import time

import numpy as np

sys.path.insert(0, "src")
from graphpurify.attacks import PoisonSpec, build_attack_set, poison_dataset
from graphpurify.explain import NodeMaskExplainer
from graphpurify.graphs import erdos_renyi_subgraph, split_dataset, synthesize_dataset
from graphpurify.metrics import accuracy, asr, similarity_table
from graphpurify.models import GnnModel, train
from graphpurify.recovery import RecoveryConfig, recover_trigger
from graphpurify.unlearning import UnlearnConfig, purify

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
t0 = time.time()

ds = split_dataset(synthesize_dataset(500, 8, seed), 0.8, 0.03, seed)
spec = PoisonSpec(target_label=1, injection_ratio=0.05, trigger_frac=0.20)
n = spec.trigger_size(ds)
pool = np.vstack([g.x for g in ds.train_graphs])
trigger = erdos_renyi_subgraph(n, 0.8, ds.feature_dim, seed, feature_pool=pool)
poisoned, manifest = poison_dataset(ds, spec, trigger, seed=seed)
print(f"n={n} poisoned={len(manifest)} holdout={len(ds.holdout_idx)} t={time.time()-t0:.1f}s")

model = GnnModel.init("gin", ds.feature_dim, (32, 32, 32), 2, seed=seed)
train(model, poisoned, epochs=30, lr=0.05, batch_size=64, seed=seed)
clean_model = GnnModel.init("gin", ds.feature_dim, (32, 32, 32), 2, seed=seed)
train(clean_model, ds, epochs=30, lr=0.05, batch_size=64, seed=seed)
print(f"trained two models t={time.time()-t0:.1f}s")

attack_set = build_attack_set(ds, 1, trigger, seed=seed)
acc_before = accuracy(model, ds.test_graphs)
asr_before = asr(model, attack_set, 1)
acc_clean_model = accuracy(clean_model, ds.test_graphs)
print(f"ASR_before={asr_before:.3f} ACC_before={acc_before:.3f} clean-model ACC={acc_clean_model:.3f}")

nontarget = [g for g in ds.test_graphs if g.label != 1]
sim_with = similarity_table(model, nontarget, trigger, placement="random", seed=seed)
sim_without = similarity_table(model, nontarget, seed=seed)
sim_clean_with = similarity_table(clean_model, nontarget, trigger, placement="random", seed=seed)
sim_clean_without = similarity_table(clean_model, nontarget, seed=seed)
print(f"backdoored: sim w/={sim_with:.3f} w/o={sim_without:.3f} gap={sim_with-sim_without:.3f}")
print(f"clean:      sim w/={sim_clean_with:.3f} w/o={sim_clean_without:.3f} gap={sim_clean_with-sim_clean_without:.3f}")
print(f"t={time.time()-t0:.1f}s")

explainer = NodeMaskExplainer(steps=100)
rcfg = RecoveryConfig(n=3, threshold=0.9, epochs=20, batch_size=64, lr=0.001,
                      placement="explainer")
t1 = time.time()
recovered, mean_cos = recover_trigger(model, ds.holdout_graphs, rcfg, seed=seed,
                                      explainer=explainer)
rec_set = build_attack_set(ds, 1, recovered, placement="bottom",
                           explainer=lambda g: explainer(model, g), seed=seed)
rec_asr = asr(model, rec_set, 1)
print(f"Recovery-ASR={rec_asr:.3f} mean_cos={mean_cos:.3f} recover_time={time.time()-t1:.1f}s")

ucfg = UnlearnConfig(lam=0.5, epochs=30, batch_size=64, lr=0.001,
                     teacher_epochs=10, teacher_lr=0.001, placement="explainer")
t2 = time.time()
student, teacher, log = purify(model, ds.holdout_graphs, recovered,
                               explainer=explainer, cfg=ucfg, seed=seed)
asr_after = asr(student, attack_set, 1)
acc_after = accuracy(student, ds.test_graphs)
print(f"ASR_after={asr_after:.3f} ACC_after={acc_after:.3f} purify_time={time.time()-t2:.1f}s")
print(f"drop={acc_before-acc_after:.3f} total={time.time()-t0:.1f}s")

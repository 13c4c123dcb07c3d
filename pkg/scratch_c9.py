import json
import sys
import warnings

import numpy as np

sys.path.insert(0, "src")
warnings.filterwarnings("error")
from graphpurify.attacks import PoisonSpec, build_attack_set, poison_dataset, train_adaptive
from graphpurify.graphs import erdos_renyi_subgraph, split_dataset, synthesize_dataset
from graphpurify.metrics import accuracy, asr
from graphpurify.models import GnnModel

BS = int(sys.argv[1]) if len(sys.argv) > 1 else 64
EP = int(sys.argv[2]) if len(sys.argv) > 2 else 200

rows = []
for seed in range(5):
    sp = dict(min_nodes=14, max_nodes=26, edge_p=(0.08, 0.08), noise=0.2)
    ds = split_dataset(synthesize_dataset(800, 16, seed, **sp), 0.8, 0.03, seed)
    spec = PoisonSpec(target_label=1, injection_ratio=0.05, trigger_frac=0.20)
    pool = np.vstack([g.x for g in ds.train_graphs])
    trig = erdos_renyi_subgraph(spec.trigger_size(ds), 0.8, ds.feature_dim, seed,
                                feature_pool=pool)
    poisoned, manifest = poison_dataset(ds, spec, trig, seed=seed)
    ids = [row["graph_id"] for row in manifest]
    aset = build_attack_set(ds, 1, trig, seed=seed)
    row = {"seed": seed}
    for alpha in (0.0, 2.0):
        model = GnnModel.init("gcn", ds.feature_dim, (32, 32, 32), 2, seed=seed)
        train_adaptive(model, poisoned, ids, alpha, epochs=EP, lr=0.05,
                       batch_size=BS, seed=seed)
        a, c = asr(model, aset, 1), accuracy(model, ds.test_graphs)
        row[f"a{alpha:g}_asr"], row[f"a{alpha:g}_acc"] = a, c
        row[f"a{alpha:g}_prod"] = a * c
    rows.append(row)
    print(json.dumps({k: round(v, 4) if isinstance(v, float) else v
                      for k, v in row.items()}), flush=True)

keys = [k for k in rows[0] if k != "seed"]
mean = {k: float(np.mean([r[k] for r in rows])) for k in keys}
print(f"MEAN bs={BS} ep={EP} " + json.dumps({k: round(v, 4) for k, v in mean.items()})
      + f" gap {mean['a0_prod'] - mean['a2_prod']:+.4f}", flush=True)

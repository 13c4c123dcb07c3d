"""Command line front end.

Subcommands mirror the pipeline stages; each reads the TOML config named
by --config (the bundled desk preset when omitted) plus flag overrides.
Exit codes: 0 success, 1 bad configuration or usage, 2 a stage raised,
3 the pipeline ran but missed its quality gates.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict

from .attacks import build_attack_set, save_manifest
from .config import (ATTACK_KINDS, AttackConfig, ExperimentConfig,
                     desk_config, load_config)
from .errors import ConfigError, GraphPurifyError
from .explain import NodeMaskExplainer
from .graphs import TriggerSubgraph
from .metrics import accuracy, asr, similarity_table
from .models import GnnModel
from .pipeline import (attack_test_set, build_dataset, run_attack,
                       run_pipeline, train_clean_model)
from .recovery import recover_trigger
from .unlearning import purify, write_purify_log

# Desk-scale quality gates checked by `pipeline` for CI use.
_GATES = {"asr_before": (">=", 0.80), "asr_after": ("<=", 0.15)}
_MAX_ACC_DROP = 0.05


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration errors, not stage failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    p = _Parser(prog="graphpurify",
                description="Backdoor attack, trigger recovery, and "
                            "unlearning pipeline for graph classifiers.")
    p.add_argument("command",
                   choices=("train", "attack", "recover", "unlearn", "eval",
                            "pipeline", "synth-data"))
    p.add_argument("--config", help="TOML experiment config "
                                    "(bundled preset when omitted)")
    p.add_argument("--seed", type=int, help="run only this seed")
    p.add_argument("--attack", choices=ATTACK_KINDS, dest="attack_kind",
                   help="override the attack kind")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--parallel-seeds", action="store_true",
                   help="run pipeline seeds on independent threads")
    return p


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else desk_config()
    if args.attack_kind:
        cfg.attack = AttackConfig(**{**asdict(cfg.attack),
                                     "kind": args.attack_kind})
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seeds = (args.seed,)
    return cfg


def _seed_dir(cfg, seed) -> str:
    path = os.path.join(cfg.out_dir, f"seed{seed}")
    os.makedirs(path, exist_ok=True)
    return path


def _load_model(path: str) -> GnnModel:
    if not os.path.exists(path):
        raise ConfigError(f"missing checkpoint {path}; run the earlier stage first")
    return GnnModel.load(path)


def _cmd_synth_data(cfg, seed):
    ds = build_dataset(cfg, seed)
    path = os.path.join(_seed_dir(cfg, seed), "dataset.json")
    ds.save(path)
    print(f"seed {seed}: {len(ds.graphs)} graphs "
          f"({len(ds.train_idx)} train / {len(ds.holdout_idx)} holdout / "
          f"{len(ds.test_idx)} test) -> {path}")


def _cmd_train(cfg, seed):
    ds = build_dataset(cfg, seed)
    model = train_clean_model(cfg, ds, seed)
    path = os.path.join(_seed_dir(cfg, seed), "model_clean.json")
    model.save(path)
    print(f"seed {seed}: clean ACC {accuracy(model, ds.test_graphs):.4f} -> {path}")


def _cmd_attack(cfg, seed):
    ds = build_dataset(cfg, seed)
    model, trigger, manifest = run_attack(cfg, ds, seed)
    d = _seed_dir(cfg, seed)
    save_manifest(manifest, os.path.join(d, "poison_manifest.json"))
    trigger.save(os.path.join(d, "trigger_true.json"))
    model.save(os.path.join(d, "model_backdoored.json"))
    aset = attack_test_set(cfg, ds, trigger, seed)
    print(f"seed {seed}: {cfg.attack.kind} ASR "
          f"{asr(model, aset, cfg.attack.target_label):.4f} "
          f"ACC {accuracy(model, ds.test_graphs):.4f} -> {d}")


def _cmd_recover(cfg, seed):
    ds = build_dataset(cfg, seed)
    d = _seed_dir(cfg, seed)
    model = _load_model(os.path.join(d, "model_backdoored.json"))
    explainer = NodeMaskExplainer()
    trigger, mean_cos = recover_trigger(model, ds.holdout_graphs,
                                        cfg.recovery, seed=seed,
                                        explainer=explainer)
    trigger.save(os.path.join(d, "trigger_recovered.json"))
    rec_set = build_attack_set(ds, cfg.attack.target_label, trigger,
                               placement="bottom",
                               explainer=lambda g: explainer(model, g),
                               seed=seed)
    print(f"seed {seed}: recovery ASR "
          f"{asr(model, rec_set, cfg.attack.target_label):.4f} "
          f"mean cosine {mean_cos:.4f}")


def _cmd_unlearn(cfg, seed):
    ds = build_dataset(cfg, seed)
    d = _seed_dir(cfg, seed)
    model = _load_model(os.path.join(d, "model_backdoored.json"))
    trig_path = os.path.join(d, "trigger_recovered.json")
    if not os.path.exists(trig_path):
        raise ConfigError(f"missing {trig_path}; run recover first")
    recovered = TriggerSubgraph.load(trig_path)
    student, _, log = purify(model, ds.holdout_graphs, recovered,
                             explainer=NodeMaskExplainer(), cfg=cfg.unlearn,
                             seed=seed)
    write_purify_log(log, os.path.join(d, "purify_log.csv"))
    student.save(os.path.join(d, "model_purified.json"))
    true_path = os.path.join(d, "trigger_true.json")
    line = f"seed {seed}: ACC after {accuracy(student, ds.test_graphs):.4f}"
    if os.path.exists(true_path):
        aset = attack_test_set(cfg, ds, TriggerSubgraph.load(true_path), seed)
        line += f" ASR after {asr(student, aset, cfg.attack.target_label):.4f}"
    print(line)


def _cmd_eval(cfg, seed):
    ds = build_dataset(cfg, seed)
    d = _seed_dir(cfg, seed)
    names = ("model_purified.json", "model_backdoored.json", "model_clean.json")
    found = [n for n in names if os.path.exists(os.path.join(d, n))]
    if not found:
        raise ConfigError(f"no checkpoint in {d}; run a training stage first")
    true_path = os.path.join(d, "trigger_true.json")
    trigger = TriggerSubgraph.load(true_path) if os.path.exists(true_path) else None
    for name in found:
        model = _load_model(os.path.join(d, name))
        line = (f"seed {seed} {name}: ACC {accuracy(model, ds.test_graphs):.4f} "
                f"sim {similarity_table(model, ds.test_graphs):.4f}")
        if trigger is not None:
            aset = attack_test_set(cfg, ds, trigger, seed)
            line += f" ASR {asr(model, aset, cfg.attack.target_label):.4f}"
        print(line)


def _cmd_pipeline(cfg, parallel) -> int:
    report = run_pipeline(cfg, parallel=parallel)
    for row in report["per_seed"]:
        if "error" in row:
            print(f"seed {row['seed']}: FAILED {row['error']}")
        else:
            print(f"seed {row['seed']}: ASR {row['asr_before']:.3f} -> "
                  f"{row['asr_after']:.3f}  ACC {row['acc_before']:.3f} -> "
                  f"{row['acc_after']:.3f}  recovery {row['recovery_asr']:.3f}")
    agg = report["aggregate"]
    if agg["seeds_completed"] == 0:
        print("all seeds failed")
        return 2
    mean = agg["mean"]
    print(f"mean: ASR {mean['asr_before']:.3f} -> {mean['asr_after']:.3f}  "
          f"ACC {mean['acc_before']:.3f} -> {mean['acc_after']:.3f}")

    failures = []
    if agg["seeds_completed"] < len(cfg.seeds):
        failures.append(f"{len(cfg.seeds) - agg['seeds_completed']} seed(s) failed")
    for key, (op, bound) in _GATES.items():
        value = mean[key]
        ok = value >= bound if op == ">=" else value <= bound
        if not ok:
            failures.append(f"{key} {value:.3f} not {op} {bound}")
    drop = mean["acc_before"] - mean["acc_after"]
    if drop > _MAX_ACC_DROP:
        failures.append(f"accuracy drop {drop:.3f} exceeds {_MAX_ACC_DROP}")
    if failures:
        for f in failures:
            print(f"gate failure: {f}")
        return 3
    print("all gates passed")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "pipeline":
            return _cmd_pipeline(cfg, args.parallel_seeds)
        seed = cfg.seeds[0]
        handler = {"train": _cmd_train, "attack": _cmd_attack,
                   "recover": _cmd_recover, "unlearn": _cmd_unlearn,
                   "eval": _cmd_eval, "synth-data": _cmd_synth_data}[args.command]
        handler(cfg, seed)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except GraphPurifyError as exc:
        print(f"stage failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

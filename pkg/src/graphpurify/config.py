"""Experiment configuration: dataclasses mirrored one-to-one by a TOML file.

Every knob of an end-to-end run lives here. `ExperimentConfig()` carries
the reference defaults; `desk_config()` returns the bundled preset whose
defense stages are retuned for the synthetic corpus (see each override's
comment). `load_config` parses and validates a TOML file, rejecting
unknown keys so typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .attacks import PoisonSpec
from .errors import ConfigError
from .recovery import RecoveryConfig
from .unlearning import UnlearnConfig

ATTACK_KINDS = ("subba", "expba", "gta", "adaptive")
MODEL_KINDS = ("gcn", "gin")


@dataclass
class DatasetConfig:
    """Either a TU-format directory or the bundled synthetic family."""

    kind: str = "synthetic"
    path: str = ""
    num_graphs: int = 800
    feature_dim: int = 16
    min_nodes: int = 14
    max_nodes: int = 26
    edge_p: tuple = (0.08, 0.08)
    noise: float = 0.2
    train_frac: float = 0.8
    holdout_frac: float = 0.03

    def __post_init__(self):
        self.edge_p = tuple(float(p) for p in self.edge_p)
        if self.kind not in ("synthetic", "tu"):
            raise ConfigError(f"dataset kind must be synthetic or tu, got {self.kind!r}")
        if self.kind == "tu" and not self.path:
            raise ConfigError("tu dataset needs a path")
        if self.num_graphs < 2:
            raise ConfigError(f"num_graphs must be >= 2, got {self.num_graphs}")
        if self.min_nodes < 1 or self.max_nodes < self.min_nodes:
            raise ConfigError(
                f"node range ({self.min_nodes}, {self.max_nodes}) is empty")
        if len(self.edge_p) != 2 or not all(0.0 < p <= 1.0 for p in self.edge_p):
            raise ConfigError(f"edge_p must be two densities in (0, 1], got {self.edge_p}")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if not 0.0 < self.train_frac < 1.0 or not 0.0 < self.holdout_frac < 1.0:
            raise ConfigError("train_frac and holdout_frac must lie in (0, 1)")
        if self.train_frac + self.holdout_frac >= 1.0:
            raise ConfigError("train_frac + holdout_frac must leave room for a test split")


@dataclass
class ModelConfig:
    kind: str = "gcn"
    hidden_dims: tuple = (32, 32, 32)

    def __post_init__(self):
        self.hidden_dims = tuple(int(w) for w in self.hidden_dims)
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if not self.hidden_dims or any(w < 1 for w in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be positive widths, got {self.hidden_dims}")


@dataclass
class TrainingConfig:
    epochs: int = 200
    lr: float = 0.05
    batch_size: int = 16

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class AttackConfig:
    """Poisoning budget plus which attack builds the backdoor."""

    kind: str = "subba"
    target_label: int = 1
    injection_ratio: float = 0.05
    trigger_frac: float = 0.20
    trigger_density: float = 0.8
    alpha: float = 2.0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"attack kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if not 0.0 < self.trigger_density <= 1.0:
            raise ConfigError(
                f"trigger_density must lie in (0, 1], got {self.trigger_density}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        # delegate ratio and label checks
        self.poison_spec()

    def poison_spec(self) -> PoisonSpec:
        # Exp-BA stamps the most important sites; the others stamp random ones.
        placement = "top" if self.kind == "expba" else "random"
        return PoisonSpec(target_label=self.target_label,
                          injection_ratio=self.injection_ratio,
                          trigger_frac=self.trigger_frac,
                          placement=placement)


@dataclass
class ExperimentConfig:
    """Everything one `pipeline` invocation needs, nested per stage."""

    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    unlearn: UnlearnConfig = field(default_factory=UnlearnConfig)
    seeds: tuple = (0, 1, 2, 3, 4)
    out_dir: str = "runs"

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if not self.out_dir:
            raise ConfigError("out_dir must be non-empty")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dataset"]["edge_p"] = list(self.dataset.edge_p)
        d["model"]["hidden_dims"] = list(self.model.hidden_dims)
        d["seeds"] = list(self.seeds)
        return d


_SECTIONS = {"dataset": DatasetConfig, "model": ModelConfig,
             "training": TrainingConfig, "attack": AttackConfig,
             "recovery": RecoveryConfig, "unlearn": UnlearnConfig}


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a validated config from a parsed TOML document."""
    raw = dict(raw)
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = raw.pop(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table, got {type(section).__name__}")
        allowed = {f.name for f in fields(cls)}
        unknown = set(section) - allowed
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
        kwargs[name] = cls(**section)
    top_allowed = {"seeds", "out_dir"}
    unknown = set(raw) - top_allowed
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    kwargs.update(raw)
    return ExperimentConfig(**kwargs)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    return config_from_dict(raw)


def desk_config() -> ExperimentConfig:
    """The bundled preset: reference defaults with the defense retuned.

    The synthetic corpus trains its classifier at lr 0.05, so defense
    stages using the reference lr 0.001 barely move the model. The
    recovery threshold rises above the corpus's class-blob similarity
    band (about 0.94) so the hinge keeps pulling until trigger-level
    similarity, and both defense learning rates scale with the training
    rate. Unlearning doubles its epochs for the same reason.
    """
    cfg = ExperimentConfig()
    cfg.recovery = replace(cfg.recovery, lr=0.05, threshold=0.99)
    cfg.unlearn = replace(cfg.unlearn, lr=0.02, epochs=60)
    return cfg


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize {type(v).__name__} to TOML")


def to_toml(cfg: ExperimentConfig) -> str:
    """Render a config as a TOML document that load_config round-trips."""
    d = cfg.to_dict()
    lines = [f"seeds = {_toml_value(d.pop('seeds'))}",
             f"out_dir = {_toml_value(d.pop('out_dir'))}"]
    for name in _SECTIONS:
        lines.append("")
        lines.append(f"[{name}]")
        for key, value in d[name].items():
            lines.append(f"{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def write_default_toml(path: str):
    """Emit the reference defaults as an editable starting point."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_toml(ExperimentConfig()))

"""Run configuration: nested dataclasses, JSON loading, dotted overrides and
pre-flight validation.

Every inconsistency is collected before anything is computed or written, so
a rejected config reports all of its problems at once.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from ..curriculum.runner import SELECTIONS, CurriculumSettings, PolicySettings
from ..errors import ConfigError
from ..nncore import derive_seed
from ..orderingnet import ModelConfig
from ..toydata import DatasetSpec

MODES = ("policy", "random", "inverse", "spatial-only", "temporal-only", "serial")
TASKS = ("spatial", "temporal")


@dataclass
class DataConfig:
    """Toy data shared by both tasks; sample seeds come from the master seed."""

    m: int = 2
    u: int = 4
    extent: int = 8
    n_classes: int = 8
    n_train: int = 2048
    n_val: int = 100
    n_test: int = 512


@dataclass
class PermConfig:
    size: int = 24


@dataclass
class NetConfig:
    encoder_dim: int = 64
    fc6_dim: int = 64
    fc7_dim: int = 128
    lstm_hidden_dim: int = 32


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 0.05
    jitter: float = 0.05


@dataclass
class CompareConfig:
    """Source runs of ``episodes`` episodes; epochs start from the listed checkpoints."""

    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    episodes: int = 20
    checkpoints: list[int] = field(default_factory=lambda: [10, 20])


@dataclass
class SweepConfig:
    sizes: list[int] = field(default_factory=lambda: [10, 25, 50, 100, 200])
    repeats: int = 5


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    perms: PermConfig = field(default_factory=PermConfig)
    model: NetConfig = field(default_factory=NetConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    curriculum: CurriculumSettings = field(default_factory=CurriculumSettings)
    policy: PolicySettings = field(default_factory=PolicySettings)
    compare: CompareConfig = field(default_factory=CompareConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    mode: str = "policy"
    seed: int = 0
    out: str = "runs/default"

    # ------------------------------------------------------------ derived

    def tasks(self) -> tuple[str, ...]:
        if self.mode == "spatial-only":
            return ("spatial",)
        if self.mode == "temporal-only":
            return ("temporal",)
        return TASKS

    def selection(self) -> str:
        """Selection rule: the mode itself for the three ablation modes."""
        return self.mode if self.mode in SELECTIONS else self.curriculum.selection

    def n_parts(self, task: str) -> int:
        return self.data.m * self.data.m if task == "spatial" else self.data.u

    def dataset_spec(self, task: str) -> DatasetSpec:
        d = self.data
        return DatasetSpec(kind=task, m=d.m, u=d.u, extent=d.extent, n_classes=d.n_classes,
                           n_train=d.n_train, n_val=d.n_val, n_test=d.n_test,
                           seed=self.sub_seed("data", task) % 2**32)

    def model_config(self) -> ModelConfig:
        d, n = self.data, self.model
        return ModelConfig(
            tile_input_dim=d.extent * d.extent, frame_input_dim=d.extent * d.extent,
            n_tiles=d.m * d.m, n_frames=d.u, encoder_dim=n.encoder_dim, fc6_dim=n.fc6_dim,
            fc7_dim=n.fc7_dim, lstm_hidden_dim=n.lstm_hidden_dim,
            n_perm_spatial=self.perms.size, n_perm_temporal=self.perms.size,
        )

    def sub_seed(self, *keys) -> int:
        return derive_seed(self.seed, *keys)

    # --------------------------------------------------------- validation

    def problems(self) -> list[str]:
        out = []
        if self.mode not in MODES:
            out.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            out.append(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        d = self.data
        for name in ("extent", "n_classes", "n_train", "n_val", "n_test"):
            if getattr(d, name) < 1:
                out.append(f"data.{name} must be >= 1, got {getattr(d, name)}")
        if d.m < 2:
            out.append(f"data.m must be >= 2, got {d.m}")
        if d.u < 2:
            out.append(f"data.u must be >= 2, got {d.u}")
        for name, v in asdict(self.model).items():
            if v < 1:
                out.append(f"model.{name} must be >= 1, got {v}")
        if self.perms.size < 1:
            out.append(f"perms.size must be >= 1, got {self.perms.size}")
        for task in TASKS:
            n = self.n_parts(task)
            if n >= 2 and self.perms.size > math.factorial(n):
                out.append(f"perms.size={self.perms.size} exceeds {n}! = {math.factorial(n)} "
                           f"orderings of the {task} parts")
        t = self.training
        if t.batch_size < 1:
            out.append(f"training.batch_size must be >= 1, got {t.batch_size}")
        if not t.lr > 0:
            out.append(f"training.lr must be > 0, got {t.lr}")
        if t.jitter < 0:
            out.append(f"training.jitter must be >= 0, got {t.jitter}")
        c = self.curriculum
        out += c.problems({task: self.perms.size for task in self.tasks()})
        if c.checkpoint_every < 0:
            out.append("curriculum.checkpoint_every must be >= 0")
        p = self.policy
        if p.hidden < 1:
            out.append(f"policy.hidden must be >= 1, got {p.hidden}")
        if not p.lr > 0:
            out.append(f"policy.lr must be > 0, got {p.lr}")
        if not 0 <= p.rho <= 1:
            out.append(f"policy.rho must lie in [0, 1], got {p.rho}")
        if p.beta < 0:
            out.append(f"policy.beta must be >= 0, got {p.beta}")
        if not 0 <= p.gamma <= 1:
            out.append(f"policy.gamma must lie in [0, 1], got {p.gamma}")
        if len(self.compare.seeds) < 2:
            out.append("compare.seeds needs at least 2 seeds")
        if not self.compare.checkpoints or any(e < 1 or e > self.compare.episodes for e in self.compare.checkpoints):
            out.append(f"compare.checkpoints must be non-empty and lie in 1..compare.episodes={self.compare.episodes}")
        if self.sweep.repeats < 1:
            out.append("sweep.repeats must be >= 1")
        if any(s < 1 or s > d.n_train for s in self.sweep.sizes):
            out.append(f"sweep.sizes must lie in 1..data.n_train={d.n_train}")
        return out

    def validate(self) -> "RunConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------- loading

def _build(cls, raw: dict, prefix: str, problems: list[str]):
    if not isinstance(raw, dict):
        problems.append(f"{prefix or 'config'} must be a JSON object")
        return cls()
    kwargs = {}
    known = {f.name: f for f in fields(cls)}
    for key, value in raw.items():
        name = f"{prefix}{key}"
        if key not in known:
            problems.append(f"unknown config field {name!r}")
            continue
        default = getattr(cls(), key)
        if is_dataclass(default):
            kwargs[key] = _build(type(default), value, name + ".", problems)
        elif not _type_ok(default, value):
            problems.append(f"{name} expects {type(default).__name__}, got {value!r}")
        else:
            kwargs[key] = float(value) if isinstance(default, float) else value
    return cls(**kwargs)


def _type_ok(default, value) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    return isinstance(value, type(default))


def config_from_dict(raw: dict) -> RunConfig:
    problems: list[str] = []
    cfg = _build(RunConfig, raw, "", problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``key.sub=value`` strings to a raw config dict (values parsed as JSON when possible)."""
    raw = copy.deepcopy(raw)
    problems = []
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            problems.append(f"override {item!r} is not of the form key=value")
            continue
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                problems.append(f"override {key!r} descends into a non-object")
                break
        else:
            node[parts[-1]] = _parse_value(value)
    if problems:
        raise ConfigError(problems)
    return raw


def load_config(path=None, overrides=(), seed: int | None = None, out: str | None = None) -> RunConfig:
    """Defaults, then the JSON file, then ``--set`` overrides, then ``--seed``/``--out``."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    raw = apply_overrides(raw, list(overrides))
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    return config_from_dict(raw).validate()

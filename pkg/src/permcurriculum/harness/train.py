"""Training driver: builds everything from a RunConfig and writes a run directory.

Run directory layout::

    config.json            resolved configuration
    perms_<task>.json      permutation sets
    metrics.jsonl          one line per validation event
    episodes.jsonl         one line per (episode, task)
    counters.json          forward-pass and iteration counters
    checkpoints/           model_epXXXX.ckpt (+ policy_<task>_epXXXX.ckpt)
    model.ckpt             final network
    policy_<task>.ckpt     final policies (policy and inverse selection only)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..curriculum.env import OrderingEnv
from ..curriculum.runner import CurriculumRunner, CurriculumSettings
from ..orderingnet import OrderingModel
from ..permset import PermutationSet, generate_set, save_set
from ..toydata import Dataset, generate
from .config import TASKS, RunConfig

RUN_FILES = ("config.json", "metrics.jsonl", "episodes.jsonl", "counters.json", "model.ckpt")


def make_perm_sets(cfg: RunConfig, tasks=TASKS) -> dict[str, PermutationSet]:
    return {t: generate_set(cfg.n_parts(t), cfg.perms.size, cfg.sub_seed("perms", t) % 2**32) for t in tasks}


def make_datasets(cfg: RunConfig, tasks=TASKS) -> dict[str, Dataset]:
    return {t: generate(cfg.dataset_spec(t)) for t in tasks}


def make_model(cfg: RunConfig) -> OrderingModel:
    return OrderingModel(cfg.model_config(), seed=cfg.sub_seed("init"))


def make_env(cfg: RunConfig, model, datasets, perm_sets, tasks, stage: str = "main") -> OrderingEnv:
    return OrderingEnv(
        model, {t: datasets[t] for t in tasks}, {t: perm_sets[t] for t in tasks},
        batch_size=cfg.training.batch_size, lr=cfg.training.lr,
        data_seed=cfg.sub_seed("samples", stage), augment_seed=cfg.sub_seed("augment", stage),
        jitter=cfg.training.jitter,
    )


def curriculum_settings(cfg: RunConfig) -> CurriculumSettings:
    c = cfg.curriculum
    return CurriculumSettings(n_groups=c.n_groups, n_free=c.n_free, action_batches=c.action_batches, episodes=c.episodes,
                              selection=cfg.selection(), update_policy=c.update_policy,
                              checkpoint_every=c.checkpoint_every, free_sampling=c.free_sampling)


@dataclass
class TaskCounters:
    episodes: int = 0
    train_iterations: int = 0
    train_forward: int = 0
    validation_forward: int = 0
    validations: int = 0


@dataclass
class RunResult:
    out: Path
    model: OrderingModel
    runners: list[CurriculumRunner]
    counters: dict = field(default_factory=dict)


def _prepare_dir(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(exist_ok=True)
    for name in ("metrics.jsonl", "episodes.jsonl"):
        (out / name).write_text("", encoding="utf-8")


def _dump_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _run_stage(cfg, model, datasets, perm_sets, tasks, out: Path, stage: str, checkpoint_at, counters,
               start_episode: int = 0):
    env = make_env(cfg, model, datasets, perm_sets, tasks, stage)
    settings = curriculum_settings(cfg)
    runner = CurriculumRunner(env, settings, cfg.policy, seed=cfg.sub_seed("curriculum", stage),
                              metrics_path=out / "metrics.jsonl", episodes_path=out / "episodes.jsonl",
                              start_episode=start_episode)
    uses_policy = runner.sampling_mode is not None
    suffix = "" if stage == "main" else f"_{stage}"

    def on_episode(r: CurriculumRunner):
        ep = r.episode
        if ep in checkpoint_at or (settings.checkpoint_every and ep % settings.checkpoint_every == 0):
            model.save(out / "checkpoints" / f"model{suffix}_ep{ep:04d}.ckpt")
            if uses_policy:
                for task, ts in r.tasks.items():
                    ts.policy.save(out / "checkpoints" / f"policy_{task}{suffix}_ep{ep:04d}.ckpt")

    runner.run(on_episode=on_episode)
    n_val_events = {t: sum(1 for m in runner.metrics if m["task"] == t) for t in tasks}
    # the env shares its train counter between tasks; each task consumes B samples per iteration
    for t in tasks:
        c = counters.setdefault(t, TaskCounters())
        c.episodes += runner.episode - start_episode
        c.train_iterations += env.train_iterations
        c.train_forward += env.train_iterations * env.batch_size
        c.validation_forward += n_val_events[t] * len(perm_sets[t]) * len(env.val_parts[t])
        c.validations += n_val_events[t]
    if uses_policy:
        for task, ts in runner.tasks.items():
            ts.policy.save(out / f"policy_{task}{suffix}.ckpt")
    return runner


def run_training(cfg: RunConfig, out=None, init_checkpoint=None, checkpoint_at=()) -> RunResult:
    """Train in the configured mode and write the run directory."""
    cfg.validate()
    out = Path(out if out is not None else cfg.out)
    _prepare_dir(out)
    _dump_json(out / "config.json", cfg.to_dict())
    perm_sets = make_perm_sets(cfg)
    for task, ps in perm_sets.items():
        save_set(ps, out / f"perms_{task}.json")
    datasets = make_datasets(cfg)
    model = make_model(cfg)
    if init_checkpoint is not None:
        model.load(init_checkpoint)
    checkpoint_at = set(checkpoint_at)

    counters: dict[str, TaskCounters] = {}
    runners = []
    if cfg.mode == "serial":
        runners.append(_run_stage(cfg, model, datasets, perm_sets, ("spatial",), out, "spatial", checkpoint_at, counters))
        model.save(out / "model_spatial.ckpt")
        # episode numbers continue so that validation events stay distinct
        runners.append(_run_stage(cfg, model, datasets, perm_sets, ("temporal",), out, "temporal", checkpoint_at,
                                  counters, start_episode=cfg.curriculum.episodes))
    else:
        runners.append(_run_stage(cfg, model, datasets, perm_sets, cfg.tasks(), out, "main", checkpoint_at, counters))
    model.save(out / "model.ckpt")

    summary = {
        "mode": cfg.mode,
        "selection": cfg.selection(),
        "batch_size": cfg.training.batch_size,
        "n_val": cfg.data.n_val,
        "n_perms": {t: len(perm_sets[t]) for t in counters},
        "tasks": {t: vars(c) for t, c in counters.items()},
        "train_forward": sum(c.train_forward for c in counters.values()),
        "validation_forward": sum(c.validation_forward for c in counters.values()),
    }
    summary["forward_pass_total"] = summary["train_forward"] + summary["validation_forward"]
    _dump_json(out / "counters.json", summary)
    return RunResult(out, model, runners, summary)

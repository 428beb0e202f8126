"""Multi-run experiments: selection-rule comparison and validation-size sweep."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from ..curriculum.runner import CurriculumRunner, CurriculumSettings
from ..curriculum.state import validate
from ..errors import RejectedInput
from ..nncore import make_rng
from ..orderingnet import OrderingModel
from ..permset import load_set
from .config import RunConfig, config_from_dict
from .reports import to_csv
from .train import make_datasets, make_env, make_model, make_perm_sets, run_training

# arm -> (selection rule, whether the perm-sampling stream is the shared one)
ARMS = {
    "policy": ("policy", True),
    "random": ("random", True),
    "random-control": ("random", False),
    "inverse": ("inverse", True),
}
COMPARE_HEADER = ["seed", "checkpoint", "arm", "accuracy", "relative"]
SWEEP_HEADER = ["checkpoint", "task", "size", "mean_error", "std_error"]


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def epoch_accuracy(cfg: RunConfig, model_path, policy_paths: dict, arm: str, datasets, perm_sets,
                   checkpoint: int) -> float:
    """Train one pass over the training split from ``model_path`` under ``arm``.

    Returns the validation ordering accuracy averaged over tasks.  The policy
    is frozen; one validation at the start supplies the grouping it reads.
    """
    selection, shared = ARMS[arm]
    model = make_model(cfg)
    model.load(model_path)
    tasks = cfg.tasks()
    # identical sample and jitter streams for every arm
    env = make_env(cfg, model, datasets, perm_sets, tasks, stage=f"epoch-{checkpoint}")
    n_iter = math.ceil(cfg.data.n_train / cfg.training.batch_size)
    settings = CurriculumSettings(n_groups=cfg.curriculum.n_groups, n_free=n_iter, action_batches=0, episodes=0,
                                  selection=selection, update_policy=False, free_sampling="policy")
    key = ("compare", checkpoint) if shared else ("compare-control", checkpoint)
    runner = CurriculumRunner(env, settings, cfg.policy, seed=cfg.sub_seed(*key))
    if runner.sampling_mode is not None:
        for task, ts in runner.tasks.items():
            ts.policy.load(policy_paths[task])
    runner.state_validation()
    runner.free_phase(n_iter)
    return float(np.mean([1.0 - env.validate(t).error for t in tasks]))


def compare(cfg: RunConfig, out) -> tuple[str, dict]:
    """Relative accuracy of each selection rule after one epoch, per seed and checkpoint."""
    out = Path(out)
    seeds = cfg.compare.seeds
    if len(seeds) < 2:
        raise RejectedInput("compare needs at least 2 seeds")
    rows, relative = [], {arm: [] for arm in ARMS}
    for seed in seeds:
        c = dataclasses.replace(cfg, seed=seed, mode="policy",
                                curriculum=dataclasses.replace(cfg.curriculum, episodes=cfg.compare.episodes))
        src = out / f"seed{seed}" / "source"
        run_training(c, out=src, checkpoint_at=cfg.compare.checkpoints)
        datasets, perm_sets = make_datasets(c, c.tasks()), make_perm_sets(c, c.tasks())
        for ep in cfg.compare.checkpoints:
            model_path = src / "checkpoints" / f"model_ep{ep:04d}.ckpt"
            policy_paths = {t: src / "checkpoints" / f"policy_{t}_ep{ep:04d}.ckpt" for t in c.tasks()}
            acc = {arm: epoch_accuracy(c, model_path, policy_paths, arm, datasets, perm_sets, ep) for arm in ARMS}
            for arm in ARMS:
                rel = acc[arm] / acc["random"] if acc["random"] > 0 else float("nan")
                relative[arm].append(rel)
                rows.append([seed, ep, arm, repr(acc[arm]), repr(rel)])
    summary = {}
    for arm, vals in relative.items():
        mean, std = _mean_std(vals)
        summary[arm] = {"mean": mean, "std": std, "n": len(vals)}
    return to_csv(COMPARE_HEADER, rows), summary


def run_checkpoints(run_dir: Path) -> list[Path]:
    ckpts = sorted((run_dir / "checkpoints").glob("model*_ep*.ckpt"))
    final = run_dir / "model.ckpt"
    if final.exists():
        ckpts.append(final)
    if not ckpts:
        raise RejectedInput(f"no checkpoints under {run_dir}")
    return ckpts


def load_run_config(run_dir) -> RunConfig:
    path = Path(run_dir) / "config.json"
    if not path.exists():
        raise RejectedInput(f"{path} missing")
    return config_from_dict(json.loads(path.read_text(encoding="utf-8")))


def valsize_sweep(run_dir, sizes, repeats: int, tasks=None) -> str:
    """Mean and std of the ordering error over ``repeats`` seeded validation
    sets per size, drawn from the training split, for every checkpoint."""
    run_dir = Path(run_dir)
    cfg = load_run_config(run_dir)
    tasks = tuple(tasks or cfg.tasks())
    datasets = make_datasets(cfg, tasks)
    perm_sets = {t: load_set(run_dir / f"perms_{t}.json") for t in tasks}
    n_train = cfg.data.n_train
    bad = [s for s in sizes if s < 1 or s > n_train]
    if bad or repeats < 1:
        raise RejectedInput(f"sizes must lie in 1..{n_train} and repeats must be >= 1 (got {bad}, {repeats})")
    rows = []
    for ckpt in run_checkpoints(run_dir):
        model = OrderingModel.from_checkpoint(ckpt, n_frames=cfg.data.u)
        for task in tasks:
            train = datasets[task].split("train")[0]
            for size in sizes:
                order = make_rng(cfg.sub_seed("valsize", task, size)).permutation(n_train)
                errors = []
                for r in range(repeats):
                    # disjoint while they fit, wrapping around (overlapping) once they do not
                    idx = order[(r * size + np.arange(size)) % n_train]
                    errors.append(validate(model, task, train[idx], perm_sets[task]).error)
                rows.append([ckpt.name, task, size, repr(float(np.mean(errors))), repr(float(np.std(errors)))])
    return to_csv(SWEEP_HEADER, rows)

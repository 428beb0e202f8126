"""Episode loop and the alternating training driver.

Each episode t runs:

1. ``n_free`` plain training iterations with uniformly drawn permutations;
   ``free_sampling="policy"`` instead draws them through the frozen policy
   over the most recent grouping (uniformly before any grouping exists);
2. a validation giving E_t, a fresh grouping and the grouped state;
3. ``action_batches`` policy-chosen batches;
4. a validation giving E_{t+1}, the reward and one policy update.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import RejectedInput
from ..nncore import derive_seed, make_rng
from ..policy import PolicyParams, reinforce_update, sample_actions, sampling_distribution
from .grouping import GroupedState, Grouping, action_members, aggregate_state, group_permutations, perm_to_action
from .reward import ErrorHistory, compute_reward, extrapolate
from .state import ValidationResult

SELECTIONS = ("policy", "random", "inverse")
_SAMPLING = {"policy": "learned", "inverse": "inverse"}


@dataclass
class CurriculumSettings:
    n_groups: int = 6
    n_free: int = 200
    action_batches: int = 20
    episodes: int = 90
    selection: str = "policy"  # policy | random | inverse
    update_policy: bool = True
    checkpoint_every: int = 10
    free_sampling: str = "uniform"  # uniform | policy

    def problems(self, n_perms: dict[str, int]) -> list[str]:
        out = []
        if self.selection not in SELECTIONS:
            out.append(f"selection must be one of {SELECTIONS}, got {self.selection!r}")
        if self.free_sampling not in ("policy", "uniform"):
            out.append(f"free_sampling must be policy or uniform, got {self.free_sampling!r}")
        for name in ("n_free", "action_batches", "episodes"):
            if getattr(self, name) < 0:
                out.append(f"curriculum.{name} must be >= 0")
        if self.n_groups < 1:
            out.append("curriculum.n_groups must be >= 1")
        for task, n in n_perms.items():
            if self.n_groups > n:
                out.append(f"curriculum.n_groups={self.n_groups} exceeds |perms|={n} for {task}")
        return out


@dataclass
class PolicySettings:
    hidden: int = 16
    lr: float = 0.01
    gamma: float = 1.0
    rho: float = 0.9
    beta: float = 0.01


@dataclass
class TaskState:
    task: str
    policy: PolicyParams
    history: ErrorHistory
    grouping: Grouping | None = None
    s_hat: GroupedState | None = None
    last: ValidationResult | None = None


@dataclass
class EpisodeRecord:
    episode: int
    task: str
    mode: str
    state: list[float]
    actions: list[int]
    log_probs: list[float]
    policy_probs: list[float]
    selection_counts: list[float]
    perm_counts: list[int]
    perm_action: list[int]
    perm_errors: list[float]
    group_medians: list[float]
    error_prev: float | None
    error: float
    baseline: float
    error_next: float
    reward: float
    advantage: float | None = None
    policy_baseline: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


def _finite(x):
    return None if x is None else float(x)


class CurriculumRunner:
    """Drives an environment (real or synthetic) through the configured episodes."""

    def __init__(self, env, settings: CurriculumSettings, policy: PolicySettings | None = None,
                 seed: int = 0, metrics_path=None, episodes_path=None, start_episode: int = 0):
        self.env, self.settings = env, settings
        self.policy_settings = policy or PolicySettings()
        self.seed = seed
        problems = settings.problems({t: env.n_perms(t) for t in env.tasks})
        if problems:
            raise RejectedInput("; ".join(problems))
        ps = self.policy_settings
        self.tasks = {
            task: TaskState(task, PolicyParams(settings.n_groups, ps.hidden, ps.lr, ps.gamma, ps.rho, ps.beta,
                                               seed=derive_seed(seed, "policy-init", task)),
                            ErrorHistory(task))
            for task in env.tasks
        }
        self._policy_rng = make_rng(derive_seed(seed, "policy-sampling"))
        self._perm_rng = make_rng(derive_seed(seed, "perm-sampling"))
        self.metrics_path = Path(metrics_path) if metrics_path else None
        self.episodes_path = Path(episodes_path) if episodes_path else None
        self.metrics: list[dict] = []
        self.records: list[EpisodeRecord] = []
        self.events = 0
        self.episode = start_episode

    # ------------------------------------------------------------ sampling

    @property
    def sampling_mode(self):
        return _SAMPLING.get(self.settings.selection)

    def _uniform_batch(self, task):
        return self._perm_rng.integers(0, self.env.n_perms(task), size=self.env.batch_size)

    def _group_batch(self, ts: TaskState, action: int):
        members = action_members(ts.grouping, ts.s_hat, action)
        return members[self._perm_rng.integers(0, len(members), size=self.env.batch_size)]

    def free_batch(self, task) -> np.ndarray:
        ts = self.tasks[task]
        if self.sampling_mode is None or ts.s_hat is None or self.settings.free_sampling == "uniform":
            return self._uniform_batch(task)
        a = sample_actions(ts.policy, ts.s_hat, 1, self.sampling_mode, self._policy_rng)[0]
        return self._group_batch(ts, a.group)

    # ---------------------------------------------------------- validation

    def _validate(self, task, phase, write=True):
        ts = self.tasks[task]
        res = self.env.validate(task)
        ts.last = res
        ts.grouping = group_permutations(res.state, self.settings.n_groups,
                                         seed=derive_seed(self.seed, "group", task, self.events))
        ts.s_hat = aggregate_state(res.state, ts.grouping)
        self.events += 1
        rec = {
            "episode": self.episode,
            "task": task,
            "phase": phase,
            "error": res.error,
            "reward": None,
            "baseline": None,
            "error_prev": None,
            "group_medians": ts.s_hat.medians.tolist(),
            "group_sizes": ts.s_hat.sizes.tolist(),
            "selection_counts": [],
            "forward_pass_total": self.env.n_forward_train + self.env.n_forward_val,
            "validation_forward_total": self.env.n_forward_val,
            "train_iterations": self.env.train_iterations,
            "perm_errors": res.perm_errors.tolist(),
        }
        self.metrics.append(rec)
        if write:
            self._write_metric(rec)
        return res

    def _write_metric(self, rec):
        if self.metrics_path:
            with open(self.metrics_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec) + "\n")

    # ------------------------------------------------------------- episode

    def free_phase(self, n_iter: int | None = None):
        for _ in range(self.settings.n_free if n_iter is None else n_iter):
            self.env.train_step({task: self.free_batch(task) for task in self.env.tasks})

    def state_validation(self):
        for task, ts in self.tasks.items():
            res = self._validate(task, "state")
            ts.history.record(2 * self.episode, res.error)

    def run_episode(self) -> dict[str, EpisodeRecord]:
        t, n_batches, mode = self.episode, self.settings.action_batches, self.settings.selection
        snap = {task: (ts.grouping, ts.s_hat, ts.last.perm_errors) for task, ts in self.tasks.items()}
        actions, probs = {}, {}
        for task, ts in self.tasks.items():
            if self.sampling_mode is None:
                actions[task] = []
                probs[task] = np.full(self.settings.n_groups, 1.0 / self.settings.n_groups)
            else:
                actions[task] = sample_actions(ts.policy, ts.s_hat, n_batches, self.sampling_mode, self._policy_rng)
                probs[task] = sampling_distribution(ts.policy, ts.s_hat, self.sampling_mode)
        perm_counts = {task: np.zeros(self.env.n_perms(task), dtype=np.int64) for task in self.tasks}
        for k in range(n_batches):
            batch = {}
            for task, ts in self.tasks.items():
                if self.sampling_mode is None:
                    batch[task] = self._uniform_batch(task)
                else:
                    batch[task] = self._group_batch(ts, actions[task][k].group)
                np.add.at(perm_counts[task], batch[task], 1)
            self.env.train_step(batch)

        out = {}
        for task, ts in self.tasks.items():
            grouping, s_hat, perm_errors = snap[task]
            e_prev, e_now = ts.history.get(2 * t - 1), ts.history.get(2 * t)
            baseline = extrapolate(e_prev, e_now)
            # the metric line is written once selection counts are known
            res = self._validate(task, "reward", write=False)
            ts.history.record(2 * t + 1, res.error)
            reward = compute_reward(baseline, res.error)
            advantage = policy_baseline = None
            if mode == "policy" and self.settings.update_policy and n_batches > 0:
                diag = reinforce_update(ts.policy, actions[task], reward, s_hat)
                advantage, policy_baseline = diag.advantage, diag.baseline_before
            p2a = perm_to_action(grouping, s_hat)
            sel = np.bincount(p2a, weights=perm_counts[task], minlength=self.settings.n_groups) / self.env.batch_size
            rec = EpisodeRecord(
                episode=t, task=task, mode=mode, state=s_hat.vector().tolist(),
                actions=[a.group for a in actions[task]], log_probs=[a.log_prob for a in actions[task]],
                policy_probs=probs[task].tolist(), selection_counts=sel.tolist(),
                perm_counts=perm_counts[task].tolist(), perm_action=p2a.tolist(), perm_errors=perm_errors.tolist(),
                group_medians=s_hat.medians.tolist(), error_prev=_finite(e_prev), error=e_now,
                baseline=baseline, error_next=res.error, reward=reward,
                advantage=advantage, policy_baseline=policy_baseline,
            )
            self.metrics[-1].update(baseline=baseline, error_prev=_finite(e_prev), reward=reward,
                                    selection_counts=rec.selection_counts)
            self._write_metric(self.metrics[-1])
            out[task] = rec
            self.records.append(rec)
            if self.episodes_path:
                with open(self.episodes_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec.to_json()) + "\n")
        self.episode += 1
        return out

    def run(self, episodes: int | None = None, on_episode=None):
        for _ in range(self.settings.episodes if episodes is None else episodes):
            self.free_phase()
            self.state_validation()
            self.run_episode()
            if on_episode:
                on_episode(self)
        return self.records


def run_episode(runner: CurriculumRunner) -> dict[str, EpisodeRecord]:
    """One Algorithm-1 episode on ``runner``'s current state (validation must precede it)."""
    for ts in runner.tasks.values():
        if ts.s_hat is None or ts.history.get(2 * runner.episode) is None:
            raise RejectedInput("run_episode needs a state validation for the current episode first")
    return runner.run_episode()


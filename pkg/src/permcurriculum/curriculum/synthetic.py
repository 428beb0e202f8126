"""Cheap stand-in environment with per-permutation latent errors.

Training on permutation i shrinks its error in proportion to the error
itself, and shrinks Hamming-close permutations a little.  Every step all
errors drift back up at a per-permutation forgetting rate.  Rates come in a
few tiers, so a family of permutations stays hard unless it is trained on
specifically.  Validation is a deterministic function of the latent errors,
so policies can be tested in milliseconds.
"""

from __future__ import annotations

import numpy as np

from ..errors import RejectedInput
from ..nncore import make_rng
from ..permset import PermutationSet
from .state import NetworkStateMatrix, ValidationResult


class SyntheticLearner:
    def __init__(self, perm_set: PermutationSet, n_val: int = 100, batch_size: int = 32,
                 lr: float = 0.2, transfer: float = 0.2, drift: float = 0.01, noise: float = 0.001,
                 tiers: int = 4, seed: int = 0, task: str = "spatial", initial=None):
        self.perm_sets = {task: perm_set}
        self.tasks = (task,)
        self.batch_size = batch_size
        self.lr, self.transfer, self.drift, self.noise = lr, transfer, drift, noise
        if tiers < 1:
            raise RejectedInput("tiers must be >= 1")
        rng = make_rng(seed)
        n_perm = len(perm_set)
        self.errors = (np.asarray(initial, dtype=np.float64).copy() if initial is not None
                       else rng.uniform(0.2, 0.95, size=n_perm))
        # forgetting comes in a few tiers so that hard permutations form families
        self.tier = rng.permutation(np.arange(n_perm) % tiers)
        levels = np.geomspace(0.1, 4.0, tiers) if tiers > 1 else np.ones(1)
        self.forget = drift * levels[self.tier] * rng.uniform(0.8, 1.2, size=n_perm)
        self._draws = rng.uniform(0.0, 1.0, size=(n_perm, n_val))
        self._noise_rng = make_rng(seed + 1)
        d = (perm_set.table[:, None, :] != perm_set.table[None, :, :]).sum(axis=2)
        self._proximity = 1.0 - d / perm_set.n
        np.fill_diagonal(self._proximity, 0.0)
        self.n_forward_train = 0
        self.n_forward_val = 0
        self.train_iterations = 0

    def n_perms(self, task: str) -> int:
        return len(self.perm_sets[task])

    def train_step(self, perm_ids: dict) -> dict:
        ids = np.asarray(perm_ids[self.tasks[0]], dtype=np.int64)
        if len(ids) == 0:
            raise RejectedInput("empty batch")
        share = np.bincount(ids, minlength=len(self.errors)) / len(ids)
        e = self.errors
        direct = self.lr * share * e
        spill = self.transfer * self.lr * (self._proximity @ share) * e
        e = e - direct - spill + self.forget * (1.0 - e) + self._noise_rng.normal(0.0, self.noise, size=e.shape)
        self.errors = np.clip(e, 0.0, 1.0)
        self.n_forward_train += len(ids)
        self.train_iterations += 1
        return {self.tasks[0]: float(self.errors.mean())}

    def validate(self, task: str) -> ValidationResult:
        e = self.errors[:, None]
        u = self._draws
        correct = u >= e
        with np.errstate(divide="ignore", invalid="ignore"):
            up = 1.0 + np.where(e < 1.0, (u - e) / (1.0 - e), 1.0)
            down = 0.5 + 0.5 * np.where(e > 0.0, u / e, 0.0)
        ratios = np.clip(np.where(correct, up, down), 0.5, 2.0)
        n = ratios.size
        self.n_forward_val += n
        return ValidationResult(NetworkStateMatrix(ratios, task), 1.0 - float(correct.mean()), correct, n)

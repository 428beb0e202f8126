"""Training environment around the ordering network and its datasets."""

from __future__ import annotations

import numpy as np

from ..nncore import make_rng
from ..orderingnet import OrderingModel
from ..permset import PermutationSet
from ..toydata import JITTER, Dataset, make_permuted_batch
from .state import ValidationResult, validate


class OrderingEnv:
    """Draws training samples, shuffles them and steps the model.

    Sample ids and jitter come from their own streams, so two runs that
    differ only in which permutations they request see identical images in
    identical order.
    """

    def __init__(self, model: OrderingModel, datasets: dict[str, Dataset], perm_sets: dict[str, PermutationSet],
                 batch_size: int = 32, lr: float = 0.05, data_seed: int = 0, augment_seed: int = 1,
                 jitter: float = JITTER, val_parts: dict | None = None):
        self.model = model
        self.tasks = tuple(datasets)
        self.perm_sets = perm_sets
        self.batch_size, self.lr, self.jitter = batch_size, lr, jitter
        self.train_parts = {t: ds.split("train")[0] for t, ds in datasets.items()}
        self.val_parts = val_parts or {t: ds.split("val")[0] for t, ds in datasets.items()}
        self._data_rng = make_rng(data_seed)
        self._aug_rng = make_rng(augment_seed)
        self.n_forward_train = 0
        self.n_forward_val = 0
        self.train_iterations = 0

    def n_perms(self, task: str) -> int:
        return len(self.perm_sets[task])

    def train_step(self, perm_ids: dict) -> dict:
        batches = {}
        for task in self.tasks:
            ids = np.asarray(perm_ids[task], dtype=np.int64)
            samples = self._data_rng.integers(0, len(self.train_parts[task]), size=len(ids))
            batches[task] = make_permuted_batch(self.train_parts[task], self.perm_sets[task],
                                                np.column_stack([samples, ids]), self._aug_rng, self.jitter)
            self.n_forward_train += len(ids)
        ls, lt = self.model.train_step_dual(batches.get("spatial"), batches.get("temporal"), self.lr)
        self.train_iterations += 1
        return {k: v for k, v in (("spatial", ls), ("temporal", lt)) if v is not None}

    def validate(self, task: str) -> ValidationResult:
        res = validate(self.model, task, self.val_parts[task], self.perm_sets[task])
        self.n_forward_val += res.n_forward
        return res

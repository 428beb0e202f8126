"""Network state from a validation pass: softmax ratios and ordering error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RejectedInput
from ..nncore import softmax
from ..permset import PermutationSet
from ..toydata import make_permuted_batch

RATIO_MIN, RATIO_MAX = 0.5, 2.0


@dataclass
class NetworkStateMatrix:
    """Row i holds the softmax ratio of permutation i on every validation sample."""

    ratios: np.ndarray  # (|perms|, |val|)
    task: str

    @property
    def shape(self):
        return self.ratios.shape


@dataclass
class ValidationResult:
    state: NetworkStateMatrix
    error: float
    correct: np.ndarray  # (|perms|, |val|) argmax indicator
    n_forward: int

    @property
    def perm_errors(self) -> np.ndarray:
        return 1.0 - self.correct.mean(axis=1)


def softmax_ratios(probs: np.ndarray, labels: np.ndarray):
    """Ratio ``(y_l + 1) / (y_p + 1)`` per row and the argmax-correct indicator.

    ``p`` is the runner-up class when the argmax (smallest index on ties)
    equals the label, otherwise the argmax.  Correctness follows the argmax
    alone, so a row whose label wins a tie on the smallest index counts as
    correct while its ratio is exactly 1.0.  Away from exact ties a pair is
    correct exactly when its ratio exceeds 1.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(len(probs))
    top = probs.argmax(axis=1)
    correct = top == labels
    y_l = probs[rows, labels]
    masked = probs.copy()
    masked[rows, labels] = -np.inf
    runner_up = masked.max(axis=1)
    y_p = np.where(correct, runner_up, probs[rows, top])
    ratios = np.clip((y_l + 1.0) / (y_p + 1.0), RATIO_MIN, RATIO_MAX)
    return ratios, correct


def validate(model, task: str, val_parts: np.ndarray, perm_set: PermutationSet,
             chunk: int = 4096) -> ValidationResult:
    """Evaluate every (permutation, validation sample) pair once, without jitter."""
    n_val, n_perm = len(val_parts), len(perm_set)
    if n_val < 1:
        raise RejectedInput("validation set is empty")
    pairs = np.stack(np.meshgrid(np.arange(n_val), np.arange(n_perm), indexing="xy"), axis=-1).reshape(-1, 2)
    ratios = np.empty(len(pairs))
    correct = np.empty(len(pairs), dtype=bool)
    n_forward = 0
    for start in range(0, len(pairs), chunk):
        block = pairs[start:start + chunk]
        x, labels = make_permuted_batch(val_parts, perm_set, block)
        probs = softmax(model.forward(task, x))
        n_forward += len(block)
        ratios[start:start + len(block)], correct[start:start + len(block)] = softmax_ratios(probs, labels)
    ratios = ratios.reshape(n_perm, n_val)
    correct = correct.reshape(n_perm, n_val)
    error = 1.0 - float(correct.mean())
    return ValidationResult(NetworkStateMatrix(ratios, task), error, correct, n_forward)

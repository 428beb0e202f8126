"""Group-proposing policy trained with REINFORCE.

The network maps the grouped state (2 numbers per group) through a 16-unit
tanh layer to a softmax over groups.  One episode yields one reward shared by
all sampled actions of an episode; with single-step episodes the discounted return is
just that reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RejectedInput
from .nncore import ParamStore, adam_step, glorot_uniform, load_checkpoint, make_rng, save_checkpoint, softmax

MODES = ("learned", "uniform", "inverse")


@dataclass(frozen=True)
class ActionSample:
    group: int
    log_prob: float
    mode: str


@dataclass
class UpdateDiagnostics:
    advantage: float
    baseline_before: float
    baseline_after: float
    entropy: float
    probs_before: np.ndarray
    probs_after: np.ndarray


class PolicyParams:
    """Two-layer policy network plus its reward baseline and optimizer state."""

    def __init__(self, n_groups: int, hidden: int = 16, lr: float = 0.01, gamma: float = 1.0,
                 rho: float = 0.9, beta: float = 0.01, seed: int | None = 0):
        if n_groups < 1:
            raise RejectedInput("policy needs at least one group")
        self.n_groups, self.hidden = n_groups, hidden
        self.lr, self.gamma, self.rho, self.beta = lr, gamma, rho, beta
        self.baseline = 0.0
        self.n_updates = 0
        self.store = ParamStore()
        rng = make_rng(seed) if seed is not None else None
        d = 2 * n_groups
        self.store.add("W1", glorot_uniform(rng, d, hidden) if rng is not None else np.zeros((d, hidden)))
        self.store.add("b1", np.zeros(hidden))
        self.store.add("W2", glorot_uniform(rng, hidden, n_groups) if rng is not None else np.zeros((hidden, n_groups)))
        self.store.add("b2", np.zeros(n_groups))

    @property
    def input_dim(self) -> int:
        return 2 * self.n_groups

    def tensors(self) -> dict[str, np.ndarray]:
        out = dict(self.store.params)
        out["baseline"] = np.asarray([self.baseline])
        return out

    def save(self, path):
        save_checkpoint(path, self.tensors())

    def load(self, path):
        t = load_checkpoint(path)
        self.baseline = float(t.pop("baseline")[0])
        self.store.load_state_dict(t)


def _as_vector(params: PolicyParams, s_hat) -> np.ndarray:
    x = s_hat.vector() if hasattr(s_hat, "vector") else np.asarray(s_hat, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise RejectedInput(f"policy expects a grouped state of width {params.input_dim}, got {x.shape}")
    return x


def _forward(params: PolicyParams, x: np.ndarray):
    st = params.store
    h = np.tanh(x @ st["W1"] + st["b1"])
    z = h @ st["W2"] + st["b2"]
    return softmax(z), h


def policy_forward(params: PolicyParams, s_hat) -> np.ndarray:
    return _forward(params, _as_vector(params, s_hat))[0]


def entropy(p: np.ndarray) -> float:
    p = np.asarray(p)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


def sampling_distribution(params: PolicyParams, s_hat, mode: str) -> np.ndarray:
    if mode == "learned":
        return policy_forward(params, s_hat)
    if mode == "uniform":
        return np.full(params.n_groups, 1.0 / params.n_groups)
    if mode == "inverse":
        pi = policy_forward(params, s_hat)
        if params.n_groups == 1:
            return pi
        q = 1.0 - pi
        return q / q.sum()
    raise RejectedInput(f"unknown sampling mode {mode!r}; expected one of {MODES}")


def sample_actions(params: PolicyParams, s_hat, n_actions: int, mode: str, rng: np.random.Generator) -> list[ActionSample]:
    if n_actions < 0:
        raise RejectedInput("n_actions must be non-negative")
    dist = sampling_distribution(params, s_hat, mode)
    if n_actions == 0:
        return []
    # inverse-CDF draws keep the stream layout independent of the distribution
    cdf = np.cumsum(dist)
    cdf[-1] = 1.0
    picks = np.searchsorted(cdf, rng.random(n_actions), side="right")
    picks = np.minimum(picks, params.n_groups - 1)
    logp = np.log(dist)
    return [ActionSample(int(a), float(logp[a]), mode) for a in picks]


def objective_and_grads(params: PolicyParams, x: np.ndarray, groups, advantage: float):
    """``J = sum_k A log pi(a_k|x) + beta H(pi(.|x))`` and dJ/dtheta."""
    st = params.store
    p, h = _forward(params, x)
    counts = np.bincount(np.asarray(groups, dtype=np.int64), minlength=params.n_groups).astype(np.float64)
    logp = np.log(p)
    H = float(-(p * logp).sum())
    J = advantage * float(counts @ logp) + params.beta * H
    dz = advantage * (counts - counts.sum() * p) - params.beta * p * (logp + H)
    grads = {"W2": np.outer(h, dz), "b2": dz}
    dh = st["W2"] @ dz
    da = dh * (1.0 - h * h)
    grads["W1"] = np.outer(x, da)
    grads["b1"] = da
    return J, grads


def reinforce_update(params: PolicyParams, actions: list[ActionSample], reward: float, s_hat) -> UpdateDiagnostics:
    """One Adam ascent step on the advantage-weighted log-likelihood plus entropy bonus."""
    bad = [a.mode for a in actions if a.mode != "learned"]
    if bad:
        raise RejectedInput(f"reinforce_update needs learned-mode actions, got {sorted(set(bad))}")
    x = _as_vector(params, s_hat)
    p_before = _forward(params, x)[0]
    advantage = float(reward) - params.baseline
    b_before = params.baseline
    _, grads = objective_and_grads(params, x, [a.group for a in actions], advantage)
    for k, g in grads.items():
        params.store.grads[k][...] = -g  # optimizer minimises
    if advantage == 0.0 and params.beta == 0.0:
        params.store.zero_grad()  # Adam would still move on stale moments
    else:
        adam_step(params.store, params.lr)
    params.baseline = params.rho * params.baseline + (1.0 - params.rho) * float(reward)
    params.n_updates += 1
    p_after = _forward(params, x)[0]
    return UpdateDiagnostics(advantage, b_before, params.baseline, entropy(p_before), p_before, p_after)


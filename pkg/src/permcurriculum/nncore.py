"""A small deterministic network engine with hand-written backward passes.

Everything is float64.  Layers keep no per-call state: ``forward`` returns
an opaque cache that the matching ``backward`` consumes, so one layer can be
applied to several inputs (tiles, frames) within a single step.  Parameter
gradients accumulate into the owning :class:`ParamStore`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NonFiniteGradient, ParseError, RejectedInput

PROB_FLOOR = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; same seed and draw sequence give the same stream."""
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def derive_seed(master: int, *keys) -> int:
    """Keyed 64-bit sub-seed so that independent components never share a stream."""
    h = hashlib.blake2b(digest_size=8, key=b"permcurriculum")
    h.update(str(int(master)).encode())
    for k in keys:
        h.update(b"\x1f" + str(k).encode())
    return int.from_bytes(h.digest(), "little")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class ParamStore:
    """Named parameter tensors with mirrored gradient buffers."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.slots: dict[str, np.ndarray] = {}  # optimizer moments
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise RejectedInput(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_state_dict(self, tensors: dict[str, np.ndarray], strict: bool = True):
        missing = [k for k in self.params if k not in tensors]
        if strict and (missing or set(tensors) - set(self.params)):
            extra = sorted(set(tensors) - set(self.params))
            raise RejectedInput(f"checkpoint mismatch: missing {missing}, unexpected {extra}")
        for k, v in tensors.items():
            if k not in self.params:
                continue
            if v.shape != self.params[k].shape:
                raise RejectedInput(f"shape mismatch for {k!r}: {v.shape} vs {self.params[k].shape}")
            self.params[k][...] = v

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for k, v in self.params.items():
            other.add(k, v)
        other.slots = {k: v.copy() for k, v in self.slots.items()}
        other.step = self.step
        return other

    def assert_finite(self):
        for k, v in self.params.items():
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"parameter {k!r} became non-finite after update {self.step}")


# ---------------------------------------------------------------- activations

def _act(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "linear":
        return z
    raise RejectedInput(f"unknown activation {kind!r}")


def _act_grad(kind: str, z: np.ndarray, a: np.ndarray, da: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return da * (z > 0)
    if kind == "tanh":
        return da * (1.0 - a * a)
    return da


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Dense:
    """``y = act(x @ W + b)`` on row-major batches."""

    def __init__(self, store: ParamStore, name: str, fan_in: int, fan_out: int,
                 rng: np.random.Generator | None, activation: str = "relu"):
        self.store, self.name, self.activation = store, name, activation
        self.fan_in, self.fan_out = fan_in, fan_out
        w = glorot_uniform(rng, fan_in, fan_out) if rng is not None else np.zeros((fan_in, fan_out))
        store.add(f"{name}.W", w)
        store.add(f"{name}.b", np.zeros(fan_out))

    @property
    def W(self):
        return self.store[f"{self.name}.W"]

    @property
    def b(self):
        return self.store[f"{self.name}.b"]

    def forward(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.fan_in:
            raise RejectedInput(f"{self.name}: expected (*, {self.fan_in}) input, got {x.shape}")
        z = x @ self.W + self.b
        a = _act(self.activation, z)
        return a, (x, z, a)

    def backward(self, cache, da: np.ndarray) -> np.ndarray:
        x, z, a = cache
        if da.shape != a.shape:
            raise RejectedInput(f"{self.name}: upstream gradient {da.shape} vs output {a.shape}")
        dz = _act_grad(self.activation, z, a, da)
        self.store.grads[f"{self.name}.W"] += x.T @ dz
        self.store.grads[f"{self.name}.b"] += dz.sum(axis=0)
        return dz @ self.W.T


def dense_forward(layer: Dense, x):
    return layer.forward(x)


def dense_backward(layer: Dense, cache, upstream):
    return layer.backward(cache, upstream)


class LSTM:
    """Single-layer LSTM, zero initial state, gates packed as [input, forget, cell, output]."""

    def __init__(self, store: ParamStore, name: str, input_dim: int, hidden_dim: int,
                 rng: np.random.Generator | None):
        self.store, self.name = store, name
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        n = input_dim + hidden_dim
        if rng is not None:
            w = glorot_uniform(rng, n, 4 * hidden_dim)
        else:
            w = np.zeros((n, 4 * hidden_dim))
        store.add(f"{name}.W", w)
        store.add(f"{name}.b", np.zeros(4 * hidden_dim))

    def forward(self, xs):
        """``xs``: sequence of (B, input_dim) arrays, or a (steps, B, input_dim) array."""
        if len(xs) == 0:
            raise RejectedInput(f"{self.name}: empty input sequence")
        W, b, H = self.store[f"{self.name}.W"], self.store[f"{self.name}.b"], self.hidden_dim
        B = xs[0].shape[0]
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        steps = []
        for x in xs:
            if x.ndim != 2 or x.shape != (B, self.input_dim):
                raise RejectedInput(f"{self.name}: expected ({B}, {self.input_dim}) step, got {x.shape}")
            xh = np.concatenate([x, h], axis=1)
            z = xh @ W + b
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = sigmoid(z[:, 3 * H:])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            steps.append((xh, i, f, g, o, c_prev, tc))
        return h, steps

    def backward(self, steps, dh: np.ndarray) -> list[np.ndarray]:
        W, H = self.store[f"{self.name}.W"], self.hidden_dim
        dW = self.store.grads[f"{self.name}.W"]
        db = self.store.grads[f"{self.name}.b"]
        dc = np.zeros_like(dh)
        dxs = [None] * len(steps)
        for t in range(len(steps) - 1, -1, -1):
            xh, i, f, g, o, c_prev, tc = steps[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1)
            dW += xh.T @ dz
            db += dz.sum(axis=0)
            dxh = dz @ W.T
            dxs[t] = dxh[:, :self.input_dim]
            dh = dxh[:, self.input_dim:]
            dc = dc * f
        return dxs


def lstm_sequence_forward(layer: LSTM, inputs):
    return layer.forward(inputs)


def lstm_sequence_backward(layer: LSTM, cache, dh):
    return layer.backward(cache, dh)


# ------------------------------------------------------------ softmax / loss

def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, target):
    """Loss ``-ln p[target]`` and its gradient with respect to the logits.

    For a batch (2-D ``probs``, 1-D ``target``) the loss and gradient are
    averaged over rows.
    """
    p = np.asarray(probs, dtype=np.float64)
    t = np.atleast_1d(np.asarray(target))
    rows = p.reshape(-1, p.shape[-1])
    if len(t) != len(rows):
        raise RejectedInput(f"{len(t)} targets for {len(rows)} probability rows")
    if np.any(t < 0) or np.any(t >= rows.shape[1]):
        raise RejectedInput(f"target out of range 0..{rows.shape[1] - 1}")
    picked = rows[np.arange(len(rows)), t]
    losses = -np.log(np.maximum(picked, PROB_FLOOR))
    grad = rows.copy()
    grad[np.arange(len(rows)), t] -= 1.0
    if p.ndim == 1:
        return float(losses[0]), grad[0]
    return float(losses.mean()), grad / len(rows)


# --------------------------------------------------------------- optimizers

def _check_grads(store: ParamStore):
    for k, g in store.grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(k, store.step + 1)


def sgd_step(store: ParamStore, lr: float, only=None):
    """Plain SGD.  ``only`` restricts the update to parameters with those name prefixes."""
    _check_grads(store)
    for k, w in store.params.items():
        if only is None or k.startswith(tuple(only)):
            w -= lr * store.grads[k]
    store.zero_grad()
    store.step += 1
    store.assert_finite()


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    _check_grads(store)
    store.step += 1
    t = store.step
    for k, w in store.params.items():
        g = store.grads[k]
        m = store.slots.setdefault(f"m.{k}", np.zeros_like(w))
        v = store.slots.setdefault(f"v.{k}", np.zeros_like(w))
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        w -= lr * m_hat / (np.sqrt(v_hat) + eps)
    store.zero_grad()
    store.assert_finite()


# ------------------------------------------------------------- grad checking

@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.max_rel_error.values())

    def failed_tensors(self) -> list[str]:
        return [k for k, e in self.max_rel_error.items() if not e < self.tolerance]

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def relative_error(a, b, floor: float = 1e-10):
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def grad_check(loss_fn: Callable[[], float], store: ParamStore, analytic: dict[str, np.ndarray],
               tolerance: float, step: float = 1e-5, max_coords: int = 200, seed: int = 0,
               names=None) -> GradCheckReport:
    """Compare ``analytic`` gradients with central differences of ``loss_fn``.

    ``loss_fn`` must read parameters from ``store`` and be deterministic.  At
    most ``max_coords`` seeded coordinates per tensor are probed.
    """
    rng = make_rng(seed)
    errors = {}
    for name in names or store.names():
        w = store.params[name]
        flat = w.reshape(-1)
        coords = np.arange(flat.size)
        if flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        ga = np.asarray(analytic[name]).reshape(-1)
        worst = 0.0
        for c in coords:
            old = flat[c]
            flat[c] = old + step
            up = loss_fn()
            flat[c] = old - step
            down = loss_fn()
            flat[c] = old
            num = (up - down) / (2 * step)
            worst = max(worst, float(relative_error(ga[c], num)))
        errors[name] = worst
    return GradCheckReport(errors, tolerance)


# --------------------------------------------------------------- checkpoints

def save_checkpoint(path, tensors: dict[str, np.ndarray]):
    """JSON header line ``{name: shape}`` then little-endian float64 payload in header order."""
    header = json.dumps({k: list(np.shape(v)) for k, v in tensors.items()}, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise ParseError(f"{path}: missing checkpoint header line")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: malformed checkpoint header: {exc}") from exc
    if not isinstance(header, dict):
        raise ParseError(f"{path}: checkpoint header must be an object")
    out, offset = {}, nl + 1
    for name, shape in header.items():
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(data):
            raise ParseError(f"{path}: payload truncated at tensor {name!r} "
                             f"(need {offset + nbytes} bytes, have {len(data)})")
        out[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise ParseError(f"{path}: {len(data) - offset} trailing bytes after payload")
    return out


def pack_scalars(**values) -> dict[str, np.ndarray]:
    return {k: np.asarray([float(v)]) for k, v in values.items()}


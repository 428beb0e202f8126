"""Two-headed ordering network on top of a shared part encoder.

Spatial head: encoder -> fc6 per tile -> concatenation in tile order -> fc7
-> classifier.  Temporal head: encoder -> fc6 per frame -> LSTM -> classifier.
Both heads read the same ``encoder.*`` tensors.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import RejectedInput
from .nncore import LSTM, Dense, ParamStore, cross_entropy, load_checkpoint, make_rng, save_checkpoint, sgd_step, softmax

SPATIAL_PREFIXES = ("spatial.",)
TEMPORAL_PREFIXES = ("temporal.",)


@dataclass(frozen=True)
class ModelConfig:
    tile_input_dim: int = 64
    frame_input_dim: int = 64
    n_tiles: int = 4
    n_frames: int = 4
    encoder_dim: int = 64
    fc6_dim: int = 64
    fc7_dim: int = 128
    lstm_hidden_dim: int = 32
    n_perm_spatial: int = 24
    n_perm_temporal: int = 24

    def problems(self) -> list[str]:
        out = [f"model.{k} must be >= 1, got {v}" for k, v in asdict(self).items() if v < 1]
        if self.tile_input_dim != self.frame_input_dim:
            out.append("model.tile_input_dim and model.frame_input_dim must match (shared encoder)")
        return out


class OrderingModel:
    def __init__(self, config: ModelConfig, seed: int | None = 0):
        problems = config.problems()
        if problems:
            raise RejectedInput("; ".join(problems))
        self.config = c = config
        self.store = ParamStore()
        rng = make_rng(seed) if seed is not None else None
        self.encoder = Dense(self.store, "encoder", c.tile_input_dim, c.encoder_dim, rng)
        self.s_fc6 = Dense(self.store, "spatial.fc6", c.encoder_dim, c.fc6_dim, rng)
        self.s_fc7 = Dense(self.store, "spatial.fc7", c.n_tiles * c.fc6_dim, c.fc7_dim, rng)
        self.s_cls = Dense(self.store, "spatial.cls", c.fc7_dim, c.n_perm_spatial, rng, "linear")
        self.t_fc6 = Dense(self.store, "temporal.fc6", c.encoder_dim, c.fc6_dim, rng)
        self.lstm = LSTM(self.store, "temporal.lstm", c.fc6_dim, c.lstm_hidden_dim, rng)
        self.t_cls = Dense(self.store, "temporal.cls", c.lstm_hidden_dim, c.n_perm_temporal, rng, "linear")

    # ------------------------------------------------------------- forward

    def _check(self, x, n_parts, what):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != n_parts or x.shape[2] != self.config.tile_input_dim:
            raise RejectedInput(f"{what} batch must be (B, {n_parts}, {self.config.tile_input_dim}), got {x.shape}")
        return x

    def _spatial(self, x):
        x = self._check(x, self.config.n_tiles, "spatial")
        B, n, d = x.shape
        e, c_enc = self.encoder.forward(x.reshape(B * n, d))
        f6, c6 = self.s_fc6.forward(e)
        f7, c7 = self.s_fc7.forward(f6.reshape(B, n * self.config.fc6_dim))
        logits, cc = self.s_cls.forward(f7)
        return logits, (B, n, c_enc, c6, c7, cc)

    def _temporal(self, x):
        x = self._check(x, self.config.n_frames, "temporal")
        B, u, d = x.shape
        # time-major so each LSTM step sees one frame of every clip
        flat = x.transpose(1, 0, 2).reshape(u * B, d)
        e, c_enc = self.encoder.forward(flat)
        f6, c6 = self.t_fc6.forward(e)
        h, cl = self.lstm.forward(list(f6.reshape(u, B, -1)))
        logits, cc = self.t_cls.forward(h)
        return logits, (B, u, c_enc, c6, cl, cc)

    def forward_spatial(self, x) -> np.ndarray:
        return self._spatial(x)[0]

    def forward_temporal(self, x) -> np.ndarray:
        return self._temporal(x)[0]

    def forward(self, task: str, x) -> np.ndarray:
        if task == "spatial":
            return self.forward_spatial(x)
        if task == "temporal":
            return self.forward_temporal(x)
        raise RejectedInput(f"unknown task {task!r}")

    # ------------------------------------------------------------ backward

    def _backward_spatial(self, cache, dlogits):
        B, n, c_enc, c6, c7, cc = cache
        d7 = self.s_cls.backward(cc, dlogits)
        d6 = self.s_fc7.backward(c7, d7)
        de = self.s_fc6.backward(c6, d6.reshape(B * n, -1))
        self.encoder.backward(c_enc, de)

    def _backward_temporal(self, cache, dlogits):
        B, u, c_enc, c6, cl, cc = cache
        dh = self.t_cls.backward(cc, dlogits)
        dsteps = self.lstm.backward(cl, dh)
        de = self.t_fc6.backward(c6, np.concatenate(dsteps, axis=0))
        self.encoder.backward(c_enc, de)

    def accumulate(self, task: str, x, labels) -> float:
        """Add the gradient of the mean cross-entropy for ``task`` to the store; return the loss."""
        if task == "spatial":
            logits, cache = self._spatial(x)
        elif task == "temporal":
            logits, cache = self._temporal(x)
        else:
            raise RejectedInput(f"unknown task {task!r}")
        loss, dlogits = cross_entropy(softmax(logits), np.asarray(labels))
        (self._backward_spatial if task == "spatial" else self._backward_temporal)(cache, dlogits)
        return loss

    def loss(self, task: str, x, labels) -> float:
        return cross_entropy(softmax(self.forward(task, x)), np.asarray(labels))[0]

    def train_step_dual(self, spatial=None, temporal=None, lr: float = 0.05):
        """One SGD step on the summed losses of the given (inputs, labels) batches.

        Either batch may be None; a missing task contributes neither loss nor
        gradient, so its head parameters stay untouched.
        """
        losses = {}
        if spatial is not None:
            losses["spatial"] = self.accumulate("spatial", *spatial)
        if temporal is not None:
            losses["temporal"] = self.accumulate("temporal", *temporal)
        sgd_step(self.store, lr)
        return losses.get("spatial"), losses.get("temporal")

    # ------------------------------------------------------------ features

    def extract_features(self, sample) -> np.ndarray:
        """Shared-encoder output mean-pooled over parts; accepts one sample or a batch."""
        x = np.asarray(sample, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.config.tile_input_dim:
            raise RejectedInput(f"expected parts of width {self.config.tile_input_dim}, got shape {x.shape}")
        B, n, d = x.shape
        e, _ = self.encoder.forward(x.reshape(B * n, d))
        feats = e.reshape(B, n, -1).mean(axis=1)
        return feats[0] if single else feats

    # --------------------------------------------------------- persistence

    def save(self, path):
        save_checkpoint(path, self.store.params)

    def load(self, path):
        self.store.load_state_dict(load_checkpoint(path))

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray], n_frames: int = 4) -> "OrderingModel":
        """Rebuild a model whose dimensions are read off the tensor shapes."""
        try:
            d_in, enc = tensors["encoder.W"].shape
            fc6 = tensors["spatial.fc6.W"].shape[1]
            n_tiles = tensors["spatial.fc7.W"].shape[0] // fc6
            cfg = ModelConfig(
                tile_input_dim=d_in, frame_input_dim=d_in, n_tiles=n_tiles, n_frames=n_frames,
                encoder_dim=enc, fc6_dim=fc6, fc7_dim=tensors["spatial.fc7.W"].shape[1],
                lstm_hidden_dim=tensors["temporal.cls.W"].shape[0],
                n_perm_spatial=tensors["spatial.cls.W"].shape[1],
                n_perm_temporal=tensors["temporal.cls.W"].shape[1],
            )
        except KeyError as exc:
            raise RejectedInput(f"checkpoint lacks tensor {exc}") from exc
        model = cls(cfg, seed=None)
        model.store.load_state_dict(tensors)
        return model

    @classmethod
    def from_checkpoint(cls, path, n_frames: int = 4) -> "OrderingModel":
        return cls.from_tensors(load_checkpoint(path), n_frames=n_frames)

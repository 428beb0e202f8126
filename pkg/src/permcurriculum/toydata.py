"""Procedural toy images (cut into tiles) and clips (sequences of frames).

Stored samples are raw values in [0, 1].  Per-part normalisation (zero mean,
unit max-abs) happens when batches are assembled, after jitter.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, RejectedInput, ValidationError
from .nncore import make_rng
from .permset import PermutationSet

SPLITS = ("train", "val", "test")
JITTER = 0.05


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "spatial"  # "spatial" | "temporal"
    m: int = 2  # grid side, spatial only
    u: int = 4  # frames per clip, temporal only
    extent: int = 8  # tiles/frames are extent x extent pixels
    n_classes: int = 8
    n_train: int = 2048
    n_val: int = 100
    n_test: int = 512
    seed: int = 0

    @property
    def n_parts(self) -> int:
        return self.m * self.m if self.kind == "spatial" else self.u

    @property
    def part_dim(self) -> int:
        return self.extent * self.extent

    def counts(self) -> dict[str, int]:
        return {"train": self.n_train, "val": self.n_val, "test": self.n_test}

    def problems(self) -> list[str]:
        out = []
        if self.kind not in ("spatial", "temporal"):
            out.append(f"dataset kind must be spatial or temporal, got {self.kind!r}")
        elif self.kind == "spatial" and self.m < 2:
            out.append(f"spatial grid side m must be >= 2, got {self.m}")
        elif self.kind == "temporal" and self.u < 2:
            out.append(f"frames per clip u must be >= 2, got {self.u}")
        for name, c in self.counts().items():
            if c < 1:
                out.append(f"{self.kind} {name} count must be >= 1, got {c}")
        if self.extent < 2:
            out.append(f"extent must be >= 2, got {self.extent}")
        if self.n_classes < 1:
            out.append(f"n_classes must be >= 1, got {self.n_classes}")
        return out


@dataclass
class Dataset:
    """All splits of one dataset, concatenated in train/val/test order."""

    spec: DatasetSpec
    parts: np.ndarray  # (N, n_parts, part_dim) float32
    labels: np.ndarray  # (N,) uint32, generative class

    def _slice(self, split: str) -> slice:
        counts = self.spec.counts()
        start = 0
        for name in SPLITS:
            if name == split:
                return slice(start, start + counts[name])
            start += counts[name]
        raise RejectedInput(f"unknown split {split!r}")

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        s = self._slice(name)
        return self.parts[s], self.labels[s]

    def __eq__(self, other):
        return (isinstance(other, Dataset) and self.spec == other.spec
                and np.array_equal(self.parts, other.parts) and np.array_equal(self.labels, other.labels))


def _balanced_labels(count: int, n_classes: int, rng) -> np.ndarray:
    return rng.permutation(np.arange(count) % n_classes).astype(np.uint32)


def _render_image(cls: int, spec: DatasetSpec, rng) -> np.ndarray:
    side = spec.m * spec.extent
    yy, xx = np.mgrid[0:side, 0:side] / (side - 1)
    theta = 2 * np.pi * cls / spec.n_classes + rng.normal(0, 0.15)
    img = 0.6 * (np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5))
    # class-signed central bump: its curvature is what places a tile in the grid
    cx, cy = 0.5 + rng.uniform(-0.25, 0.25, size=2)
    width = 0.18 + 0.12 * (cls % 3)
    sign = 1.0 if cls % 2 == 0 else -1.0
    img += sign * rng.uniform(0.35, 0.7) * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * width ** 2))
    for _ in range(3):
        bx, by = rng.uniform(0, 1, size=2)
        img += rng.uniform(-0.5, 0.5) * np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2 * 0.08 ** 2))
    img += rng.normal(0, 0.04, size=img.shape)
    img = (img - img.min()) / (img.max() - img.min())
    e = spec.extent
    tiles = img.reshape(spec.m, e, spec.m, e).transpose(0, 2, 1, 3).reshape(spec.m * spec.m, e * e)
    return tiles


def _render_clip(cls: int, spec: DatasetSpec, rng) -> np.ndarray:
    e = spec.extent
    yy, xx = np.mgrid[0:e, 0:e] / (e - 1)
    angle = 2 * np.pi * cls / spec.n_classes + rng.normal(0, 0.1)
    speed = 0.5 / max(spec.u - 1, 1) * rng.uniform(0.8, 1.2)
    v = speed * np.array([np.cos(angle), np.sin(angle)])
    p0 = 0.5 - v * (spec.u - 1) / 2 + rng.uniform(-0.1, 0.1, size=2)
    sigma0 = 0.12 + 0.04 * (cls % 2)
    bg_theta = rng.uniform(0, 2 * np.pi)
    bg = 0.15 * (np.cos(bg_theta) * (xx - 0.5) + np.sin(bg_theta) * (yy - 0.5)) + 0.3
    frames = []
    for t in range(spec.u):
        px, py = p0 + v * t
        sigma = sigma0 * (1 + 0.25 * t)  # growth gives the clip an arrow of time
        blob = (1.0 - 0.08 * t) * np.exp(-((xx - px) ** 2 + (yy - py) ** 2) / (2 * sigma ** 2))
        frame = bg + 0.6 * blob + rng.normal(0, 0.02, size=blob.shape)
        frames.append(np.clip(frame, 0.0, 1.0).reshape(-1))
    return np.stack(frames)


def _generate(spec: DatasetSpec, render) -> Dataset:
    problems = spec.problems()
    if problems:
        raise RejectedInput("; ".join(problems))
    rng = make_rng(spec.seed)
    parts, labels = [], []
    for split in SPLITS:
        ys = _balanced_labels(spec.counts()[split], spec.n_classes, rng)
        labels.append(ys)
        parts.extend(render(int(c), spec, rng) for c in ys)
    return Dataset(spec, np.asarray(parts, dtype=np.float32), np.concatenate(labels))


def gen_spatial_dataset(spec: DatasetSpec) -> Dataset:
    if spec.kind != "spatial":
        raise RejectedInput("gen_spatial_dataset needs kind='spatial'")
    return _generate(spec, _render_image)


def gen_temporal_dataset(spec: DatasetSpec) -> Dataset:
    if spec.kind != "temporal":
        raise RejectedInput("gen_temporal_dataset needs kind='temporal'")
    return _generate(spec, _render_clip)


def generate(spec: DatasetSpec) -> Dataset:
    return gen_spatial_dataset(spec) if spec.kind == "spatial" else gen_temporal_dataset(spec)


def normalize_parts(x: np.ndarray) -> np.ndarray:
    """Zero mean and unit max-abs per part (last axis).

    A constant part maps to zeros; rounding residue below ``1e-12`` is not
    blown up to unit scale.
    """
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean(axis=-1, keepdims=True)
    scale = np.abs(x).max(axis=-1, keepdims=True)
    flat = scale <= 1e-12
    return np.where(flat, 0.0, x / np.where(flat, 1.0, scale))


def make_permuted_batch(parts: np.ndarray, perm_set: PermutationSet, assignments,
                        rng: np.random.Generator | None = None, jitter: float = JITTER):
    """Shuffle each assigned sample by its permutation.

    ``assignments`` is a sequence of (sample id, permutation id) pairs.  With
    ``rng`` given, uniform noise of amplitude ``jitter`` is added per pixel
    before normalisation.  Returns (inputs (B, n_parts, part_dim), labels).
    """
    pairs = np.asarray(assignments, dtype=np.int64).reshape(-1, 2)
    sid, pid = pairs[:, 0], pairs[:, 1]
    if len(pairs) and (sid.min() < 0 or sid.max() >= len(parts)):
        raise RejectedInput(f"sample id out of range 0..{len(parts) - 1}")
    if len(pairs) and (pid.min() < 0 or pid.max() >= len(perm_set)):
        raise RejectedInput(f"permutation id out of range 0..{len(perm_set) - 1}")
    if parts.shape[1] != perm_set.n:
        raise RejectedInput(f"samples have {parts.shape[1]} parts, permutations act on {perm_set.n}")
    order = perm_set.table[pid]  # (B, n_parts)
    x = np.asarray(parts, dtype=np.float64)[sid[:, None], order]
    if rng is not None and jitter > 0:
        x = x + rng.uniform(-jitter, jitter, size=x.shape)
    return normalize_parts(x), pid.copy()


# ----------------------------------------------------------------------- I/O

def save_dataset(ds: Dataset, path) -> None:
    """One JSON header line, float32 LE payload, then uint32 LE labels."""
    header = {
        "spec": asdict(ds.spec),
        "counts": ds.spec.counts(),
        "shape": list(ds.parts.shape),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(ds.parts, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype="<u4").tobytes())


def load_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise ParseError(f"{path}: no header line terminator found (byte offset {len(data)})")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
        spec = DatasetSpec(**header["spec"])
        shape = tuple(int(s) for s in header["shape"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: malformed header at byte offset 0: {exc}") from exc
    n = sum(spec.counts().values())
    if len(shape) != 3 or shape[0] != n:
        raise ValidationError(f"{path}: header shape {shape} disagrees with split counts totalling {n}")
    if shape[1] != spec.n_parts:
        raise ValidationError(f"{path}: header declares {spec.n_parts} parts per sample, payload stores {shape[1]}")
    if shape[2] != spec.part_dim:
        raise ValidationError(f"{path}: header declares part size {spec.part_dim}, payload stores {shape[2]}")
    start = nl + 1
    n_float = shape[0] * shape[1] * shape[2]
    expected = 4 * n_float + 4 * shape[0]
    actual = len(data) - start
    if actual != expected:
        raise ParseError(f"{path}: payload starting at byte offset {start} holds {actual} bytes, "
                         f"expected {expected}")
    parts = np.frombuffer(data, dtype="<f4", count=n_float, offset=start).reshape(shape).astype(np.float32)
    labels = np.frombuffer(data, dtype="<u4", count=shape[0], offset=start + 4 * n_float).astype(np.uint32)
    return Dataset(spec, parts, labels)

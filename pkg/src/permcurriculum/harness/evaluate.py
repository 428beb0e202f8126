"""Cosine nearest-neighbour retrieval on encoder features."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import RejectedInput
from ..orderingnet import OrderingModel
from ..toydata import Dataset, normalize_parts

TOP_K = (1, 5, 10, 20, 50)


@dataclass
class RetrievalReport:
    accuracy: dict[int, float]
    distance: str
    query_split: str
    gallery_split: str
    n_query: int
    n_gallery: int

    def to_json(self) -> dict:
        out = asdict(self)
        out["accuracy"] = {str(k): v for k, v in self.accuracy.items()}
        return out


def cosine_topk_accuracy(query, query_labels, gallery, gallery_labels, ks=TOP_K) -> dict[int, float]:
    """Fraction of queries whose class appears among the k most cosine-similar
    gallery items.  Equal similarities keep gallery order."""
    q = np.asarray(query, dtype=np.float64)
    g = np.asarray(gallery, dtype=np.float64)
    if len(q) == 0 or len(g) == 0:
        raise RejectedInput("retrieval needs at least one query and one gallery item")
    qn = np.linalg.norm(q, axis=1, keepdims=True)
    gn = np.linalg.norm(g, axis=1, keepdims=True)
    sim = (q / np.where(qn > 0, qn, 1.0)) @ (g / np.where(gn > 0, gn, 1.0)).T
    kmax = min(max(ks), len(g))
    ranked = np.argsort(-sim, axis=1, kind="stable")[:, :kmax]
    hits = np.asarray(gallery_labels)[ranked] == np.asarray(query_labels)[:, None]
    first = np.where(hits.any(axis=1), hits.argmax(axis=1), kmax)
    return {k: float(np.mean(first < min(k, kmax))) for k in ks}


def eval_nn(model: OrderingModel, dataset: Dataset, query_split: str = "test",
            gallery_split: str = "train", ks=TOP_K) -> RetrievalReport:
    if dataset.parts.shape[2] != model.config.tile_input_dim:
        raise RejectedInput(f"dataset parts have {dataset.parts.shape[2]} values, the checkpoint's encoder "
                            f"expects {model.config.tile_input_dim}")
    qx, qy = dataset.split(query_split)
    gx, gy = dataset.split(gallery_split)
    qf = model.extract_features(normalize_parts(qx))
    gf = model.extract_features(normalize_parts(gx))
    acc = cosine_topk_accuracy(qf, qy, gf, gy, ks)
    return RetrievalReport(acc, "cosine", query_split, gallery_split, len(qx), len(gx))

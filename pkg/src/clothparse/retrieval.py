"""Outfit-style retrieval on the encoder's 256-d hidden representation.

Plain Euclidean distance over a linear-scan index; no vector normalization.
The index persists as an HMT1 container (one descriptor per channel slice)
with a JSON sidecar carrying the ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import load_heatmaps, save_heatmaps
from .gating import HIDDEN_DIM, ToyModelParams, encoder_forward, extract_features


def extract_descriptor(image: np.ndarray, params: ToyModelParams) -> np.ndarray:
    """256-d post-activation hidden vector of the outfit encoder."""
    _, hidden = encoder_forward(extract_features(image), params)
    return hidden


@dataclass
class DescriptorIndex:
    ids: list[str]
    vectors: np.ndarray  # (N, 256)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != HIDDEN_DIM:
            raise ValueError(f"vectors must be (N, {HIDDEN_DIM}), "
                             f"got {self.vectors.shape}")
        if len(self.ids) != len(self.vectors):
            raise ValueError(f"{len(self.ids)} ids for {len(self.vectors)} vectors")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("index ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def build(cls, entries) -> "DescriptorIndex":
        """entries: iterable of (id, vector)."""
        ids, vecs = [], []
        for id_, v in entries:
            ids.append(str(id_))
            vecs.append(np.asarray(v, dtype=np.float64))
        return cls(ids, np.vstack(vecs))

    def save(self, path) -> None:
        path = Path(path)
        save_heatmaps(path, self.vectors.astype(np.float32)[:, None, :])
        with open(_sidecar(path), "w", encoding="utf-8") as fh:
            json.dump({"ids": self.ids}, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DescriptorIndex":
        path = Path(path)
        stack = load_heatmaps(path)
        with open(_sidecar(path), "r", encoding="utf-8") as fh:
            ids = json.load(fh)["ids"]
        return cls(list(ids), stack[:, 0, :].astype(np.float64))


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".ids.json")


def query_nearest(query: np.ndarray, index: DescriptorIndex,
                  k: int) -> list[tuple[str, float]]:
    """Ascending Euclidean distance; ties broken by id; min(k, N) results."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise ValueError("index is empty")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.vectors.shape[1],):
        raise ValueError(f"query dimension {query.shape} does not match "
                         f"index dimension {index.vectors.shape[1]}")
    dists = np.sqrt(((index.vectors - query) ** 2).sum(axis=1))
    order = sorted(range(len(index)), key=lambda i: (dists[i], index.ids[i]))
    return [(index.ids[i], float(dists[i])) for i in order[:k]]

"""Fully connected pairwise CRF over pixels.

Potts energy with a bilateral appearance kernel and a spatial smoothness
kernel, mean-field inference, the mean-field free energy, and exhaustive
MAP decoding for tiny instances. Message passing is the exact O(N^2 L)
computation; intended scale is desk-size images (up to ~128x128).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .core import validate_mask, validate_probmaps

UNARY_EPS = 1e-10
# Above this pixel count the full kernel matrix is not materialized.
_DENSE_LIMIT = 4096
_BLOCK = 512
_BRUTE_FORCE_LIMIT = 10 ** 6


@dataclass(frozen=True)
class CrfParams:
    """Kernel weights and scales: w1/w2 >= 0, sigmas > 0."""

    w1: float = 10.0
    w2: float = 10.0
    sigma_position: float = 30.0
    sigma_color: float = 10.0
    sigma_smooth: float = 3.0

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise ValueError("kernel weights must be non-negative")
        for name in ("sigma_position", "sigma_color", "sigma_smooth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    def to_dict(self) -> dict:
        return {"w1": self.w1, "w2": self.w2, "sigma_position": self.sigma_position,
                "sigma_color": self.sigma_color, "sigma_smooth": self.sigma_smooth}

    @classmethod
    def from_dict(cls, data: dict) -> "CrfParams":
        return cls(float(data["w1"]), float(data["w2"]), float(data["sigma_position"]),
                   float(data["sigma_color"]), float(data["sigma_smooth"]))


def load_crf_params(path) -> CrfParams:
    with open(path, "r", encoding="utf-8") as fh:
        return CrfParams.from_dict(json.load(fh))


def save_crf_params(path, params: CrfParams) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass
class CrfInstance:
    """Unary marginals plus the image that supplies positions and colors."""

    unary: np.ndarray  # (L, H, W) probabilities
    image: np.ndarray  # (H, W, 3) RGB
    params: CrfParams

    def __post_init__(self):
        self.unary = validate_probmaps(self.unary)
        self.image = np.asarray(self.image)
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) image, got {self.image.shape}")
        if self.unary.shape[1:] != self.image.shape[:2]:
            raise ValueError(f"unary {self.unary.shape} does not match "
                             f"image {self.image.shape}")

    @property
    def num_labels(self) -> int:
        return self.unary.shape[0]

    @property
    def num_pixels(self) -> int:
        return self.unary.shape[1] * self.unary.shape[2]


def _pixel_features(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-major (N, 2) positions (x, y) and (N, 3) float colors."""
    H, W = image.shape[:2]
    ys, xs = np.mgrid[0:H, 0:W]
    pos = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    col = image.reshape(-1, 3).astype(np.float64)
    return pos, col


def kernel_eval(i: int, j: int, image: np.ndarray, params: CrfParams) -> tuple[float, float]:
    """(appearance, smoothness) kernel values for the flat pixel indices i, j."""
    pos, col = _pixel_features(np.asarray(image))
    dp2 = float(((pos[i] - pos[j]) ** 2).sum())
    dc2 = float(((col[i] - col[j]) ** 2).sum())
    g1 = np.exp(-dp2 / params.sigma_position ** 2 - dc2 / params.sigma_color ** 2)
    g2 = np.exp(-dp2 / params.sigma_smooth ** 2)
    return float(g1), float(g2)


class _PairwiseKernel:
    """K_ij = w1*g1(i,j) + w2*g2(i,j) with zero diagonal.

    Materializes the dense matrix for small instances and streams row
    blocks otherwise; both paths compute identical entries.
    """

    def __init__(self, inst: CrfInstance):
        self.pos, self.col = _pixel_features(inst.image)
        self.params = inst.params
        self.n = len(self.pos)
        self.dense = self._block(0, self.n) if self.n <= _DENSE_LIMIT else None

    def _block(self, lo: int, hi: int) -> np.ndarray:
        p = self.params
        dp2 = ((self.pos[lo:hi, None, :] - self.pos[None, :, :]) ** 2).sum(-1)
        dc2 = ((self.col[lo:hi, None, :] - self.col[None, :, :]) ** 2).sum(-1)
        block = (p.w1 * np.exp(-dp2 / p.sigma_position ** 2 - dc2 / p.sigma_color ** 2)
                 + p.w2 * np.exp(-dp2 / p.sigma_smooth ** 2))
        idx = np.arange(lo, hi)
        block[np.arange(hi - lo), idx] = 0.0
        return block

    def matmul(self, q: np.ndarray) -> np.ndarray:
        """K @ q for (N, L) q."""
        if self.dense is not None:
            return self.dense @ q
        out = np.empty_like(q)
        for lo in range(0, self.n, _BLOCK):
            hi = min(lo + _BLOCK, self.n)
            out[lo:hi] = self._block(lo, hi) @ q
        return out

    def row(self, i: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[i]
        return self._block(i, i + 1)[0]

    def pair_sum(self, q: np.ndarray) -> float:
        """Sum over i<j of K_ij * (1 - Q_i . Q_j)."""
        total = 0.0
        for lo in range(0, self.n, _BLOCK):
            hi = min(lo + _BLOCK, self.n)
            kb = self.dense[lo:hi] if self.dense is not None else self._block(lo, hi)
            agree = q[lo:hi] @ q.T
            total += float((kb * (1.0 - agree)).sum())
        return total / 2.0


def _unary_cost(inst: CrfInstance) -> np.ndarray:
    """(N, L) clamped negative log probabilities."""
    L = inst.num_labels
    q = inst.unary.reshape(L, -1).T
    return -np.log(np.maximum(q, UNARY_EPS))


def energy(labeling: np.ndarray, inst: CrfInstance) -> float:
    """Exact labeling energy; O(N^2), meant for small instances."""
    labeling = validate_mask(labeling, inst.num_labels)
    if labeling.shape != inst.unary.shape[1:]:
        raise ValueError(f"labeling shape {labeling.shape} does not match "
                         f"instance {inst.unary.shape[1:]}")
    x = labeling.ravel().astype(np.int64)
    phi = _unary_cost(inst)
    e = float(phi[np.arange(len(x)), x].sum())
    kern = _PairwiseKernel(inst)
    if kern.dense is not None:
        diff = x[:, None] != x[None, :]
        e += float((kern.dense * diff).sum()) / 2.0
    else:
        for lo in range(0, kern.n, _BLOCK):
            hi = min(lo + _BLOCK, kern.n)
            diff = x[lo:hi, None] != x[None, :]
            e += float((kern._block(lo, hi) * diff).sum()) / 2.0
    return e


def _row_softmax(s: np.ndarray) -> np.ndarray:
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mean_field_infer(inst: CrfInstance, iterations: int = 10,
                     mode: str = "parallel") -> np.ndarray:
    """Mean-field marginals after the given number of sweeps.

    parallel updates every pixel from the previous sweep's Q; sequential
    walks pixels in row-major order using fresh values (each step is the
    exact coordinate minimizer of the free energy, so sequential sweeps
    never increase it). iterations=0 returns the unary marginals.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if mode not in ("parallel", "sequential"):
        raise ValueError(f"mode must be 'parallel' or 'sequential', got {mode!r}")
    L, H, W = inst.unary.shape
    q = inst.unary.reshape(L, -1).T.copy()
    if iterations == 0:
        return q.T.reshape(L, H, W)
    log_p = np.log(np.maximum(q, UNARY_EPS))
    kern = _PairwiseKernel(inst)
    for _ in range(iterations):
        if mode == "parallel":
            q = _row_softmax(log_p + kern.matmul(q))
        else:
            for i in range(kern.n):
                q[i] = _row_softmax(log_p[i] + kern.row(i) @ q)
    return q.T.reshape(L, H, W)


def free_energy(q: np.ndarray, inst: CrfInstance) -> float:
    """Mean-field objective: expected energy minus entropy, 0*ln(0) = 0."""
    q = validate_probmaps(q)
    if q.shape != inst.unary.shape:
        raise ValueError(f"Q shape {q.shape} does not match instance {inst.unary.shape}")
    L = inst.num_labels
    q2 = q.reshape(L, -1).T
    phi = _unary_cost(inst)
    f = float((q2 * phi).sum())
    f += _PairwiseKernel(inst).pair_sum(q2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(q2 > 0, q2 * np.log(np.maximum(q2, 1e-300)), 0.0)
    return f + float(ent.sum())


def brute_force_map(inst: CrfInstance) -> np.ndarray:
    """Exhaustive minimum-energy labeling; ties go to the lexicographically
    smallest assignment. Only valid when L^N <= 10^6."""
    L, H, W = inst.unary.shape
    n = H * W
    if L ** n > _BRUTE_FORCE_LIMIT:
        raise ValueError(f"instance too large for brute force: {L}^{n} labelings")
    phi = _unary_cost(inst)
    kern = _PairwiseKernel(inst)
    labelings = np.array(list(itertools.product(range(L), repeat=n)), dtype=np.int64)
    e = phi[np.arange(n)[None, :], labelings].sum(axis=1)
    for i in range(n):
        for j in range(i + 1, n):
            e += kern.dense[i, j] * (labelings[:, i] != labelings[:, j])
    best = int(np.argmin(e))
    return labelings[best].astype(np.uint8).reshape(H, W)


def decode_map(q: np.ndarray) -> np.ndarray:
    """Per-pixel argmax labeling; ties go to the lowest label index."""
    q = np.asarray(q)
    if q.ndim != 3:
        raise ValueError(f"expected (L, H, W) marginals, got shape {q.shape}")
    return q.argmax(axis=0).astype(np.uint8)


def refine(heatmaps: np.ndarray, image: np.ndarray, params: CrfParams,
           iterations: int = 10, mode: str = "parallel") -> tuple[np.ndarray, np.ndarray]:
    """softmax -> mean field -> decode; returns (marginals, labeling)."""
    from .core import softmax_probmaps

    unary = softmax_probmaps(heatmaps)
    q = mean_field_infer(CrfInstance(unary, image, params), iterations, mode)
    return q, decode_map(q)

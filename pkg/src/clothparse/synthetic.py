"""Synthetic garment scenes for pipeline evaluation.

Two families:

* Outfit scenes with an exclusive pair: a figure either wears a one-piece
  (torso+legs, label "dress") or a separate top and skirt. Dress and skirt
  share the same cloth color on purpose, so per-pixel evidence cannot tell
  them apart and only image-level context can.
* Striped scenes whose ground truth alternates two labels in thin bands,
  for studying the CRF's spatial scales.

Generators are deterministic given a seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Palette, PaletteEntry

LABEL_NAMES = ("background", "top", "dress", "skirt")
BACKGROUND, TOP, DRESS, SKIRT = range(4)
EXCLUSIVE_PAIR = (DRESS, SKIRT)

_BG_COLOR = np.array([120.0, 120.0, 120.0])
_TOP_COLOR = np.array([30.0, 210.0, 50.0])
_CLOTH_COLOR = np.array([200.0, 30.0, 80.0])  # shared by dress and skirt


def synthetic_palette() -> Palette:
    colors = [(0, 0, 0), (60, 170, 80), (180, 40, 70), (120, 40, 180)]
    return Palette(tuple(PaletteEntry(i, n, colors[i])
                         for i, n in enumerate(LABEL_NAMES)))


@dataclass(frozen=True)
class OutfitScene:
    image: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray   # (H, W) uint8
    kind: str          # "dress" | "separates"


def make_outfit_scene(rng: np.random.Generator, size: int = 32,
                      color_noise: float = 6.0) -> OutfitScene:
    H = W = size
    mask = np.zeros((H, W), dtype=np.uint8)
    kind = "dress" if rng.random() < 0.5 else "separates"

    x0 = W // 4 + int(rng.integers(-2, 3))
    x1 = 3 * W // 4 + int(rng.integers(-2, 3))
    top_y0 = H // 4 + int(rng.integers(-1, 2))
    waist = H // 2 + int(rng.integers(-1, 2))
    hem = 7 * H // 8 + int(rng.integers(-1, 2))

    colors = np.empty((H, W, 3))
    colors[:] = _BG_COLOR
    if kind == "dress":
        mask[top_y0:hem, x0:x1] = DRESS
        colors[top_y0:hem, x0:x1] = _CLOTH_COLOR
    else:
        mask[top_y0:waist, x0:x1] = TOP
        colors[top_y0:waist, x0:x1] = _TOP_COLOR
        mask[waist:hem, x0:x1] = SKIRT
        colors[waist:hem, x0:x1] = _CLOTH_COLOR

    noisy = colors + rng.normal(0.0, color_noise, colors.shape)
    image = np.clip(noisy, 0, 255).astype(np.uint8)
    return OutfitScene(image, mask, kind)


def make_outfit_dataset(n_items: int, size: int = 32, seed: int = 0) -> list[OutfitScene]:
    rng = np.random.default_rng(seed)
    return [make_outfit_scene(rng, size) for _ in range(n_items)]


def corrupt_heatmaps(mask: np.ndarray, num_labels: int, noise_sigma: float = 0.5,
                     crosstalk: float = 0.8, n_patches: int = 3,
                     seed: int = 0) -> np.ndarray:
    """One-hot heatmaps plus Gaussian noise plus exclusive-pair cross-talk.

    Cross-talk raises the partner channel of the exclusive pair inside a few
    random patches of the garment region, mimicking a segmenter that locally
    mistakes one garment for the other.
    """
    rng = np.random.default_rng(seed)
    H, W = mask.shape
    stack = np.zeros((num_labels, H, W), dtype=np.float64)
    for l in range(num_labels):
        stack[l][mask == l] = 1.0
    stack += rng.normal(0.0, noise_sigma, stack.shape)

    a, b = EXCLUSIVE_PAIR
    for src, dst in ((a, b), (b, a)):
        region = np.argwhere(mask == src)
        if len(region) == 0:
            continue
        for _ in range(n_patches):
            cy, cx = region[rng.integers(len(region))]
            h = int(rng.integers(4, 8))
            w = int(rng.integers(4, 8))
            y0, y1 = max(0, cy - h // 2), min(H, cy + h // 2 + 1)
            x0, x1 = max(0, cx - w // 2), min(W, cx + w // 2 + 1)
            patch = np.zeros((H, W), dtype=bool)
            patch[y0:y1, x0:x1] = True
            stack[dst][patch & (mask == src)] += crosstalk
    return stack.astype(np.float32)


# ---------------------------------------------------------------------------
# Striped scenes for CRF scale studies.

STRIPE_LABELS = (1, 2)


def make_striped_item(rng: np.random.Generator, size: int = 24, stripe: int = 3,
                      noise_sigma: float = 0.8,
                      color_noise: float = 30.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(heatmaps, image, gt) with horizontal bands alternating two labels.

    Colors are noisy enough that the appearance kernel cannot separate the
    bands on its own; only a smoothness scale matched to the stripe height
    recovers the pattern from the noisy unaries.
    """
    H = W = size
    rows = (np.arange(H) // stripe) % 2
    gt = np.where(rows[:, None] == 0, STRIPE_LABELS[0], STRIPE_LABELS[1])
    gt = np.broadcast_to(gt, (H, W)).astype(np.uint8)

    palette_colors = {STRIPE_LABELS[0]: np.array([150.0, 80.0, 80.0]),
                      STRIPE_LABELS[1]: np.array([80.0, 80.0, 150.0])}
    colors = np.empty((H, W, 3))
    for l, c in palette_colors.items():
        colors[gt == l] = c
    image = np.clip(colors + rng.normal(0.0, color_noise, colors.shape),
                    0, 255).astype(np.uint8)

    num_labels = max(STRIPE_LABELS) + 1
    stack = np.zeros((num_labels, H, W), dtype=np.float64)
    for l in range(num_labels):
        stack[l][gt == l] = 1.0
    stack += rng.normal(0.0, noise_sigma, stack.shape)
    return stack.astype(np.float32), image, gt


def make_striped_set(n_items: int, size: int = 24, stripe: int = 3,
                     seed: int = 0) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    rng = np.random.default_rng(seed)
    return [make_striped_item(rng, size, stripe) for _ in range(n_items)]

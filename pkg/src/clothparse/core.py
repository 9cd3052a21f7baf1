"""Core domain types and file formats.

Palettes, label masks, heatmap stacks, probability maps, presence vectors,
and dataset manifests/splits. Everything downstream (gating, CRF, metrics,
the annotation service) builds on the conventions defined here.
"""

from __future__ import annotations

import json
import random
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

HMT1_MAGIC = b"HMT1"
PROB_TOL = 1e-6
SPLIT_NAMES = ("train", "val", "test")

# Hard cap on L*H*W for a heatmap file; anything past this is a corrupt header.
_MAX_HEATMAP_ELEMS = 1 << 31


class FormatError(ValueError):
    """An on-disk artifact violates its format contract."""


@dataclass(frozen=True)
class PaletteEntry:
    index: int
    name: str
    color: tuple[int, int, int]


@dataclass(frozen=True)
class Palette:
    """Ordered label set: indices 0..L-1, index 0 reserved for background."""

    entries: tuple[PaletteEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise FormatError("palette has no entries")
        indices = [e.index for e in self.entries]
        if indices != list(range(len(self.entries))):
            raise FormatError(f"palette indices must be exactly 0..{len(self.entries) - 1} "
                              f"with no gaps, got {indices}")
        if self.entries[0].name != "background":
            raise FormatError("palette index 0 must be named 'background'")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise FormatError("palette names must be unique")
        for e in self.entries:
            if len(e.color) != 3 or any(not (0 <= c <= 255) for c in e.color):
                raise FormatError(f"bad color for label {e.name!r}: {e.color}")

    @property
    def num_labels(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def color_array(self) -> np.ndarray:
        """(L, 3) uint8 colors, row i = color of label i."""
        return np.array([e.color for e in self.entries], dtype=np.uint8)

    def to_dict(self) -> dict:
        return {"labels": [{"index": e.index, "name": e.name, "color": list(e.color)}
                           for e in self.entries]}

    @classmethod
    def from_dict(cls, data: dict) -> "Palette":
        labels = data.get("labels")
        if not isinstance(labels, list):
            raise FormatError("palette JSON must have a 'labels' list")
        try:
            entries = [PaletteEntry(int(l["index"]), str(l["name"]),
                                    (int(l["color"][0]), int(l["color"][1]), int(l["color"][2])))
                       for l in labels]
        except (KeyError, TypeError, IndexError) as exc:
            raise FormatError(f"malformed palette entry: {exc}") from exc
        entries.sort(key=lambda e: e.index)
        return cls(tuple(entries))


def load_palette(path) -> Palette:
    """Load and validate a palette JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"palette {path}: invalid JSON ({exc})") from exc
    return Palette.from_dict(data)


def save_palette(path, palette: Palette) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(palette.to_dict(), fh, indent=2)
        fh.write("\n")


def bundled_palette() -> Palette:
    """The 25-category sample palette shipped with the package."""
    text = resources.files("clothparse").joinpath("data/palette25.json").read_text("utf-8")
    return Palette.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Label masks: 8-bit single-channel PNG, pixel value = label index.

def validate_mask(mask: np.ndarray, num_labels: int | None = None) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise FormatError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype != np.uint8:
        if mask.size and (mask.min() < 0 or mask.max() > 255):
            raise FormatError("mask values outside uint8 range")
        mask = mask.astype(np.uint8)
    if num_labels is not None and mask.size and int(mask.max()) >= num_labels:
        raise FormatError(f"mask value {int(mask.max())} >= label count {num_labels}")
    return mask


def load_mask(path, num_labels: int | None = None) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode != "L":
            raise FormatError(f"mask {path}: expected 8-bit single-channel PNG, got mode {img.mode}")
        data = np.asarray(img, dtype=np.uint8)
    return validate_mask(data, num_labels)


def save_mask(path, mask: np.ndarray, num_labels: int | None = None) -> None:
    mask = validate_mask(mask, num_labels)
    Image.fromarray(mask, mode="L").save(path, format="PNG")


def mask_to_png_bytes(mask: np.ndarray, num_labels: int | None = None) -> bytes:
    import io

    mask = validate_mask(mask, num_labels)
    buf = io.BytesIO()
    Image.fromarray(mask, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def mask_from_png_bytes(data: bytes, num_labels: int | None = None) -> np.ndarray:
    import io

    with Image.open(io.BytesIO(data)) as img:
        if img.mode != "L":
            raise FormatError(f"expected 8-bit single-channel PNG, got mode {img.mode}")
        arr = np.asarray(img, dtype=np.uint8)
    return validate_mask(arr, num_labels)


# ---------------------------------------------------------------------------
# Heatmap stacks: HMT1 container.
#
#   bytes 0-3   ASCII "HMT1"
#   bytes 4-15  uint32 LE: L, H, W
#   then        L*H*W float32 LE in (label, row, col) order

def save_heatmaps(path, stack: np.ndarray) -> None:
    stack = np.asarray(stack)
    if stack.ndim != 3:
        raise FormatError(f"heatmap stack must be (L, H, W), got shape {stack.shape}")
    if not np.isfinite(stack).all():
        raise FormatError("heatmap stack contains non-finite values")
    L, H, W = stack.shape
    with open(path, "wb") as fh:
        fh.write(HMT1_MAGIC)
        fh.write(struct.pack("<III", L, H, W))
        fh.write(np.ascontiguousarray(stack, dtype="<f4").tobytes())


def load_heatmaps(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != HMT1_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(12)
        if len(header) != 12:
            raise FormatError(f"{path}: truncated header")
        L, H, W = struct.unpack("<III", header)
        n = L * H * W
        if n == 0 or n > _MAX_HEATMAP_ELEMS:
            raise FormatError(f"{path}: implausible dims ({L}, {H}, {W})")
        payload = fh.read()
    if len(payload) < 4 * n:
        raise FormatError(f"{path}: truncated payload ({len(payload)} of {4 * n} bytes)")
    if len(payload) > 4 * n:
        raise FormatError(f"{path}: trailing data past declared payload")
    return np.frombuffer(payload, dtype="<f4").reshape(L, H, W).copy()


# ---------------------------------------------------------------------------
# Probability maps and presence vectors.

def softmax_probmaps(heatmaps: np.ndarray) -> np.ndarray:
    """Per-pixel softmax over the label axis, stable under large score gaps."""
    h = np.asarray(heatmaps, dtype=np.float64)
    if h.ndim != 3:
        raise ValueError(f"expected (L, H, W) stack, got shape {h.shape}")
    if not np.isfinite(h).all():
        raise ValueError("heatmap scores must be finite")
    shifted = h - h.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def validate_probmaps(q: np.ndarray, tol: float = PROB_TOL) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 3:
        raise ValueError(f"expected (L, H, W) probability maps, got shape {q.shape}")
    if q.min() < -tol or q.max() > 1 + tol:
        raise ValueError("probabilities outside [0, 1]")
    sums = q.sum(axis=0)
    if np.abs(sums - 1.0).max() > tol:
        raise ValueError(f"probabilities do not sum to 1 per pixel "
                         f"(max deviation {np.abs(sums - 1.0).max():.3g})")
    return q


def presence_vector(mask: np.ndarray, num_labels: int) -> np.ndarray:
    """Boolean length-L vector; bit i set iff label i occurs anywhere in the mask."""
    mask = validate_mask(mask, num_labels)
    return np.bincount(mask.ravel(), minlength=num_labels) > 0


# ---------------------------------------------------------------------------
# Dataset manifests and splits.

@dataclass(frozen=True)
class ManifestItem:
    id: str
    image: str
    mask: str
    split: str

    def __post_init__(self):
        if self.split not in SPLIT_NAMES:
            raise FormatError(f"item {self.id!r}: split must be one of {SPLIT_NAMES}, "
                              f"got {self.split!r}")


@dataclass
class DatasetManifest:
    items: list[ManifestItem]

    def __post_init__(self):
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise FormatError("manifest ids must be unique")

    def ids(self, split: str | None = None) -> list[str]:
        return [it.id for it in self.items if split is None or it.split == split]

    def subset(self, split: str) -> list[ManifestItem]:
        return [it for it in self.items if it.split == split]


def load_manifest(path, check_paths: bool = True) -> DatasetManifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise FormatError(f"manifest {path}: expected a JSON list")
    items = []
    for row in data:
        try:
            items.append(ManifestItem(str(row["id"]), str(row["image"]),
                                      str(row["mask"]), str(row["split"])))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"manifest {path}: malformed item {row!r}") from exc
    manifest = DatasetManifest(items)
    if check_paths:
        base = path.parent
        for it in manifest.items:
            for p in (it.image, it.mask):
                resolved = Path(p) if Path(p).is_absolute() else base / p
                if not resolved.exists():
                    raise FormatError(f"manifest {path}: missing file {resolved} "
                                      f"(item {it.id!r})")
    return manifest


def save_manifest(path, manifest: DatasetManifest) -> None:
    rows = [{"id": it.id, "image": it.image, "mask": it.mask, "split": it.split}
            for it in manifest.items]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")


def split_dataset(ids, ratios, seed: int) -> dict[str, list[str]]:
    """Deterministic (train, val, test) split.

    ``ratios`` is (train, val, test) summing to 1. Sizes follow the floor
    rule: test = floor(N*r_test), val = floor(N*r_val), train = remainder.
    """
    ids = list(ids)
    n = len(ids)
    if n < 3:
        raise ValueError(f"need at least 3 ids to split, got {n}")
    if len(ratios) != 3:
        raise ValueError("ratios must be (train, val, test)")
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")
    _, r_val, r_test = ratios
    n_test = int(n * r_test)
    n_val = int(n * r_val)
    shuffled = ids[:]
    random.Random(seed).shuffle(shuffled)
    return {
        "test": shuffled[:n_test],
        "val": shuffled[n_test:n_test + n_val],
        "train": shuffled[n_test + n_val:],
    }

"""SLIC superpixels, connectivity enforcement, and morphological mask smoothing.

The clustering here is the reference implementation for the web annotation
client, which re-implements it pixel-for-pixel. Everything that affects the
integer id map is therefore pinned down exactly: Lab values are snapped to a
2^-20 fixed-point grid, accumulations run in row-major pixel order, and all
comparisons use strict less-than with centers visited in id order. Keep those
rules in sync with the client when touching this file.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, floor

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.csgraph import connected_components

from .core import validate_mask

# Fixed-point grid for Lab values shared with the web client; kills the
# last-ulp libm differences between numpy and browser engines.
LAB_QUANT = float(1 << 20)

_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
# White point = matrix row sums, so (255,255,255) maps to L*=100 exactly.
_WHITE = _RGB_TO_XYZ.sum(axis=1)
_LAB_DELTA = 6.0 / 29.0


def rgb_to_lab(rgb) -> np.ndarray:
    """sRGB (0..255, D65) to CIELAB. Accepts a triple or an (..., 3) array."""
    arr = np.asarray(rgb, dtype=np.float64) / 255.0
    linear = np.where(arr <= 0.04045, arr / 12.92, ((arr + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _RGB_TO_XYZ.T
    t = xyz / _WHITE
    f = np.where(t > _LAB_DELTA ** 3,
                 np.cbrt(t),
                 t / (3.0 * _LAB_DELTA * _LAB_DELTA) + 4.0 / 29.0)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


@dataclass(frozen=True)
class SlicConfig:
    region_size: int = 16
    compactness: float = 10.0
    iterations: int = 10
    min_region_fraction: float = 0.25

    def __post_init__(self):
        if self.region_size < 2:
            raise ValueError(f"region_size must be >= 2, got {self.region_size}")
        if self.compactness <= 0:
            raise ValueError(f"compactness must be > 0, got {self.compactness}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.min_region_fraction < 0:
            raise ValueError("min_region_fraction must be >= 0")


@dataclass(frozen=True)
class SuperpixelMap:
    """Per-pixel superpixel ids, compact in 0..K-1."""

    ids: np.ndarray

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids, dtype=np.int32)
        if ids.ndim != 2:
            raise ValueError(f"ids must be 2-D, got shape {ids.shape}")
        uniq = np.unique(ids)
        k = len(uniq)
        if uniq[0] != 0 or uniq[-1] != k - 1:
            raise ValueError("superpixel ids must be compact 0..K-1")
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    @property
    def num_segments(self) -> int:
        return int(self.ids.max()) + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.ids.shape


def _quantize_lab(lab: np.ndarray) -> np.ndarray:
    return np.floor(lab * LAB_QUANT + 0.5) / LAB_QUANT


def _compact_by_first_appearance(flat: np.ndarray) -> np.ndarray:
    uniq, first = np.unique(flat, return_index=True)
    order = np.argsort(first, kind="stable")
    lookup = np.empty(int(uniq.max()) + 1, dtype=np.int32)
    lookup[uniq[order]] = np.arange(len(uniq), dtype=np.int32)
    return lookup[flat]


def compute_slic(image: np.ndarray, cfg: SlicConfig) -> SuperpixelMap:
    """Grid-seeded local k-means over (Lab color, position).

    Distance between pixel p and center c is
    d_lab^2 + (d_xy^2 / S^2) * m^2 compared without the square root. The
    search window per center is the closed box |x-cx| <= S, |y-cy| <= S.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB image, got shape {image.shape}")
    H, W = image.shape[:2]
    S = cfg.region_size
    if W < S or H < S:
        raise ValueError(f"image {W}x{H} smaller than one {S}px region")

    lab = _quantize_lab(rgb_to_lab(image))
    labL, labA, labB = lab[:, :, 0], lab[:, :, 1], lab[:, :, 2]

    # Gradient for seed perturbation: squared Lab difference of the two
    # horizontal neighbours plus the two vertical ones, replicate border.
    xm = np.clip(np.arange(W) - 1, 0, W - 1)
    xp = np.clip(np.arange(W) + 1, 0, W - 1)
    ym = np.clip(np.arange(H) - 1, 0, H - 1)
    yp = np.clip(np.arange(H) + 1, 0, H - 1)

    def _sqdiff(a, b):
        d0 = a[..., 0] - b[..., 0]
        d1 = a[..., 1] - b[..., 1]
        d2 = a[..., 2] - b[..., 2]
        return d0 * d0 + d1 * d1 + d2 * d2

    grad = _sqdiff(lab[:, xp, :], lab[:, xm, :]) + _sqdiff(lab[yp, :, :], lab[ym, :, :])

    nx = ceil(W / S)
    ny = ceil(H / S)
    step_x = W / nx
    step_y = H / ny
    cx, cy = [], []
    for gy in range(ny):
        for gx in range(nx):
            sx = int(floor((gx + 0.5) * step_x))
            sy = int(floor((gy + 0.5) * step_y))
            # Move to the lowest-gradient spot in the 3x3 neighbourhood;
            # strict improvement only, scanned row-major.
            bx, by = sx, sy
            bg = grad[sy, sx]
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    qx, qy = sx + dx, sy + dy
                    if 0 <= qx < W and 0 <= qy < H and grad[qy, qx] < bg:
                        bg = grad[qy, qx]
                        bx, by = qx, qy
            cx.append(float(bx))
            cy.append(float(by))
    K = len(cx)
    cx = np.array(cx)
    cy = np.array(cy)
    ci = (cy.astype(int), cx.astype(int))
    cL = labL[ci].copy()
    cA = labA[ci].copy()
    cB = labB[ci].copy()

    S2 = float(S * S)
    m2 = cfg.compactness * cfg.compactness
    xs_all = np.arange(W, dtype=np.float64)
    ys_all = np.arange(H, dtype=np.float64)
    X, Y = np.meshgrid(xs_all, ys_all)

    labels = np.full((H, W), -1, dtype=np.int32)
    for _ in range(cfg.iterations):
        dist = np.full((H, W), np.inf)
        labels.fill(-1)
        for k in range(K):
            x0 = max(0, ceil(cx[k] - S))
            x1 = min(W - 1, floor(cx[k] + S))
            y0 = max(0, ceil(cy[k] - S))
            y1 = min(H - 1, floor(cy[k] + S))
            if x0 > x1 or y0 > y1:
                continue
            dl = labL[y0:y1 + 1, x0:x1 + 1] - cL[k]
            da = labA[y0:y1 + 1, x0:x1 + 1] - cA[k]
            db = labB[y0:y1 + 1, x0:x1 + 1] - cB[k]
            dlab2 = dl * dl + da * da + db * db
            dxv = xs_all[x0:x1 + 1] - cx[k]
            dyv = ys_all[y0:y1 + 1] - cy[k]
            dxy2 = (dxv * dxv)[None, :] + (dyv * dyv)[:, None]
            d2 = dlab2 + (dxy2 / S2) * m2
            win_d = dist[y0:y1 + 1, x0:x1 + 1]
            win_l = labels[y0:y1 + 1, x0:x1 + 1]
            better = d2 < win_d
            win_d[better] = d2[better]
            win_l[better] = k

        if (labels < 0).any():
            # Windows drifted off some pixel: fall back to the spatially
            # nearest center, same strict-< rule.
            miss_y, miss_x = np.nonzero(labels < 0)
            best = np.full(len(miss_y), np.inf)
            pick = np.zeros(len(miss_y), dtype=np.int32)
            for k in range(K):
                dxv = miss_x - cx[k]
                dyv = miss_y - cy[k]
                d2 = dxv * dxv + dyv * dyv
                closer = d2 < best
                best[closer] = d2[closer]
                pick[closer] = k
            labels[miss_y, miss_x] = pick

        flat = labels.ravel()
        cnt = np.bincount(flat, minlength=K).astype(np.float64)
        good = cnt > 0
        sums = [np.bincount(flat, weights=w.ravel(), minlength=K)
                for w in (labL, labA, labB, X, Y)]
        cL[good] = sums[0][good] / cnt[good]
        cA[good] = sums[1][good] / cnt[good]
        cB[good] = sums[2][good] / cnt[good]
        cx[good] = sums[3][good] / cnt[good]
        cy[good] = sums[4][good] / cnt[good]

    return SuperpixelMap(_compact_by_first_appearance(labels.ravel()).reshape(H, W))


def _components(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected components of equal-id regions, numbered by first raster
    appearance."""
    H, W = labels.shape
    idx = np.arange(H * W).reshape(H, W)
    rows, cols = [], []
    h_same = labels[:, :-1] == labels[:, 1:]
    rows.append(idx[:, :-1][h_same])
    cols.append(idx[:, 1:][h_same])
    v_same = labels[:-1, :] == labels[1:, :]
    rows.append(idx[:-1, :][v_same])
    cols.append(idx[1:, :][v_same])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = sparse.coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)),
                              shape=(H * W, H * W))
    n, comp = connected_components(graph, directed=False)
    comp = _compact_by_first_appearance(comp)
    return comp.reshape(H, W), n


def enforce_connectivity(sp: SuperpixelMap, cfg: SlicConfig) -> SuperpixelMap:
    """Make every id 4-connected and absorb undersized fragments.

    Components smaller than min_region_fraction * S^2 are relabeled to the
    id of their largest adjacent component (snapshot sizes, ties to the
    smaller component number), repeated until stable. Idempotent.
    """
    labels = np.asarray(sp.ids, dtype=np.int32).copy()
    H, W = labels.shape
    threshold = cfg.min_region_fraction * cfg.region_size * cfg.region_size

    while True:
        comp, n = _components(labels)
        sizes = np.bincount(comp.ravel(), minlength=n)
        comp_id = np.empty(n, dtype=np.int32)
        flat_c = comp.ravel()
        flat_l = labels.ravel()
        first = np.unique(flat_c, return_index=True)[1]
        comp_id[flat_c[first]] = flat_l[first]

        # Adjacency between distinct components across 4-edges.
        pairs = []
        h_diff = comp[:, :-1] != comp[:, 1:]
        pairs.append(np.stack([comp[:, :-1][h_diff], comp[:, 1:][h_diff]], axis=1))
        v_diff = comp[:-1, :] != comp[1:, :]
        pairs.append(np.stack([comp[:-1, :][v_diff], comp[1:, :][v_diff]], axis=1))
        pairs = np.concatenate(pairs) if pairs else np.empty((0, 2), dtype=np.int32)
        adjacency: dict[int, set[int]] = {}
        for a, b in np.unique(pairs, axis=0):
            adjacency.setdefault(int(a), set()).add(int(b))
            adjacency.setdefault(int(b), set()).add(int(a))

        small = [c for c in range(n) if sizes[c] < threshold and c in adjacency]
        if not small:
            break
        current = comp_id.copy()
        for c in small:
            neigh = sorted(adjacency[c])
            target = max(neigh, key=lambda q: (sizes[q], -q))
            current[c] = current[target]
        labels = current[comp]

    comp, _ = _components(labels)
    return SuperpixelMap(_compact_by_first_appearance(comp.ravel()).reshape(H, W))


def slic(image: np.ndarray, cfg: SlicConfig) -> SuperpixelMap:
    """compute_slic followed by enforce_connectivity; what the tools use."""
    return enforce_connectivity(compute_slic(image, cfg), cfg)


def boundary_mask(sp: SuperpixelMap) -> np.ndarray:
    """Boolean map of pixels that touch a different id to the right or below."""
    ids = sp.ids
    edge = np.zeros(ids.shape, dtype=bool)
    edge[:, :-1] |= ids[:, :-1] != ids[:, 1:]
    edge[:-1, :] |= ids[:-1, :] != ids[1:, :]
    return edge


# ---------------------------------------------------------------------------
# Morphological mask smoothing.

def disc_element(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (xx * xx + yy * yy) <= r * r


def smooth_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Per-label closing-then-opening with a disc, composited per pixel.

    Pixels claimed by exactly one smoothed label map take that label; where
    maps overlap, the label with the most support in the input mask's disc
    neighbourhood wins (ties to the lowest index); unclaimed pixels keep
    their input label. radius 0 is the identity.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    mask = validate_mask(mask)
    if radius == 0:
        return mask.copy()

    selem = disc_element(radius)
    present = np.unique(mask)
    claims = np.zeros((len(present),) + mask.shape, dtype=bool)
    support = np.zeros((len(present),) + mask.shape, dtype=np.int32)
    for i, lbl in enumerate(present):
        ind = mask == lbl
        closed = ndimage.binary_erosion(ndimage.binary_dilation(ind, selem),
                                        selem, border_value=1)
        opened = ndimage.binary_dilation(ndimage.binary_erosion(closed, selem,
                                                                border_value=1), selem)
        claims[i] = opened
        support[i] = ndimage.correlate(ind.astype(np.int32), selem.astype(np.int32),
                                       mode="constant", cval=0)

    score = np.where(claims, support, -1)
    winner = score.argmax(axis=0)
    any_claim = claims.any(axis=0)
    out = mask.copy()
    out[any_claim] = present[winner[any_claim]]
    return out

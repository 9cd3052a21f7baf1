"""Outfit gating: encoder side branch, heatmap filtering, losses, training.

The segmentation trunk here is a desk-scale stand-in: a per-pixel linear
classifier over fixed handcrafted features (RGB, normalized position, and
blurred RGB at two scales, D=11). The encoder pools those features globally,
runs two fully-connected layers (hidden width 256) and a sigmoid, and its
output multiplies the trunk's heatmaps channel-wise. All gradients are
hand-derived and checked against central finite differences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage

from .core import presence_vector, validate_mask

FEATURE_DIM = 11
HIDDEN_DIM = 256
BLUR_SIGMAS = (1.0, 2.0)
MODEL_MAGIC = b"TOYM"

PARAM_FIELDS = ("trunk_w", "trunk_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b")


def extract_features(image: np.ndarray) -> np.ndarray:
    """(H, W, 11) float features: RGB/255, x/(W-1), y/(H-1), blurred RGB x2."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    H, W = image.shape[:2]
    rgb = image.astype(np.float64) / 255.0
    xs = np.zeros(W) if W == 1 else np.arange(W) / (W - 1)
    ys = np.zeros(H) if H == 1 else np.arange(H) / (H - 1)
    xmap = np.broadcast_to(xs[None, :], (H, W))
    ymap = np.broadcast_to(ys[:, None], (H, W))
    blurs = [ndimage.gaussian_filter(rgb, sigma=(s, s, 0)) for s in BLUR_SIGMAS]
    return np.concatenate([rgb, xmap[..., None], ymap[..., None]] + blurs, axis=2)


@dataclass
class ToyModelParams:
    """Trunk (L x D linear map) plus encoder (D -> 256 -> L)."""

    trunk_w: np.ndarray
    trunk_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            arr = np.asarray(getattr(self, f.name), dtype=np.float64)
            if not np.isfinite(arr).all():
                raise ValueError(f"{f.name} has non-finite entries")
            setattr(self, f.name, arr)
        L, D = self.trunk_w.shape
        expected = {
            "trunk_w": (L, D), "trunk_b": (L,),
            "fc1_w": (HIDDEN_DIM, D), "fc1_b": (HIDDEN_DIM,),
            "fc2_w": (L, HIDDEN_DIM), "fc2_b": (L,),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {got}")

    @property
    def num_labels(self) -> int:
        return self.trunk_w.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.trunk_w.shape[1]

    def copy(self) -> "ToyModelParams":
        return ToyModelParams(*[getattr(self, n).copy() for n in PARAM_FIELDS])

    @classmethod
    def init_random(cls, num_labels: int, feature_dim: int = FEATURE_DIM,
                    seed: int = 0, scale: float = 0.1) -> "ToyModelParams":
        rng = np.random.default_rng(seed)
        return cls(
            trunk_w=rng.normal(0.0, scale, (num_labels, feature_dim)),
            trunk_b=np.zeros(num_labels),
            fc1_w=rng.normal(0.0, scale, (HIDDEN_DIM, feature_dim)),
            fc1_b=np.zeros(HIDDEN_DIM),
            fc2_w=rng.normal(0.0, scale, (num_labels, HIDDEN_DIM)),
            fc2_b=np.zeros(num_labels),
        )


def zero_grads(params: ToyModelParams) -> ToyModelParams:
    return ToyModelParams(*[np.zeros_like(getattr(params, n)) for n in PARAM_FIELDS])


def save_model(path, params: ToyModelParams) -> None:
    """Magic + uint32 header length + JSON tensor table + raw f8 LE blocks."""
    header = json.dumps({"tensors": [{"name": n, "shape": list(getattr(params, n).shape),
                                      "dtype": "<f8"} for n in PARAM_FIELDS]}).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for n in PARAM_FIELDS:
            fh.write(np.ascontiguousarray(getattr(params, n), dtype="<f8").tobytes())


def load_model(path) -> ToyModelParams:
    from .core import FormatError

    with open(path, "rb") as fh:
        if fh.read(4) != MODEL_MAGIC:
            raise FormatError(f"{path}: bad model magic")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        arrays = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape))
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise FormatError(f"{path}: truncated tensor {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return ToyModelParams(**{n: arrays[n] for n in PARAM_FIELDS})


# ---------------------------------------------------------------------------
# Forward passes.

def trunk_forward(features: np.ndarray, params: ToyModelParams) -> np.ndarray:
    """(L, H, W) linear per-pixel scores."""
    H, W, D = features.shape
    scores = features.reshape(-1, D) @ params.trunk_w.T + params.trunk_b
    return scores.T.reshape(params.num_labels, H, W)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def encoder_forward(features: np.ndarray,
                    params: ToyModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Gate vector in (0,1)^L and the 256-d hidden representation."""
    pooled = features.reshape(-1, features.shape[2]).mean(axis=0)
    hidden = np.maximum(params.fc1_w @ pooled + params.fc1_b, 0.0)
    gate = _sigmoid(params.fc2_w @ hidden + params.fc2_b)
    return gate, hidden


def gate_heatmaps(heatmaps: np.ndarray, gate: np.ndarray) -> np.ndarray:
    """Channel-wise product: output channel i = gate[i] * heatmaps[i]."""
    heatmaps = np.asarray(heatmaps)
    gate = np.asarray(gate, dtype=np.float64)
    if heatmaps.ndim != 3:
        raise ValueError(f"expected (L, H, W) stack, got shape {heatmaps.shape}")
    if gate.shape != (heatmaps.shape[0],):
        raise ValueError(f"gate length {gate.shape} does not match "
                         f"{heatmaps.shape[0]} channels")
    return heatmaps * gate[:, None, None]


# ---------------------------------------------------------------------------
# Losses and analytic gradients.

def _softmax_rows(s: np.ndarray) -> np.ndarray:
    shifted = s - s.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid_ce(z: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Stable per-label sigmoid cross entropy from logits."""
    return np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))


def _forward_loss(flat: np.ndarray, y: np.ndarray, target: np.ndarray,
                  params: ToyModelParams, lam: float, gated: bool,
                  seg_weight: float) -> tuple[float, float, float]:
    """(total, seg, presence) from pre-flattened inputs; no validation."""
    scores = flat @ params.trunk_w.T + params.trunk_b
    pooled = flat.mean(axis=0)
    hidden = np.maximum(params.fc1_w @ pooled + params.fc1_b, 0.0)
    z = params.fc2_w @ hidden + params.fc2_b
    if gated:
        scores = scores * _sigmoid(z)[None, :]
    prob = _softmax_rows(scores)
    seg = float(-np.log(np.maximum(prob[np.arange(len(y)), y], 1e-300)).mean())
    presence = float(_sigmoid_ce(z, target).mean())
    return seg_weight * seg + lam * presence, seg, presence


def loss_from_features(features: np.ndarray, gt_mask: np.ndarray,
                       params: ToyModelParams, lam: float,
                       gated: bool = True) -> tuple[float, dict]:
    """total = mean-per-pixel softmax CE on (gated) heatmaps
    + lam * mean-per-label sigmoid CE of the gate against presence."""
    L = params.num_labels
    gt_mask = validate_mask(gt_mask, L)
    flat = features.reshape(-1, features.shape[2])
    y = gt_mask.ravel().astype(np.int64)
    target = presence_vector(gt_mask, L).astype(np.float64)
    total, seg, presence = _forward_loss(flat, y, target, params, lam, gated, 1.0)
    return total, {"seg": seg, "presence": presence, "total": total}


def total_loss(image: np.ndarray, gt_mask: np.ndarray, params: ToyModelParams,
               lam: float, gated: bool = True) -> tuple[float, dict]:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return loss_from_features(extract_features(image), gt_mask, params, lam, gated)


def loss_and_grads(features: np.ndarray, gt_mask: np.ndarray,
                   params: ToyModelParams, lam: float, gated: bool = True,
                   seg_weight: float = 1.0) -> tuple[float, dict, ToyModelParams]:
    """Forward pass plus hand-derived gradients for every parameter.

    seg_weight=0 gives the encoder-only objective used by the independent
    encoder training stage.
    """
    L = params.num_labels
    gt_mask = validate_mask(gt_mask, L)
    H, W, D = features.shape
    flat = features.reshape(-1, D)
    y = gt_mask.ravel().astype(np.int64)
    n_pix = len(y)

    scores = flat @ params.trunk_w.T + params.trunk_b
    pooled = flat.mean(axis=0)
    pre1 = params.fc1_w @ pooled + params.fc1_b
    hidden = np.maximum(pre1, 0.0)
    z = params.fc2_w @ hidden + params.fc2_b
    gate = _sigmoid(z)

    gated_scores = scores * gate[None, :] if gated else scores
    prob = _softmax_rows(gated_scores)
    seg = float(-np.log(np.maximum(prob[np.arange(n_pix), y], 1e-300)).mean())
    target = presence_vector(gt_mask, L).astype(np.float64)
    presence = float(_sigmoid_ce(z, target).mean())
    total = seg_weight * seg + lam * presence

    d_gated = prob.copy()
    d_gated[np.arange(n_pix), y] -= 1.0
    d_gated *= seg_weight / n_pix
    if gated:
        d_scores = d_gated * gate[None, :]
        d_gate = (d_gated * scores).sum(axis=0)
    else:
        d_scores = d_gated
        d_gate = np.zeros(L)

    grads = zero_grads(params)
    grads.trunk_w[:] = d_scores.T @ flat
    grads.trunk_b[:] = d_scores.sum(axis=0)

    dz = d_gate * gate * (1.0 - gate) + lam * (gate - target) / L
    grads.fc2_w[:] = np.outer(dz, hidden)
    grads.fc2_b[:] = dz
    d_hidden = params.fc2_w.T @ dz
    d_pre1 = d_hidden * (pre1 > 0)
    grads.fc1_w[:] = np.outer(d_pre1, pooled)
    grads.fc1_b[:] = d_pre1

    return total, {"seg": seg, "presence": presence, "total": total}, grads


# ---------------------------------------------------------------------------
# Gradient checking.

def numerical_gradient(loss_fn, params: ToyModelParams, h: float = 1e-5,
                       names=PARAM_FIELDS) -> ToyModelParams:
    """Central finite differences of loss_fn(params) for the named arrays."""
    if not 1e-6 <= h <= 1e-4:
        raise ValueError(f"step h must lie in [1e-6, 1e-4], got {h}")
    grads = zero_grads(params)
    for name in names:
        arr = getattr(params, name)
        out = getattr(grads, name)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            hi = loss_fn(params)
            arr[idx] = orig - h
            lo = loss_fn(params)
            arr[idx] = orig
            out[idx] = (hi - lo) / (2.0 * h)
            it.iternext()
    return grads


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(params: ToyModelParams, image: np.ndarray, gt_mask: np.ndarray,
               lam: float, h: float = 1e-5, tol: float = 1e-4,
               gated: bool = True, seg_weight: float = 1.0,
               names=PARAM_FIELDS) -> GradCheckReport:
    """Compare analytic gradients against central differences, elementwise."""
    features = extract_features(image)
    work = params.copy()
    _, _, analytic = loss_and_grads(features, gt_mask, work, lam, gated, seg_weight)

    gt_mask = validate_mask(gt_mask, work.num_labels)
    flat = features.reshape(-1, features.shape[2])
    y = gt_mask.ravel().astype(np.int64)
    target = presence_vector(gt_mask, work.num_labels).astype(np.float64)

    def loss_fn(p):
        return _forward_loss(flat, y, target, p, lam, gated, seg_weight)[0]

    numeric = numerical_gradient(loss_fn, work, h, names)
    worst = (0.0, "", ())
    for name in names:
        a = getattr(analytic, name)
        n = getattr(numeric, name)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        err = np.abs(a - n) / denom
        idx = np.unravel_index(int(err.argmax()), err.shape)
        if err[idx] > worst[0]:
            worst = (float(err[idx]), name, idx)
    return GradCheckReport(worst[0], worst[1], worst[2], tol)


# ---------------------------------------------------------------------------
# Staged training.

@dataclass(frozen=True)
class TrainSchedule:
    lr: float = 0.1
    epochs_a: int = 200
    epochs_b: int = 200
    epochs_c: int = 200
    lam: float = 1.0
    seed: int = 0


_STAGE_ARRAYS = {
    "A": ("trunk_w", "trunk_b"),
    "B": ("fc1_w", "fc1_b", "fc2_w", "fc2_b"),
    "C": PARAM_FIELDS,
}


def _epoch_step(items, params, lam, gated, seg_weight, lr, arrays):
    total = 0.0
    acc = zero_grads(params)
    for feats, mask in items:
        loss, _, g = loss_and_grads(feats, mask, params, lam, gated, seg_weight)
        total += loss
        for n in arrays:
            getattr(acc, n)[:] += getattr(g, n)
    n_items = len(items)
    for n in arrays:
        getattr(params, n)[:] -= lr * getattr(acc, n) / n_items
    return total / n_items


def _val_metrics(items, params, lam):
    seg_ungated = np.mean([loss_from_features(f, m, params, 0.0, gated=False)[1]["seg"]
                           for f, m in items])
    seg_gated = np.mean([loss_from_features(f, m, params, 0.0, gated=True)[1]["seg"]
                         for f, m in items])
    tot = np.mean([loss_from_features(f, m, params, lam, gated=True)[0]
                   for f, m in items])
    presence = np.mean([loss_from_features(f, m, params, lam, gated=True)[1]["presence"]
                        for f, m in items])
    return {"seg_ungated": float(seg_ungated), "seg_gated": float(seg_gated),
            "presence": float(presence), "total": float(tot)}


def train_staged(train_items, val_items, num_labels: int,
                 schedule: TrainSchedule = TrainSchedule()) -> tuple[ToyModelParams, dict]:
    """Three-stage full-batch gradient descent.

    Stage A fits the trunk on the ungated segmentation loss. Stage B holds
    the trunk bit-identical and fits the encoder on the presence loss alone.
    Stage C fine-tunes everything jointly on the combined loss. Deterministic
    for a fixed seed; raises on divergence.
    """
    if not train_items or not val_items:
        raise ValueError("train and val splits must be non-empty")
    train = [(extract_features(img), validate_mask(m, num_labels))
             for img, m in train_items]
    val = [(extract_features(img), validate_mask(m, num_labels))
           for img, m in val_items]
    params = ToyModelParams.init_random(num_labels, train[0][0].shape[2], schedule.seed)

    stages = [
        ("A", schedule.epochs_a, dict(lam=0.0, gated=False, seg_weight=1.0)),
        ("B", schedule.epochs_b, dict(lam=schedule.lam, gated=True, seg_weight=0.0)),
        ("C", schedule.epochs_c, dict(lam=schedule.lam, gated=True, seg_weight=1.0)),
    ]
    history: dict = {"train_loss": {}, "val": {}}
    for stage, epochs, kw in stages:
        losses = []
        arrays = _STAGE_ARRAYS[stage]
        for epoch in range(epochs):
            loss = _epoch_step(train, params, kw["lam"], kw["gated"],
                               kw["seg_weight"], schedule.lr, arrays)
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged: stage {stage} epoch {epoch} "
                                   f"loss={loss}")
            losses.append(loss)
        history["train_loss"][stage] = losses
        history["val"][stage] = _val_metrics(val, params, schedule.lam)
    return params, history

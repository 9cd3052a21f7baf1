import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clothparse import core
from oracles import presence_histogram_oracle


# ---------------------------------------------------------------------------
# Palette

def _write_palette(path, labels):
    with open(path, "w") as fh:
        json.dump({"labels": labels}, fh)


def test_load_minimal_palette(tmp_path):
    p = tmp_path / "p.json"
    _write_palette(p, [{"index": 0, "name": "background", "color": [0, 0, 0]},
                       {"index": 1, "name": "dress", "color": [44, 255, 0]}])
    palette = core.load_palette(p)
    assert palette.num_labels == 2
    assert palette.names == ["background", "dress"]


def test_palette_gapped_indices_rejected(tmp_path):
    p = tmp_path / "p.json"
    _write_palette(p, [{"index": 0, "name": "background", "color": [0, 0, 0]},
                       {"index": 2, "name": "dress", "color": [44, 255, 0]}])
    with pytest.raises(core.FormatError, match="0..1"):
        core.load_palette(p)


def test_palette_requires_background_at_zero(tmp_path):
    p = tmp_path / "p.json"
    _write_palette(p, [{"index": 0, "name": "dress", "color": [44, 255, 0]}])
    with pytest.raises(core.FormatError, match="background"):
        core.load_palette(p)


def test_palette_duplicate_names_rejected(tmp_path):
    p = tmp_path / "p.json"
    _write_palette(p, [{"index": 0, "name": "background", "color": [0, 0, 0]},
                       {"index": 1, "name": "dress", "color": [1, 2, 3]},
                       {"index": 2, "name": "dress", "color": [4, 5, 6]}])
    with pytest.raises(core.FormatError, match="unique"):
        core.load_palette(p)


def test_palette_bad_json(tmp_path):
    p = tmp_path / "p.json"
    p.write_text("{nope")
    with pytest.raises(core.FormatError, match="JSON"):
        core.load_palette(p)


def test_bundled_palette_has_25_categories():
    palette = core.bundled_palette()
    assert palette.num_labels == 25
    assert palette.entries[0].name == "background"


def test_palette_roundtrip(tmp_path):
    palette = core.bundled_palette()
    out = tmp_path / "out.json"
    core.save_palette(out, palette)
    assert core.load_palette(out) == palette


# ---------------------------------------------------------------------------
# Mask PNG io

def test_mask_roundtrip_bit_exact(tmp_path, rng):
    mask = rng.integers(0, 5, (16, 16), dtype=np.uint8)
    path = tmp_path / "m.png"
    core.save_mask(path, mask, num_labels=5)
    assert np.array_equal(core.load_mask(path, num_labels=5), mask)


def test_all_zero_mask_loads_as_background(tmp_path):
    path = tmp_path / "m.png"
    core.save_mask(path, np.zeros((4, 6), dtype=np.uint8))
    loaded = core.load_mask(path)
    assert loaded.shape == (4, 6)
    assert (loaded == 0).all()


def test_mask_value_out_of_range_rejected(tmp_path):
    path = tmp_path / "m.png"
    core.save_mask(path, np.full((3, 3), 7, dtype=np.uint8))
    with pytest.raises(core.FormatError, match="7"):
        core.load_mask(path, num_labels=5)


def test_mask_rejects_non_grayscale(tmp_path):
    from PIL import Image

    path = tmp_path / "rgb.png"
    Image.new("RGB", (4, 4)).save(path)
    with pytest.raises(core.FormatError, match="mode"):
        core.load_mask(path)


def test_mask_png_bytes_roundtrip(rng):
    mask = rng.integers(0, 25, (10, 7), dtype=np.uint8)
    data = core.mask_to_png_bytes(mask)
    assert np.array_equal(core.mask_from_png_bytes(data), mask)


# ---------------------------------------------------------------------------
# HMT1 heatmap container

def test_heatmap_roundtrip_zeros(tmp_path):
    path = tmp_path / "h.hmt"
    stack = np.zeros((3, 2, 2), dtype=np.float32)
    core.save_heatmaps(path, stack)
    out = core.load_heatmaps(path)
    assert out.shape == (3, 2, 2)
    assert np.array_equal(out, stack)


def test_heatmap_roundtrip_exact_values(tmp_path):
    path = tmp_path / "h.hmt"
    stack = np.array([[[1.5, -0.25]], [[3.0e-12, 7.25]]], dtype=np.float32)
    core.save_heatmaps(path, stack)
    out = core.load_heatmaps(path)
    assert out.tobytes() == stack.tobytes()


def test_heatmap_bad_magic(tmp_path):
    path = tmp_path / "h.hmt"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(core.FormatError, match="magic"):
        core.load_heatmaps(path)


def test_heatmap_truncated_payload(tmp_path):
    path = tmp_path / "h.hmt"
    core.save_heatmaps(path, np.ones((2, 3, 3), dtype=np.float32))
    good = path.read_bytes()
    path.write_bytes(good[:-5])
    with pytest.raises(core.FormatError, match="truncated"):
        core.load_heatmaps(path)


def test_heatmap_dims_overflow(tmp_path):
    import struct

    path = tmp_path / "h.hmt"
    path.write_bytes(b"HMT1" + struct.pack("<III", 2 ** 20, 2 ** 20, 4) + b"\0" * 64)
    with pytest.raises(core.FormatError, match="implausible"):
        core.load_heatmaps(path)


def test_heatmap_file_layout(tmp_path):
    path = tmp_path / "h.hmt"
    stack = np.arange(12, dtype=np.float32).reshape(2, 2, 3)
    core.save_heatmaps(path, stack)
    raw = path.read_bytes()
    assert raw[:4] == b"HMT1"
    assert np.frombuffer(raw[4:16], dtype="<u4").tolist() == [2, 2, 3]
    assert np.frombuffer(raw[16:], dtype="<f4").tolist() == list(range(12))


# ---------------------------------------------------------------------------
# Softmax

def test_softmax_symmetric_pixel():
    q = core.softmax_probmaps(np.zeros((2, 1, 1)))
    np.testing.assert_allclose(q.ravel(), [0.5, 0.5], atol=1e-15)


def test_softmax_analytic_pixel():
    q = core.softmax_probmaps(np.array([[[np.log(2.0)]], [[0.0]]]))
    np.testing.assert_allclose(q.ravel(), [2 / 3, 1 / 3], atol=1e-12)


def test_softmax_large_gap_no_overflow():
    q = core.softmax_probmaps(np.array([[[1000.0]], [[0.0]]]))
    np.testing.assert_allclose(q.ravel(), [1.0, 0.0], atol=1e-12)
    assert np.isfinite(q).all()


def test_softmax_rejects_nan():
    with pytest.raises(ValueError, match="finite"):
        core.softmax_probmaps(np.array([[[np.nan]], [[0.0]]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_softmax_rows_normalized_and_shift_invariant(L, h, w, seed):
    rng = np.random.default_rng(seed)
    scores = rng.normal(0, 5, (L, h, w))
    q = core.softmax_probmaps(scores)
    assert q.min() >= 0 and q.max() <= 1
    np.testing.assert_allclose(q.sum(axis=0), 1.0, atol=1e-6)
    shift = rng.normal(0, 10, (1, h, w))
    np.testing.assert_allclose(core.softmax_probmaps(scores + shift), q, atol=1e-9)


# ---------------------------------------------------------------------------
# Presence vectors

def test_presence_by_definition():
    mask = np.array([[0, 3], [3, 7]], dtype=np.uint8)
    vec = core.presence_vector(mask, 8)
    assert vec.tolist() == [True, False, False, True, False, False, False, True]


def test_presence_all_background():
    vec = core.presence_vector(np.zeros((4, 4), dtype=np.uint8), 5)
    assert vec.tolist() == [True, False, False, False, False]


def test_presence_matches_histogram_oracle(rng):
    for _ in range(20):
        mask = rng.integers(0, 9, (12, 9), dtype=np.uint8)
        assert np.array_equal(core.presence_vector(mask, 9),
                              presence_histogram_oracle(mask, 9))


def test_presence_on_bundled_sample_mask(rng):
    # A fixed sample mask checked against the per-pixel histogram oracle.
    mask = np.zeros((24, 24), dtype=np.uint8)
    mask[3:9, 4:16] = 11
    mask[12:20, 6:14] = 21
    mask[0, 23] = 1
    vec = core.presence_vector(mask, 25)
    assert np.array_equal(vec, presence_histogram_oracle(mask, 25))
    assert set(np.nonzero(vec)[0].tolist()) == {0, 1, 11, 21}


# ---------------------------------------------------------------------------
# Splits

def test_split_sizes_cfpd_scale():
    ids = [f"img{i:04d}" for i in range(2682)]
    splits = core.split_dataset(ids, (0.78, 0.02, 0.20), seed=0)
    assert (len(splits["train"]), len(splits["val"]), len(splits["test"])) \
        == (2093, 53, 536)


def test_split_sizes_small():
    splits = core.split_dataset([str(i) for i in range(10)], (0.8, 0.1, 0.1), seed=3)
    assert (len(splits["train"]), len(splits["val"]), len(splits["test"])) == (8, 1, 1)


def test_split_deterministic_and_partition():
    ids = [f"x{i}" for i in range(101)]
    a = core.split_dataset(ids, (0.7, 0.1, 0.2), seed=42)
    b = core.split_dataset(ids, (0.7, 0.1, 0.2), seed=42)
    assert a == b
    union = a["train"] + a["val"] + a["test"]
    assert sorted(union) == sorted(ids)
    assert len(set(union)) == len(ids)


def test_split_different_seed_differs():
    ids = [str(i) for i in range(50)]
    a = core.split_dataset(ids, (0.6, 0.2, 0.2), seed=1)
    b = core.split_dataset(ids, (0.6, 0.2, 0.2), seed=2)
    assert a != b


def test_split_rejects_tiny_and_bad_ratios():
    with pytest.raises(ValueError, match="at least 3"):
        core.split_dataset(["a", "b"], (0.5, 0.25, 0.25), seed=0)
    with pytest.raises(ValueError, match="sum to 1"):
        core.split_dataset(list("abcdef"), (0.5, 0.2, 0.2), seed=0)


# ---------------------------------------------------------------------------
# Manifest

def test_manifest_roundtrip_and_path_check(tmp_path):
    img = tmp_path / "a.png"
    msk = tmp_path / "a_mask.png"
    core.save_mask(img, np.zeros((2, 2), dtype=np.uint8))
    core.save_mask(msk, np.zeros((2, 2), dtype=np.uint8))
    manifest = core.DatasetManifest([core.ManifestItem("a", "a.png", "a_mask.png",
                                                       "train")])
    path = tmp_path / "manifest.json"
    core.save_manifest(path, manifest)
    loaded = core.load_manifest(path)
    assert loaded.items == manifest.items
    assert loaded.ids("train") == ["a"]

    missing = core.DatasetManifest([core.ManifestItem("b", "b.png", "b_mask.png",
                                                      "test")])
    core.save_manifest(path, missing)
    with pytest.raises(core.FormatError, match="missing file"):
        core.load_manifest(path)


def test_manifest_duplicate_ids_rejected():
    with pytest.raises(core.FormatError, match="unique"):
        core.DatasetManifest([core.ManifestItem("a", "x", "y", "train"),
                              core.ManifestItem("a", "z", "w", "test")])


def test_manifest_bad_split_rejected():
    with pytest.raises(core.FormatError, match="split"):
        core.ManifestItem("a", "x", "y", "dev")

"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Quantitative regressions run on bundled synthetic data with frozen reference
values; everything else is property-based at the stated tolerances. Run with
``pytest tests/test_acceptance.py -v -s`` to see the per-criterion lines.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from clothparse import core, crf, gating, metrics, retrieval
from clothparse import superpixel as sp
from clothparse import tune as tune_mod
from clothparse.synthetic import (corrupt_heatmaps, make_outfit_dataset,
                                  make_striped_set)
from conftest import random_image, random_probmaps
from oracles import brute_force_oracle, nearest_oracle


@contextmanager
def criterion(name, budget_s=None):
    start = time.monotonic()
    try:
        yield
        elapsed = time.monotonic() - start
        if budget_s is not None:
            assert elapsed < budget_s, \
                f"{name}: {elapsed:.1f}s over {budget_s}s budget"
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    note = f" ({elapsed:.1f}s)" if budget_s else ""
    print(f"[PASS] {name}{note}")


def sampled_params(rng):
    base = np.array([10.0, 10.0, 30.0, 10.0, 3.0])
    jitter = np.exp(rng.uniform(-0.3, 0.3, 5))
    return crf.CrfParams(*(base * jitter))


def test_crf_oracle_equivalence():
    """Decoded mean-field energy never beats the exhaustive optimum, and the
    optimum's energy matches an independent enumeration to 1e-9."""
    rng = np.random.default_rng(2024)
    shapes = [(1, 2), (1, 3), (2, 2), (2, 3)]
    with criterion("CRF oracle equivalence (200 tiny instances)", budget_s=30):
        gaps = []
        for k in range(200):
            h, w = shapes[k % len(shapes)]
            inst = crf.CrfInstance(random_probmaps(rng, 3, h, w),
                                   random_image(rng, h, w), sampled_params(rng))
            bf = crf.brute_force_map(inst)
            e_bf = crf.energy(bf, inst)
            decoded = crf.decode_map(crf.mean_field_infer(inst, 10))
            e_dec = crf.energy(decoded, inst)
            assert e_dec >= e_bf - 1e-9
            gaps.append(e_dec - e_bf)
            oracle_lab, oracle_e = brute_force_oracle(inst.unary, inst.image,
                                                      inst.params)
            assert abs(e_bf - oracle_e) <= 1e-9
            assert np.array_equal(bf, oracle_lab)
        print(f"       decode gap: mean {np.mean(gaps):.3e}, "
              f"max {np.max(gaps):.3e}")


def test_free_energy_monotonic_under_sequential_sweeps():
    rng = np.random.default_rng(7)
    with criterion("free-energy monotonicity (50 4x4 instances)", budget_s=10):
        for _ in range(50):
            inst = crf.CrfInstance(random_probmaps(rng, 3, 4, 4),
                                   random_image(rng, 4, 4), sampled_params(rng))
            prev = crf.free_energy(inst.unary, inst)
            for sweeps in range(1, 6):
                q = crf.mean_field_infer(inst, sweeps, mode="sequential")
                f = crf.free_energy(q, inst)
                assert f <= prev + 1e-9
                prev = f


def test_unary_reduction_exactness():
    rng = np.random.default_rng(11)
    with criterion("unary reduction: w1=w2=0 is the identity"):
        params = crf.CrfParams(0.0, 0.0, 30.0, 10.0, 3.0)
        for _ in range(10):
            unary = core.softmax_probmaps(rng.normal(0, 3, (4, 5, 5)))
            inst = crf.CrfInstance(unary, random_image(rng, 5, 5), params)
            for iters in (0, 1, 4, 10):
                q = crf.mean_field_infer(inst, iters)
                assert np.abs(q - unary).max() <= 1e-9


def test_gradient_checks_all_stages():
    rng = np.random.default_rng(3)
    with criterion("gradient checks (10 fixtures, all stages)", budget_s=10):
        for k in range(10):
            img = random_image(rng, 2, 2)
            mask = rng.integers(0, 3, (2, 2), dtype=np.uint8)
            params = gating.ToyModelParams.init_random(3, seed=k)
            trunk = gating.grad_check(params, img, mask, lam=0.0, gated=False,
                                      tol=1e-5, names=("trunk_w", "trunk_b"))
            assert trunk.passed, f"trunk stage: {trunk.max_rel_error:.2e}"
            enc = gating.grad_check(params, img, mask, lam=1.0, seg_weight=0.0,
                                    tol=1e-4,
                                    names=("fc1_w", "fc1_b", "fc2_w", "fc2_b"))
            assert enc.passed, f"encoder stage: {enc.max_rel_error:.2e}"
            full = gating.grad_check(params, img, mask, lam=1.0, tol=1e-4)
            assert full.passed, f"joint stage: {full.max_rel_error:.2e}"


def test_gating_semantics():
    rng = np.random.default_rng(17)
    with criterion("gating semantics (identity, zero gate, argmax)"):
        for _ in range(100):
            L = int(rng.integers(2, 6))
            f = rng.normal(0, 1, (L, 4, 4))
            assert np.array_equal(gating.gate_heatmaps(f, np.ones(L)), f)

            nonneg = rng.uniform(0, 1, (L, 4, 4))
            g = rng.uniform(0.2, 1.0, L)
            k = int(rng.integers(0, L))
            g[k] = 0.0
            winners = gating.gate_heatmaps(nonneg, g).argmax(axis=0)
            others_positive = (np.delete(nonneg * g[:, None, None], k, axis=0)
                               > 0).any(axis=0)
            assert not (winners[others_positive] == k).any()

            c = float(rng.uniform(0.05, 5.0))
            uniform = gating.gate_heatmaps(f, np.full(L, c))
            assert np.array_equal(uniform.argmax(axis=0), f.argmax(axis=0))


ABLATION_CRF = crf.CrfParams(1.0, 1.0, 4.0, 30.0, 1.5)
# Frozen reference mean IoUs for the seeds below, +-1%.
ABLATION_EXPECTED = {"unary": 0.5291, "gated": 0.7228, "gated_crf": 1.0}


def test_synthetic_ablation_strictly_improves():
    """Unary -> +gate -> +gate+CRF, mirroring the ablation row structure."""
    with criterion("synthetic ablation: unary < +gate < +gate+CRF",
                   budget_s=300):
        scenes = make_outfit_dataset(40, size=24, seed=5)
        train = [(s.image, s.mask) for s in scenes[:24]]
        val = [(s.image, s.mask) for s in scenes[24:32]]
        schedule = gating.TrainSchedule(lr=1.0, epochs_a=150, epochs_b=400,
                                        epochs_c=150, lam=1.0, seed=0)
        params, history = gating.train_staged(train, val, 4, schedule)
        assert history["val"]["C"]["seg_gated"] <= history["val"]["A"]["seg_ungated"]

        test_scenes = make_outfit_dataset(10, size=24, seed=77)
        gts = [s.mask for s in test_scenes]
        heats = [corrupt_heatmaps(s.mask, 4, noise_sigma=0.5, seed=100 + i)
                 for i, s in enumerate(test_scenes)]

        unary_preds, gate_preds, crf_preds = [], [], []
        for s, h in zip(test_scenes, heats):
            unary_preds.append(crf.decode_map(core.softmax_probmaps(h)))
            g, _ = gating.encoder_forward(gating.extract_features(s.image), params)
            gated = gating.gate_heatmaps(h.astype(np.float64), g)
            gate_preds.append(crf.decode_map(core.softmax_probmaps(gated)))
            inst = crf.CrfInstance(core.softmax_probmaps(gated), s.image,
                                   ABLATION_CRF)
            crf_preds.append(crf.decode_map(crf.mean_field_infer(inst, 10)))

        ious = {"unary": metrics.iou_report(unary_preds, gts, 4).mean_iou,
                "gated": metrics.iou_report(gate_preds, gts, 4).mean_iou,
                "gated_crf": metrics.iou_report(crf_preds, gts, 4).mean_iou}
        print(f"       mean IoU: unary {ious['unary']:.4f} -> "
              f"+gate {ious['gated']:.4f} -> +gate+CRF {ious['gated_crf']:.4f}")
        assert ious["unary"] < ious["gated"] < ious["gated_crf"]
        for k, expected in ABLATION_EXPECTED.items():
            assert ious[k] == pytest.approx(expected, rel=0.01), k


def test_tuner_reaches_grid_oracle():
    with criterion("tuner within 2% of 5x5 grid oracle", budget_s=600):
        items = make_striped_set(6, size=24, stripe=3, seed=9)
        grid_best = -1.0
        for s_pos in (30.0 / 9, 30.0 / 3, 30.0, 30.0 * 3, 30.0 * 9):
            for s_smooth in (3.0 / 9, 3.0 / 3, 3.0, 3.0 * 3, 3.0 * 9):
                p = crf.CrfParams(10.0, 10.0, s_pos, 10.0, s_smooth)
                grid_best = max(grid_best,
                                tune_mod.mean_iou_objective(p, items))
        result = tune_mod.tune_crf(items, crf.CrfParams(), budget=80)
        print(f"       tuner {result.objective:.4f} vs grid {grid_best:.4f} "
              f"(init {result.initial_objective:.4f})")
        assert result.objective >= 0.98 * grid_best
        assert result.objective >= result.initial_objective


def test_slic_grid_and_connectivity():
    with criterion("SLIC: grid partition, conservation, idempotence",
                   budget_s=30):
        img = np.full((64, 64, 3), 128, dtype=np.uint8)
        out = sp.compute_slic(img, sp.SlicConfig(region_size=16,
                                                 compactness=10.0))
        assert out.num_segments == 16
        for k in range(16):
            ys, xs = np.nonzero(out.ids == k)
            assert (ys.max() - ys.min() + 1) * (xs.max() - xs.min() + 1) == len(ys)
            gx, gy = k % 4, k // 4
            assert abs(xs.min() - 16 * gx) <= 1 and abs(ys.min() - 16 * gy) <= 1
            assert abs(xs.max() - (16 * gx + 15)) <= 1
            assert abs(ys.max() - (16 * gy + 15)) <= 1

        rng = np.random.default_rng(33)
        for _ in range(100):
            h = int(rng.integers(18, 33))
            w = int(rng.integers(18, 33))
            cfg = sp.SlicConfig(region_size=int(rng.integers(5, 9)))
            segs = sp.compute_slic(random_image(rng, h, w), cfg)
            assert np.bincount(segs.ids.ravel()).sum() == h * w
            once = sp.enforce_connectivity(segs, cfg)
            twice = sp.enforce_connectivity(once, cfg)
            assert np.array_equal(once.ids, twice.ids)


def test_metrics_fixtures():
    with criterion("metrics: hand-tallied fixtures and exclusion rule"):
        gt = np.zeros((4, 4), dtype=np.uint8)
        gt[1:3, 1:3] = 1
        pred = np.zeros((4, 4), dtype=np.uint8)
        pred[1, 1:3] = 1
        pred[3, 0:2] = 1
        rep = metrics.iou_report([pred], [gt], 2)
        assert rep.per_class[1].intersection == 2
        assert rep.per_class[1].union == 6
        assert rep.per_class[1].iou == pytest.approx(1 / 3)

        gts = [np.array([True, True, False]), np.array([True, False, False]),
               np.array([False, True, False]), np.array([True, False, False])]
        preds = [np.array([1.0, 1.0, 1.0]), np.array([1.0, 0.0, 0.0]),
                 np.array([1.0, 0.0, 1.0]), np.array([0.0, 0.0, 0.0])]
        outfit = metrics.outfit_report(preds, gts)
        c0 = outfit.per_class[0]
        assert (c0.tp, c0.fp, c0.fn, c0.tn) == (2, 1, 1, 0)
        assert outfit.accuracy == pytest.approx((0.5 + 0.75 + 0.5) / 3)
        assert outfit.f1 == pytest.approx((2 / 3 + 2 / 3 + 0.0) / 3)

        absent = metrics.iou_report([np.zeros((3, 3), dtype=np.uint8)],
                                    [np.zeros((3, 3), dtype=np.uint8)], 4)
        assert absent.excluded == [1, 2, 3]
        assert absent.mean_iou == 1.0


def test_retrieval_criteria():
    rng = np.random.default_rng(5)
    with criterion("retrieval: self-query, sort oracle, 256-d"):
        ids = [f"v{i:03d}" for i in range(100)]
        vecs = rng.normal(0, 1, (100, 256))
        index = retrieval.DescriptorIndex(ids, vecs)
        self_hit = retrieval.query_nearest(vecs[37], index, 1)[0]
        assert self_hit == ("v037", 0.0)

        q = rng.normal(0, 1, 256)
        got = retrieval.query_nearest(q, index, 100)
        expected = nearest_oracle(q, ids, vecs, 100)
        assert [g[0] for g in got] == [e[0] for e in expected]

        params = gating.ToyModelParams.init_random(5, seed=1)
        vec = retrieval.extract_descriptor(random_image(rng, 12, 9), params)
        assert vec.shape == (256,)


def test_formats_and_split():
    rng = np.random.default_rng(9)
    with criterion("formats: bit-exact round-trips and split sizes"):
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            stack = rng.normal(0, 2, (7, 9, 11)).astype(np.float32)
            core.save_heatmaps(tmp / "x.hmt", stack)
            assert core.load_heatmaps(tmp / "x.hmt").tobytes() == stack.tobytes()

            mask = rng.integers(0, 25, (31, 17), dtype=np.uint8)
            core.save_mask(tmp / "m.png", mask)
            assert np.array_equal(core.load_mask(tmp / "m.png"), mask)

        splits = core.split_dataset([f"i{k}" for k in range(2682)],
                                    (0.78, 0.02, 0.20), seed=0)
        sizes = (len(splits["train"]), len(splits["val"]), len(splits["test"]))
        assert sizes == (2093, 53, 536)

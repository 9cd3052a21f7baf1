import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from clothparse import cli, core, crf
from clothparse.synthetic import make_outfit_dataset, synthetic_palette


def run_cli(argv):
    """In-process invocation; returns (exit_code, SystemExit or None)."""
    try:
        return cli.main(argv), None
    except SystemExit as exc:
        return exc.code, exc


@pytest.fixture(scope="module")
def project(tmp_path_factory):
    """Synthetic outfit project: images, masks, manifest, palette, model."""
    root = tmp_path_factory.mktemp("pipeline")
    scenes = make_outfit_dataset(20, size=24, seed=5)
    splits = {"train": scenes[:12], "val": scenes[12:16], "test": scenes[16:]}
    items = []
    for split, members in splits.items():
        for i, s in enumerate(members):
            sid = f"{split}{i:02d}"
            Image.fromarray(s.image).save(root / f"{sid}.png")
            core.save_mask(root / f"{sid}_mask.png", s.mask)
            items.append(core.ManifestItem(sid, f"{sid}.png", f"{sid}_mask.png",
                                           split))
    core.save_manifest(root / "manifest.json", core.DatasetManifest(items))
    core.save_palette(root / "palette.json", synthetic_palette())
    crf.save_crf_params(root / "crf.json", crf.CrfParams(1.0, 1.0, 4.0, 30.0, 1.5))

    code, _ = run_cli(["train-toy", "--manifest", str(root / "manifest.json"),
                       "--palette", str(root / "palette.json"),
                       "--out", str(root / "model.bin"),
                       "--lr", "1.0", "--epochs-a", "100", "--epochs-b", "250",
                       "--epochs-c", "100", "--seed", "0"])
    assert code == 0
    return root


def test_help_exits_zero():
    code, exc = run_cli(["eval", "--help"])
    assert code == 0 and exc is not None


def test_unknown_flag_exits_two():
    code, _ = run_cli(["eval", "--frobnicate"])
    assert code == 2


def test_unknown_subcommand_exits_two(capsys):
    code, _ = run_cli(["transmogrify"])
    assert code == 2
    assert "usage" in capsys.readouterr().err


def test_runtime_error_exits_one(tmp_path, capsys):
    code, _ = run_cli(["gate", "--heatmaps", str(tmp_path / "missing.hmt"),
                       "--gate", str(tmp_path / "missing.json"),
                       "--out", str(tmp_path / "out.hmt")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_installed_script_smoke():
    proc = subprocess.run([sys.executable, "-m", "clothparse.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "clothparse" in proc.stdout


def test_full_pipeline_regression(project, tmp_path):
    """infer-toy -> gate -> crf-refine -> eval on the synthetic test split."""
    out = tmp_path
    manifest = core.load_manifest(project / "manifest.json")
    for item in manifest.subset("test"):
        img = project / item.image
        hm = out / f"{item.id}.hmt"
        gate = out / f"{item.id}.gate.json"
        code, _ = run_cli(["infer-toy", "--model", str(project / "model.bin"),
                           "--image", str(img), "--out-heatmaps", str(hm),
                           "--out-gate", str(gate)])
        assert code == 0
        gated = out / f"{item.id}.gated.hmt"
        code, _ = run_cli(["gate", "--heatmaps", str(hm), "--gate", str(gate),
                           "--out", str(gated)])
        assert code == 0
        code, _ = run_cli(["crf-refine", "--heatmaps", str(gated),
                           "--image", str(img),
                           "--params", str(project / "crf.json"),
                           "--iterations", "10",
                           "--out-heatmaps", str(out / f"{item.id}.q.hmt"),
                           "--out-mask", str(out / f"{item.id}.png")])
        assert code == 0

    report_path = out / "report.json"
    code, _ = run_cli(["eval", "--manifest", str(project / "manifest.json"),
                       "--palette", str(project / "palette.json"),
                       "--pred-dir", str(out), "--split", "test",
                       "--out", str(report_path)])
    assert code == 0
    report = json.loads(report_path.read_text())
    mean_iou = report["segmentation"]["mean_iou"]
    # frozen regression value for this seed and schedule, +-1%
    assert mean_iou == pytest.approx(0.8024, rel=0.01)
    assert report["segmentation"]["pixel_accuracy"] == pytest.approx(0.9379, rel=0.01)
    assert report["outfit"]["accuracy"] >= 0.75


def test_refined_heatmaps_are_log_marginals(project, tmp_path):
    manifest = core.load_manifest(project / "manifest.json")
    item = manifest.subset("test")[0]
    hm = tmp_path / "raw.hmt"
    gate = tmp_path / "gate.json"
    run_cli(["infer-toy", "--model", str(project / "model.bin"),
             "--image", str(project / item.image),
             "--out-heatmaps", str(hm), "--out-gate", str(gate)])
    run_cli(["crf-refine", "--heatmaps", str(hm), "--image",
             str(project / item.image), "--iterations", "3",
             "--out-heatmaps", str(tmp_path / "q.hmt"),
             "--out-mask", str(tmp_path / "m.png")])
    log_q = core.load_heatmaps(tmp_path / "q.hmt").astype(np.float64)
    q = np.exp(log_q)
    np.testing.assert_allclose(q.sum(axis=0), 1.0, atol=1e-3)
    mask = core.load_mask(tmp_path / "m.png")
    assert np.array_equal(mask, q.argmax(axis=0).astype(np.uint8))


def test_gate_vector_json_format(project, tmp_path):
    manifest = core.load_manifest(project / "manifest.json")
    item = manifest.subset("test")[0]
    gate_path = tmp_path / "gate.json"
    run_cli(["infer-toy", "--model", str(project / "model.bin"),
             "--image", str(project / item.image),
             "--out-heatmaps", str(tmp_path / "h.hmt"),
             "--out-gate", str(gate_path)])
    gate = json.loads(gate_path.read_text())["gate"]
    assert len(gate) == 4
    assert all(0 < g < 1 for g in gate)


def test_slic_command_fixture_format(project, tmp_path):
    manifest = core.load_manifest(project / "manifest.json")
    item = manifest.subset("test")[0]
    out = tmp_path / "sp.json"
    code, _ = run_cli(["slic", "--image", str(project / item.image),
                       "--region-size", "8", "--out", str(out),
                       "--overlay", str(tmp_path / "overlay.png")])
    assert code == 0
    data = json.loads(out.read_text())
    assert data["width"] == 24 and data["height"] == 24
    assert len(data["ids"]) == 24 * 24
    assert max(data["ids"]) + 1 == data["num_segments"]
    assert (tmp_path / "overlay.png").exists()


def test_index_and_retrieve_roundtrip(project, tmp_path):
    index_path = tmp_path / "index.hmt"
    code, _ = run_cli(["index", "--model", str(project / "model.bin"),
                       "--manifest", str(project / "manifest.json"),
                       "--split", "train", "--out", str(index_path)])
    assert code == 0
    manifest = core.load_manifest(project / "manifest.json")
    query = manifest.subset("train")[0]
    proc_out = []

    import io
    from contextlib import redirect_stdout

    buf = io.StringIO()
    with redirect_stdout(buf):
        code, _ = run_cli(["retrieve", "--model", str(project / "model.bin"),
                           "--query", str(project / query.image),
                           "--index", str(index_path), "-k", "3"])
    assert code == 0
    lines = buf.getvalue().strip().splitlines()
    assert len(lines) == 3
    first_id, first_dist = lines[0].split("\t")
    assert first_id == query.id
    assert float(first_dist) == pytest.approx(0.0, abs=1e-6)


def test_train_test_discrepancy_measurement(project, tmp_path):
    """Scoring both splits with the same pipeline exposes the overfitting gap."""
    results = {}
    for split in ("train", "test"):
        pred_dir = tmp_path / split
        pred_dir.mkdir()
        manifest = core.load_manifest(project / "manifest.json")
        for item in manifest.subset(split):
            img = project / item.image
            run_cli(["infer-toy", "--model", str(project / "model.bin"),
                     "--image", str(img),
                     "--out-heatmaps", str(pred_dir / "h.hmt"),
                     "--out-gate", str(pred_dir / "g.json")])
            run_cli(["gate", "--heatmaps", str(pred_dir / "h.hmt"),
                     "--gate", str(pred_dir / "g.json"),
                     "--out", str(pred_dir / "gh.hmt")])
            run_cli(["crf-refine", "--heatmaps", str(pred_dir / "gh.hmt"),
                     "--image", str(img),
                     "--params", str(project / "crf.json"),
                     "--out-heatmaps", str(pred_dir / "q.hmt"),
                     "--out-mask", str(pred_dir / f"{item.id}.png")])
        out = tmp_path / f"{split}.json"
        code, _ = run_cli(["eval", "--manifest", str(project / "manifest.json"),
                           "--palette", str(project / "palette.json"),
                           "--pred-dir", str(pred_dir), "--split", split,
                           "--label", split, "--out", str(out)])
        assert code == 0
        results[split] = json.loads(out.read_text())["segmentation"]["mean_iou"]
    # the gap itself is data/seed dependent; what matters is that both splits
    # are measurable with the same artifacts and the numbers are sane
    assert 0 < results["test"] <= 1 and 0 < results["train"] <= 1
    assert results["train"] >= results["test"] - 0.05


def test_tune_command(project, tmp_path):
    # Heatmaps for the val split from the trained model.
    hm_dir = tmp_path / "heat"
    hm_dir.mkdir()
    manifest = core.load_manifest(project / "manifest.json")
    for item in manifest.subset("val"):
        run_cli(["infer-toy", "--model", str(project / "model.bin"),
                 "--image", str(project / item.image),
                 "--out-heatmaps", str(hm_dir / f"{item.id}.hmt"),
                 "--out-gate", str(hm_dir / f"{item.id}.gate.json")])
    out = tmp_path / "tuned.json"
    code, _ = run_cli(["tune", "--manifest", str(project / "manifest.json"),
                       "--heatmap-dir", str(hm_dir), "--split", "val",
                       "--initial", str(project / "crf.json"),
                       "--budget", "10", "--iterations", "3",
                       "--out", str(out)])
    assert code == 0
    tuned = crf.load_crf_params(out)
    assert tuned.sigma_smooth > 0

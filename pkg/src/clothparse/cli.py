"""Command line entry point.

Subcommands compose through files (HMT1 heatmaps, PNG masks, JSON), so the
whole pipeline is ``infer-toy -> gate -> crf-refine -> eval`` and each stage
can be swapped or inspected independently.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import core, crf, gating, metrics, retrieval, superpixel, tune


def _load_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _manifest_items(manifest_path, split):
    manifest = core.load_manifest(manifest_path)
    base = Path(manifest_path).parent
    for it in manifest.subset(split):
        img = Path(it.image) if Path(it.image).is_absolute() else base / it.image
        msk = Path(it.mask) if Path(it.mask).is_absolute() else base / it.mask
        yield it.id, img, msk


def _cmd_train_toy(args) -> int:
    palette = core.load_palette(args.palette)
    L = palette.num_labels

    def load_split(split):
        return [(_load_image(img), core.load_mask(msk, L))
                for _, img, msk in _manifest_items(args.manifest, split)]

    schedule = gating.TrainSchedule(lr=args.lr, epochs_a=args.epochs_a,
                                    epochs_b=args.epochs_b, epochs_c=args.epochs_c,
                                    lam=args.lam, seed=args.seed)
    params, history = gating.train_staged(load_split("train"), load_split("val"),
                                          L, schedule)
    gating.save_model(args.out, params)
    print(json.dumps({"val": history["val"]}, indent=2))
    return 0


def _cmd_infer_toy(args) -> int:
    params = gating.load_model(args.model)
    image = _load_image(args.image)
    features = gating.extract_features(image)
    heatmaps = gating.trunk_forward(features, params)
    gate, _ = gating.encoder_forward(features, params)
    core.save_heatmaps(args.out_heatmaps, heatmaps.astype(np.float32))
    with open(args.out_gate, "w", encoding="utf-8") as fh:
        json.dump({"gate": [float(g) for g in gate]}, fh)
        fh.write("\n")
    return 0


def _cmd_gate(args) -> int:
    heatmaps = core.load_heatmaps(args.heatmaps)
    with open(args.gate, "r", encoding="utf-8") as fh:
        gate = np.array(json.load(fh)["gate"], dtype=np.float64)
    gated = gating.gate_heatmaps(heatmaps.astype(np.float64), gate)
    core.save_heatmaps(args.out, gated.astype(np.float32))
    return 0


def _cmd_crf_refine(args) -> int:
    heatmaps = core.load_heatmaps(args.heatmaps)
    image = _load_image(args.image)
    params = crf.load_crf_params(args.params) if args.params else crf.CrfParams()
    q, labeling = crf.refine(heatmaps, image, params, args.iterations, args.mode)
    log_q = np.log(np.maximum(q, crf.UNARY_EPS)).astype(np.float32)
    core.save_heatmaps(args.out_heatmaps, log_q)
    core.save_mask(args.out_mask, labeling)
    return 0


def _cmd_tune(args) -> int:
    items = []
    for item_id, img, msk in _manifest_items(args.manifest, args.split):
        hm = Path(args.heatmap_dir) / f"{item_id}.hmt"
        items.append((core.load_heatmaps(hm), _load_image(img),
                      core.load_mask(msk), item_id))
    initial = crf.load_crf_params(args.initial) if args.initial else crf.CrfParams()
    result = tune.tune_crf(items, initial, budget=args.budget,
                           iterations=args.iterations, mode=args.mode)
    crf.save_crf_params(args.out, result.params)
    print(json.dumps({"objective": result.objective,
                      "initial_objective": result.initial_objective,
                      "evaluations": result.evaluations}, indent=2))
    return 0


def _cmd_eval(args) -> int:
    palette = core.load_palette(args.palette)
    L = palette.num_labels
    preds, gts = [], []
    pred_presence, gt_presence = [], []
    for item_id, _, msk in _manifest_items(args.manifest, args.split):
        pred_path = Path(args.pred_dir) / f"{item_id}.png"
        pred = core.load_mask(pred_path, L)
        gt = core.load_mask(msk, L)
        preds.append(pred)
        gts.append(gt)
        pred_presence.append(core.presence_vector(pred, L).astype(float))
        gt_presence.append(core.presence_vector(gt, L))

    iou = metrics.iou_report(preds, gts, palette)
    outfit = metrics.outfit_report(pred_presence, gt_presence, args.threshold)
    report = {"segmentation": iou.to_dict(), "outfit": outfit.to_dict()}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")

    print(f"{'method':<12} {'Acc':>8} {'IoU':>8}")
    print(f"{args.label:<12} {100 * iou.pixel_accuracy:>8.2f} "
          f"{100 * iou.mean_iou:>8.2f}")
    return 0


def _cmd_retrieve(args) -> int:
    params = gating.load_model(args.model)
    index = retrieval.DescriptorIndex.load(args.index)
    query = retrieval.extract_descriptor(_load_image(args.query), params)
    for id_, dist in retrieval.query_nearest(query, index, args.k):
        print(f"{id_}\t{dist:.6f}")
    return 0


def _cmd_index(args) -> int:
    params = gating.load_model(args.model)
    entries = []
    for item_id, img, _ in _manifest_items(args.manifest, args.split):
        entries.append((item_id, retrieval.extract_descriptor(_load_image(img), params)))
    retrieval.DescriptorIndex.build(entries).save(args.out)
    print(f"indexed {len(entries)} images")
    return 0


def _cmd_slic(args) -> int:
    image = _load_image(args.image)
    cfg = superpixel.SlicConfig(region_size=args.region_size,
                                compactness=args.compactness,
                                iterations=args.iterations)
    sp = superpixel.slic(image, cfg)
    payload = {"width": image.shape[1], "height": image.shape[0],
               "region_size": args.region_size, "compactness": args.compactness,
               "iterations": args.iterations,
               "num_segments": sp.num_segments,
               "ids": [int(v) for v in sp.ids.ravel()]}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")
    if args.overlay:
        overlay = image.copy()
        overlay[superpixel.boundary_mask(sp)] = (255, 255, 0)
        Image.fromarray(overlay).save(args.overlay)
    return 0


def _cmd_serve(args) -> int:
    from .service import run_server

    run_server(args.dir, args.palette, port=args.port, host=args.host,
               serve_empty_masks=args.empty_masks, ui_dir=args.ui_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clothparse",
                                     description="Clothing parsing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-toy", help="staged training of the desk-scale model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--palette", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs-a", type=int, default=200)
    p.add_argument("--epochs-b", type=int, default=200)
    p.add_argument("--epochs-c", type=int, default=200)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("infer-toy", help="emit heatmaps and gate vector for one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out-heatmaps", required=True)
    p.add_argument("--out-gate", required=True)
    p.set_defaults(func=_cmd_infer_toy)

    p = sub.add_parser("gate", help="apply a gate vector to an HMT1 file")
    p.add_argument("--heatmaps", required=True)
    p.add_argument("--gate", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gate)

    p = sub.add_parser("crf-refine", help="mean-field refinement of heatmaps")
    p.add_argument("--heatmaps", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--params", default=None, help="CrfParams JSON")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--mode", choices=("parallel", "sequential"), default="parallel")
    p.add_argument("--out-heatmaps", required=True, help="refined log-marginals")
    p.add_argument("--out-mask", required=True)
    p.set_defaults(func=_cmd_crf_refine)

    p = sub.add_parser("tune", help="search CRF parameters on a validation split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--heatmap-dir", required=True)
    p.add_argument("--split", default="val")
    p.add_argument("--initial", default=None, help="starting CrfParams JSON")
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--mode", choices=("parallel", "sequential"), default="parallel")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("eval", help="score predicted masks against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--palette", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--label", default="model", help="row label for the text table")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("index", help="build a descriptor index from a manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("retrieve", help="nearest neighbours of a query image")
    p.add_argument("--model", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("-k", type=int, default=5)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("slic", help="superpixels for one image as JSON")
    p.add_argument("--image", required=True)
    p.add_argument("--region-size", type=int, default=16)
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", default=None, help="optional boundary overlay PNG")
    p.set_defaults(func=_cmd_slic)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--dir", required=True)
    p.add_argument("--palette", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--empty-masks", action="store_true",
                   help="serve an all-background mask instead of 404")
    p.add_argument("--ui-dir", default=None)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

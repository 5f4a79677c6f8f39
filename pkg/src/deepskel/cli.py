"""Command-line surface binding the library modules into pipelines.

Subcommands: gen-data, make-gt, train, infer, eval, partseg,
rescore-boxes. Each reads an optional JSON config (unknown keys are
errors) with individual flags taking precedence. Exit codes: 0 success,
2 validation error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import applications, data, evaluation, geometry, inference, net, synth, trainer
from .errors import DataFormat, IOFailure
from .fileio import (load_checkpoint, read_f32map, read_mask, read_pgm,
                     write_f32map, write_mask)


def _load_config(path, allowed: set[str]) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise IOFailure(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataFormat(f"config {path}: invalid JSON: {e}") from e
    unknown = set(doc) - allowed
    if unknown:
        raise DataFormat(f"config {path}: unknown keys {sorted(unknown)}")
    return doc


def _merged(args, keys: set[str]) -> dict:
    cfg = _load_config(args.config, keys)
    for key in keys:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            cfg[key] = value
    return cfg


def _network_from_dir(model_dir: Path) -> net.Model:
    config = net.config_from_json((model_dir / "network.json").read_text())
    arrays, _ = load_checkpoint(model_dir / "final.ckpt")
    model = net.init_model(config)
    model.load_state(arrays)
    return model


def cmd_gen_data(args) -> int:
    keys = {"out_dir", "image_size", "families", "num_images",
            "shapes_per_image", "half_width_range", "half_width_sampling",
            "seed", "train_fraction"}
    cfg = _merged(args, keys)
    if "out_dir" not in cfg:
        raise DataFormat("gen-data requires out_dir")
    spec = synth.SyntheticSpec(
        image_size=int(cfg.get("image_size", 128)),
        families=tuple(cfg.get("families", ["capsule", "composite"])),
        num_images=int(cfg.get("num_images", 250)),
        shapes_per_image=int(cfg.get("shapes_per_image", 2)),
        half_width_range=tuple(cfg.get("half_width_range", [2.0, 35.0])),
        half_width_sampling=str(cfg.get("half_width_sampling", "uniform")),
        seed=int(cfg.get("seed", 0)))
    manifest = synth.gen_synthetic(spec, cfg["out_dir"],
                                   float(cfg.get("train_fraction", 0.8)))
    print(f"wrote {len(manifest['entries'])} samples to {cfg['out_dir']}")
    return 0


def cmd_make_gt(args) -> int:
    keys = {"masks_dir", "out_dir", "receptive_fields", "margin", "strict"}
    cfg = _merged(args, keys)
    for req in ("masks_dir", "out_dir"):
        if req not in cfg:
            raise DataFormat(f"make-gt requires {req}")
    sched = geometry.ReceptiveFieldSchedule(
        r=tuple(cfg.get("receptive_fields", [14, 40, 92, 196])),
        margin=float(cfg.get("margin", 1.2)))
    strict = bool(cfg.get("strict", True))
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    mask_paths = sorted(Path(cfg["masks_dir"]).glob("*.pgm"))
    if not mask_paths:
        raise DataFormat(f"no .pgm masks in {cfg['masks_dir']}")
    for path in mask_paths:
        mask = read_mask(path)
        scale_map = geometry.compute_scale_map(mask)
        z = geometry.quantize_map(scale_map, sched, strict=strict)
        write_f32map(out_dir / f"{path.stem}.scale.f32map", scale_map)
        write_f32map(out_dir / f"{path.stem}.quant.f32map", z.astype(np.float32))
    print(f"wrote groundtruth for {len(mask_paths)} masks to {out_dir}")
    return 0


_TRAIN_KEYS = {"dataset", "out_dir", "head_mode", "head_lr_mult",
               "iterations", "batch_size", "learning_rate", "momentum",
               "weight_decay", "seed", "checkpoint_every", "augment",
               "network", "progress_every"}


def cmd_train(args) -> int:
    cfg = _merged(args, _TRAIN_KEYS)
    for req in ("dataset", "out_dir"):
        if req not in cfg:
            raise DataFormat(f"train requires {req}")
    if "network" in cfg:
        config = net.config_from_json(Path(cfg["network"]).read_text())
    else:
        config = net.toy_config(
            head_mode=cfg.get("head_mode", "scale"),
            head_lr_mult=float(cfg.get("head_lr_mult", 1.0)))
    model = net.init_model(config, seed=int(cfg.get("seed", 0)))
    manifest = synth.load_manifest(cfg["dataset"])
    augment = geometry.AugmentSpec() if cfg.get("augment") else None
    dataset = data.load_split(manifest, "train", model.schedule, augment)
    tc = trainer.TrainConfig(
        batch_size=int(cfg.get("batch_size", 10)),
        learning_rate=float(cfg.get("learning_rate", 1e-6)),
        momentum=float(cfg.get("momentum", 0.9)),
        weight_decay=float(cfg.get("weight_decay", 2e-4)),
        max_iterations=int(cfg.get("iterations", 20000)),
        seed=int(cfg.get("seed", 0)),
        checkpoint_every=int(cfg.get("checkpoint_every", 0)))
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "network.json").write_text(net.config_to_json(config))
    trainer.train(model, dataset, tc, log_path=out_dir / "train.jsonl",
                  checkpoint_dir=out_dir,
                  progress=int(cfg.get("progress_every", 0)) or None)
    print(f"trained {tc.max_iterations} iterations, model in {out_dir}")
    return 0


def cmd_infer(args) -> int:
    keys = {"model_dir", "dataset", "split", "out_dir", "thin", "smooth",
            "threshold"}
    cfg = _merged(args, keys)
    for req in ("model_dir", "dataset", "out_dir"):
        if req not in cfg:
            raise DataFormat(f"infer requires {req}")
    model = _network_from_dir(Path(cfg["model_dir"]))
    manifest = synth.load_manifest(cfg["dataset"])
    split = cfg.get("split", "test")
    root = Path(manifest["root"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for entry in manifest["entries"]:
        if entry.get("split") != split:
            continue
        name = Path(entry["image"]).stem
        if entry["image"].endswith(".f32map"):
            image = read_f32map(root / entry["image"]).astype(np.float32)
        else:
            image = read_pgm(root / entry["image"]).astype(np.float32) / 255.0
        response, scale = inference.predict(model, image[None])
        if cfg.get("thin", True):
            response = inference.smooth_and_thin(
                response, smooth=float(cfg.get("smooth", 0.0)))
        write_f32map(out_dir / f"{name}.resp.f32map", response)
        if scale is not None:
            write_f32map(out_dir / f"{name}.scale.f32map", scale)
        if cfg.get("threshold") is not None:
            write_mask(out_dir / f"{name}.skel.pgm",
                       inference.threshold(response, float(cfg["threshold"])))
        count += 1
    if not count:
        raise DataFormat(f"no entries in split {split!r}")
    print(f"wrote predictions for {count} images to {out_dir}")
    return 0


def cmd_eval(args) -> int:
    keys = {"pred_dir", "dataset", "split", "report", "tolerance", "curve_csv"}
    cfg = _merged(args, keys)
    for req in ("pred_dir", "dataset"):
        if req not in cfg:
            raise DataFormat(f"eval requires {req}")
    manifest = synth.load_manifest(cfg["dataset"])
    split = cfg.get("split", "test")
    root = Path(manifest["root"])
    match_cfg = evaluation.MatchConfig(
        tolerance=float(cfg.get("tolerance", 0.0075)))
    responses, gts = [], []
    for entry in manifest["entries"]:
        if entry.get("split") != split:
            continue
        name = Path(entry["image"]).stem
        responses.append(read_f32map(Path(cfg["pred_dir"]) / f"{name}.resp.f32map"))
        gts.append(read_f32map(root / entry["scale_map"]) > 0)
    if not responses:
        raise DataFormat(f"no entries in split {split!r}")
    curve = evaluation.pr_curve(responses, gts, cfg=match_cfg)
    best_f, best_t = evaluation.max_f(curve)
    report = {"split": split, "num_images": len(responses),
              "max_f": best_f, "best_threshold": best_t}
    text = json.dumps(report, indent=2)
    if cfg.get("report"):
        Path(cfg["report"]).write_text(text)
    if cfg.get("curve_csv"):
        lines = ["threshold,precision,recall"]
        lines += [f"{t},{p},{r}" for t, p, r in
                  zip(curve.thresholds, curve.precision, curve.recall)]
        Path(cfg["curve_csv"]).write_text("\n".join(lines) + "\n")
    print(text)
    return 0


def cmd_partseg(args) -> int:
    keys = {"response", "scale_map", "out_dir", "nms_threshold", "smooth"}
    cfg = _merged(args, keys)
    for req in ("response", "scale_map", "out_dir"):
        if req not in cfg:
            raise DataFormat(f"partseg requires {req}")
    response = read_f32map(cfg["response"])
    scale_map = read_f32map(cfg["scale_map"])
    thinned = inference.smooth_and_thin(
        response, smooth=float(cfg.get("smooth", 0.0)))
    binary = inference.threshold(thinned, float(cfg.get("nms_threshold", 0.5)))
    segments = applications.extract_segments(binary, scale_map, response)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for idx, seg in enumerate(segments):
        part = applications.reconstruct_part_mask(seg, response.shape)
        name = f"part{idx:03d}.pgm"
        write_mask(out_dir / name, part.mask)
        records.append({"mask": name, "confidence": part.confidence,
                        "num_pixels": int(len(seg.pixels))})
    (out_dir / "parts.json").write_text(json.dumps(records, indent=2))
    print(f"wrote {len(records)} part masks to {out_dir}")
    return 0


def cmd_rescore_boxes(args) -> int:
    keys = {"boxes", "parts_dir", "out", "epsilon"}
    cfg = _merged(args, keys)
    for req in ("boxes", "parts_dir", "out"):
        if req not in cfg:
            raise DataFormat(f"rescore-boxes requires {req}")
    boxes = []
    for line in Path(cfg["boxes"]).read_text().splitlines():
        if line.strip():
            try:
                boxes.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DataFormat(f"bad box record {line!r}: {e}") from e
    parts_dir = Path(cfg["parts_dir"])
    records = json.loads((parts_dir / "parts.json").read_text())
    masks = [read_mask(parts_dir / rec["mask"]) for rec in records]
    rescored = applications.objectness_rescore(
        boxes, masks, epsilon=float(cfg.get("epsilon", 1e-6)))
    with open(cfg["out"], "w") as f:
        for box in rescored:
            f.write(json.dumps(box) + "\n")
    print(f"rescored {len(rescored)} boxes -> {cfg['out']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepskel",
        description="skeleton extraction pipelines (synthetic data, "
                    "groundtruth, training, inference, evaluation)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, flags):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        for flag, kw in flags.items():
            p.add_argument(f"--{flag}", **kw)
        p.set_defaults(fn=fn)

    add("gen-data", cmd_gen_data, {
        "out-dir": {}, "image-size": {"type": int}, "num-images": {"type": int},
        "shapes-per-image": {"type": int}, "half-width-sampling": {},
        "seed": {"type": int}, "train-fraction": {"type": float}})
    add("make-gt", cmd_make_gt, {
        "masks-dir": {}, "out-dir": {}, "margin": {"type": float}})
    add("train", cmd_train, {
        "dataset": {}, "out-dir": {}, "head-mode": {},
        "head-lr-mult": {"type": float}, "iterations": {"type": int},
        "batch-size": {"type": int}, "learning-rate": {"type": float},
        "seed": {"type": int}, "network": {}, "progress-every": {"type": int}})
    add("infer", cmd_infer, {
        "model-dir": {}, "dataset": {}, "split": {}, "out-dir": {},
        "smooth": {"type": float}, "threshold": {"type": float}})
    add("eval", cmd_eval, {
        "pred-dir": {}, "dataset": {}, "split": {}, "report": {},
        "tolerance": {"type": float}, "curve-csv": {}})
    add("partseg", cmd_partseg, {
        "response": {}, "scale-map": {}, "out-dir": {},
        "nms-threshold": {"type": float}, "smooth": {"type": float}})
    add("rescore-boxes", cmd_rescore_boxes, {
        "boxes": {}, "parts-dir": {}, "out": {}, "epsilon": {"type": float}})
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (DataFormat, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - runtime failures exit 1
        print(f"failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

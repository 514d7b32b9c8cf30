"""Batch entry points: ``lungscan segment | train | evaluate | overlay``.

Exit codes: 0 success, 1 partial failure (some scans failed), 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import volume_io
from .backends import load_backends
from .config import RunConfig, dump_config, load_config
from .data import Label
from .errors import ConfigError, LungscanError
from .metrics import ConfusionCounts, classification_report
from .segmentation import load_segmentation_masks, mask_path, segment_volume, write_segmentation

log = logging.getLogger("lungscan")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
OVERLAY_GUTTER = 8


class UsageError(Exception):
    pass


def _overrides(args, mapping: dict[str, str]) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for attr, dotted in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[dotted] = value
    return out


def _resolve(args, mapping) -> RunConfig:
    return load_config(args.config, _overrides(args, mapping))


def _write_echo(cfg: RunConfig, out_root: Path) -> None:
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "run_config.ini").write_text(dump_config(cfg))


# ---------------------------------------------------------------- segment

def cmd_segment(args) -> int:
    cfg = _resolve(args, {
        "data_root": "run.data_root", "output_root": "run.output_root", "backend": "run.backend",
        "fake_config": "run.fake_config", "workers": "run.workers",
    })
    data_root = Path(cfg.run.data_root) if cfg.run.data_root else None
    if data_root is None or not data_root.is_dir():
        raise UsageError(f"data root does not exist: {cfg.run.data_root or '(unset)'}")
    if not cfg.run.output_root:
        raise UsageError("output root is not set")
    out_root = Path(cfg.run.output_root)
    scan_ids = args.scans or sorted((p.name for p in data_root.iterdir() if p.is_dir()), key=volume_io.natural_key)
    if not scan_ids:
        raise UsageError(f"no scan directories under {data_root}")
    segmenter, embedder = load_backends(cfg.run.backend, cfg.run.fake_config or None)
    _write_echo(cfg, out_root)

    failures = {}
    for scan_id in scan_ids:
        try:
            vol = volume_io.load_scan(data_root / scan_id)
            seg = segment_volume(vol, segmenter, embedder, cfg.pipeline, workers=cfg.run.workers)
            write_segmentation(out_root, seg)
            print(f"{scan_id}: {len(seg.masks)} slices, {len(seg.flagged)} flagged")
        except (LungscanError, OSError) as exc:
            failures[scan_id] = str(exc)
            print(f"{scan_id}: FAILED {exc}", file=sys.stderr)
    if failures:
        (out_root / "errors.json").write_text(json.dumps(failures, indent=2, sort_keys=True) + "\n")
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------- train / evaluate

def _prepared(manifest_path, cfg: RunConfig, masks_root, unsegmented: bool, need_labels: bool):
    from .racnet import prepare_scan

    if not Path(manifest_path).is_file():
        raise UsageError(f"manifest not found: {manifest_path}")
    manifests = volume_io.read_manifest(manifest_path)
    if not manifests:
        raise UsageError(f"manifest {manifest_path} lists no scans")
    if need_labels:
        for vm in manifests:
            if vm.label is None:
                raise UsageError(f"scan {vm.scan_id} has no label")
    if not unsegmented and not masks_root:
        raise UsageError("--masks-root is required unless --unsegmented is given")
    out = []
    for vm in manifests:
        vol = vm.load()
        masks = None
        if not unsegmented:
            missing = [i for i in range(vol.l) if not mask_path(masks_root, vm.scan_id, i).is_file()]
            if missing:
                raise UsageError(f"scan {vm.scan_id}: no mask for slices {missing[:5]} under {masks_root}")
            masks = load_segmentation_masks(masks_root, vm.scan_id, vol.l)
        out.append(prepare_scan(vol, masks, cfg.racnet))
    return out


_TRAIN_FLAGS = {
    "output_root": "run.output_root", "seed": "train.seed", "steps": "train.steps",
    "lr": "train.lr", "batch_size": "train.batch_size",
}


def cmd_train(args) -> int:
    import torch

    from .racnet import build_model, fit, save_checkpoint

    cfg = _resolve(args, _TRAIN_FLAGS)
    if not cfg.run.output_root:
        raise UsageError("output root is not set")
    out_root = Path(cfg.run.output_root)
    samples = _prepared(args.manifest, cfg, args.masks_root, args.unsegmented, need_labels=True)
    torch.use_deterministic_algorithms(True)
    model = build_model(cfg.racnet, seed=cfg.train.seed)
    _write_echo(cfg, out_root)
    losses = fit(model, samples, cfg.train, log_path=out_root / "train_log.jsonl")
    save_checkpoint(model, out_root / "checkpoint.safetensors",
                    extra={"unsegmented": bool(args.unsegmented), "steps": cfg.train.steps})
    if losses:
        print(f"trained {len(losses)} steps on {len(samples)} scans: loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .racnet import load_checkpoint, predict

    cfg = _resolve(args, {"output_root": "run.output_root"})
    if not Path(args.checkpoint).is_file():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    model = load_checkpoint(args.checkpoint, expect=cfg.racnet)
    samples = _prepared(args.manifest, cfg, args.masks_root, args.unsegmented, need_labels=True)
    probs = predict(model, samples)
    y_true = [int(s.label) for s in samples]
    y_pred = [int(np.argmax(p)) for p in probs]
    classes = list(Label)[: cfg.racnet.num_classes]
    counts = ConfusionCounts.from_predictions([Label(y) for y in y_true], [Label(y) for y in y_pred], classes)
    report = classification_report(counts, classes)
    out_root = Path(cfg.run.output_root) if cfg.run.output_root else Path(args.checkpoint).parent
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    with open(out_root / "predictions.jsonl", "w") as fh:
        for s, p, yp in zip(samples, probs, y_pred):
            fh.write(json.dumps({
                "scan_id": s.scan_id,
                "probabilities": [float(x) for x in p],
                "predicted": Label(yp).name,
                "true": s.label.name,
            }, sort_keys=True) + "\n")
    print(f"macro F1 {report['macro_f1']:.2f}")
    for name, row in report["classes"].items():
        flag = f" (degenerate: {', '.join(row['degenerate'])})" if row["degenerate"] else ""
        print(f"  {name}: P {row['precision']:.2f} S {row['sensitivity']:.2f} F1 {row['f1']:.2f}{flag}")
    return EXIT_OK


# ---------------------------------------------------------------- overlay

def overlay_panel(slice_pixels: np.ndarray, mask_bits: np.ndarray, gutter: int = OVERLAY_GUTTER) -> np.ndarray:
    """Side-by-side uint8 panel: original | gutter | slice with the mask applied."""
    px = np.rint(np.clip(slice_pixels, 0, 1) * 255).astype(np.uint8)
    h, w = px.shape
    panel = np.full((h, 2 * w + gutter), 255, dtype=np.uint8)
    panel[:, :w] = px
    panel[:, w + gutter:] = np.where(mask_bits, px, 0)
    return panel


def cmd_overlay(args) -> int:
    scan_dir = Path(args.scan_dir)
    masks_dir = Path(args.masks_dir)
    if not scan_dir.is_dir():
        raise UsageError(f"scan directory not found: {scan_dir}")
    vol = volume_io.load_scan(scan_dir)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for i, s in enumerate(vol.slices):
        mp = masks_dir / f"{i}.mask.png"
        if not mp.is_file():
            log.warning("no mask for slice %d (%s), skipping", i, mp)
            continue
        m = volume_io.load_mask(mp)
        if m.shape != s.shape:
            log.warning("mask %s has shape %s, slice has %s; skipping", mp, m.shape, s.shape)
            continue
        Image.fromarray(overlay_panel(s.pixels, m.bits)).save(out / f"{i}.overlay.png")
        written += 1
    print(f"wrote {written} panels to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lungscan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("segment", parents=[common], help="segment scan directories")
    s.add_argument("scans", nargs="*", help="scan ids under the data root (default: all)")
    s.add_argument("--data-root")
    s.add_argument("--output-root")
    s.add_argument("--backend", help="fake | checkpoint:<path>")
    s.add_argument("--fake-config")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_segment)

    t = sub.add_parser("train", parents=[common], help="train the scan classifier")
    t.add_argument("--manifest", required=True)
    t.add_argument("--masks-root")
    t.add_argument("--unsegmented", action="store_true", help="train on raw slices, no masks")
    t.add_argument("--output-root")
    t.add_argument("--seed", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--masks-root")
    e.add_argument("--unsegmented", action="store_true")
    e.add_argument("--output-root")
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("overlay", parents=[common], help="write original|masked comparison panels")
    o.add_argument("--scan-dir", required=True)
    o.add_argument("--masks-dir", required=True)
    o.add_argument("--output-dir", required=True)
    o.set_defaults(func=cmd_overlay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"lungscan {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LungscanError as exc:
        print(f"lungscan {args.command}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())

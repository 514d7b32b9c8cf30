"""Synthetic chest-slice phantoms and labelled toy scans.

A phantom slice has a body disk, two elliptical lungs of different
intensity, and a bright central blob standing in for the mediastinum.
The part masks are known exactly, so fake backends can be configured from
them and the pipeline output checked by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends.base import fingerprint
from .backends.fake import FakeEmbedder, FakeSegmenter, fake_image_features, write_fake_config
from .data import Label, Mask, ScanVolume, SliceImage
from .segmentation import PipelineConfig, crop_with_mask
from .volume_io import build_manifest, read_slice, save_mask, write_manifest, write_slice

RIGHT_LUNG_LEVEL = 0.25
LEFT_LUNG_LEVEL = 0.40
BLOB_LEVEL = 0.90
BODY_LEVEL = 0.60
LESION_LEVEL = 0.75


def ellipse(shape, cy, cx, ry, rx) -> np.ndarray:
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


@dataclass
class Phantom:
    image: np.ndarray
    parts: dict[str, Mask]

    @property
    def lungs(self) -> Mask:
        return self.parts["right_lung"] | self.parts["left_lung"]


def make_phantom(h: int = 64, w: int = 96, jitter: float = 0.0, rng=None) -> Phantom:
    """Slice with right lung (image left), left lung (image right) and a central blob."""
    rng = np.random.default_rng(rng)
    j = (lambda s: 1.0 + jitter * rng.uniform(-1, 1)) if jitter else (lambda s: 1.0)
    shape = (h, w)
    body = ellipse(shape, h / 2 - 0.5, w / 2 - 0.5, 0.47 * h, 0.48 * w)
    right = ellipse(shape, 0.5 * h, 0.27 * w, 0.30 * h * j(0), 0.13 * w * j(1))
    left = ellipse(shape, 0.5 * h, 0.73 * w, 0.27 * h * j(2), 0.12 * w * j(3))
    blob = ellipse(shape, 0.5 * h, 0.5 * w, 0.12 * h, 0.06 * w) & ~right & ~left
    img = np.zeros(shape)
    img[body] = BODY_LEVEL
    img[right] = RIGHT_LUNG_LEVEL
    img[left] = LEFT_LUNG_LEVEL
    img[blob] = BLOB_LEVEL
    parts = {
        "right_lung": Mask(right),
        "left_lung": Mask(left),
        "center": Mask(blob),
        "body": Mask(body),
        "background": Mask(np.ones(shape, dtype=bool)),
    }
    return Phantom(img, parts)


def target_vectors(image, parts: dict[str, Mask], targets=("right_lung", "left_lung")) -> dict[str, np.ndarray]:
    """Fake image features of each named part's crop, used as its text vector."""
    return {t: fake_image_features(crop_with_mask(image, parts[t])) for t in targets}


def phantom_backends(phantom: Phantom, cfg: PipelineConfig | None = None,
                     order=("background", "center", "right_lung", "body", "left_lung")):
    """Fake backends whose prompts point at the phantom's lungs."""
    cfg = cfg or PipelineConfig()
    seg = FakeSegmenter.for_image(phantom.image, [phantom.parts[k] for k in order])
    vecs = target_vectors(phantom.image, phantom.parts, tuple(k for k in cfg.targets if k in phantom.parts))
    emb = FakeEmbedder({p: vecs[t] for t, prompts in cfg.prompts.items() if t in vecs for p in prompts})
    return seg, emb


def make_labelled_scan(scan_id: str, label, l: int, h: int = 64, w: int = 64, noise: float = 0.02,
                       rng=None) -> tuple[ScanVolume, list[Mask]]:
    """Toy scan whose class is planted as bright lesions inside the lungs.

    COVID scans carry a few small bright disks inside the lung fields on
    most slices; NON_COVID scans do not. Returns the scan and its lung masks.
    """
    rng = np.random.default_rng(rng)
    label = Label.parse(label)
    slices, masks = [], []
    for _ in range(l):
        ph = make_phantom(h, w, jitter=0.08, rng=rng)
        img = ph.image.copy()
        lungs = ph.lungs.bits
        if label is Label.COVID and rng.uniform() < 0.9:
            ys, xs = np.nonzero(lungs)
            for _ in range(rng.integers(2, 5)):
                k = rng.integers(len(ys))
                r = max(1.5, 0.06 * min(h, w) * rng.uniform(0.8, 1.3))
                spot = ellipse((h, w), ys[k], xs[k], r, r) & lungs
                img[spot] = LESION_LEVEL
        img = np.clip(img + noise * rng.standard_normal(img.shape), 0.0, 1.0)
        img[~ellipse((h, w), h / 2 - 0.5, w / 2 - 0.5, 0.47 * h, 0.48 * w)] = 0.0
        slices.append(SliceImage(img))
        masks.append(ph.lungs)
    return ScanVolume(scan_id, slices, label), masks


def make_dataset(n: int, t: int, h: int = 64, w: int = 64, seed: int = 0, min_l: int | None = None,
                 prefix: str = "scan") -> list[tuple[ScanVolume, list[Mask]]]:
    """``n`` scans with alternating labels and lengths drawn from [min_l, t]."""
    rng = np.random.default_rng(seed)
    min_l = max(1, t // 2) if min_l is None else min_l
    out = []
    for i in range(n):
        label = Label.COVID if i % 2 == 0 else Label.NON_COVID
        l = int(rng.integers(min_l, t + 1))  # noqa: E741
        out.append(make_labelled_scan(f"{prefix}{i:03d}", label, l, h, w, rng=rng))
    return out


def write_dataset(root, n: int = 4, l: int = 6, h: int = 64, w: int = 96, seed: int = 0,
                  cfg: PipelineConfig | None = None) -> dict:
    """Write phantom scans, a manifest and a matching fake-backend config to ``root``.

    Layout::

        root/scans/<scan_id>/<k>.png       slices
        root/parts/<scan_id>/<k>_<part>.png part masks for the fake segmenter
        root/manifest.jsonl
        root/fake_backend.json
    """
    cfg = cfg or PipelineConfig()
    root = Path(root)
    rng = np.random.default_rng(seed)
    manifests, image_masks = [], {}
    texts: dict[str, list[float]] = {}
    order = ("background", "center", "right_lung", "body", "left_lung")
    for i in range(n):
        scan_id = f"scan{i:03d}"
        label = Label.COVID if i % 2 == 0 else Label.NON_COVID
        for k in range(l):
            ph = make_phantom(h, w, jitter=0.05, rng=rng)
            p = root / "scans" / scan_id / f"{k}.png"
            write_slice(ph.image, p)
            loaded = read_slice(p)
            files = []
            for name in order:
                mp = root / "parts" / scan_id / f"{k}_{name}.png"
                save_mask(ph.parts[name], mp)
                files.append(mp)
            image_masks[fingerprint(loaded)] = files
            if not texts:
                vecs = target_vectors(loaded.pixels, ph.parts, tuple(t for t in cfg.targets if t in ph.parts))
                for t, prompts in cfg.prompts.items():
                    for prompt in prompts:
                        texts[prompt] = vecs[t].tolist()
        manifests.append(build_manifest(root / "scans" / scan_id, label=label))
    write_manifest(manifests, root / "manifest.jsonl")
    write_fake_config(root / "fake_backend.json", image_masks, texts)
    return {
        "scans": root / "scans",
        "manifest": root / "manifest.jsonl",
        "fake_config": root / "fake_backend.json",
    }


def write_labelled_dataset(root, n: int, t: int, h: int = 64, w: int = 64, seed: int = 0,
                           prefix: str = "scan") -> dict:
    """Write :func:`make_dataset` scans, their lung masks and a labelled manifest.

    Masks follow the segmentation output layout, so ``root/masks`` can be passed
    straight to ``train``/``evaluate`` as the masks root.
    """
    from .segmentation import mask_path

    root = Path(root)
    manifests = []
    for vol, masks in make_dataset(n, t, h, w, seed=seed, prefix=prefix):
        for k, (s, m) in enumerate(zip(vol.slices, masks)):
            write_slice(s, root / "scans" / vol.scan_id / f"{k}.png")
            save_mask(m, mask_path(root / "masks", vol.scan_id, k))
        manifests.append(build_manifest(root / "scans" / vol.scan_id, label=vol.label))
    write_manifest(manifests, root / "manifest.jsonl")
    return {"scans": root / "scans", "masks": root / "masks", "manifest": root / "manifest.jsonl"}

"""Part masks -> text-retrieved ROI -> box-prompted final mask, per slice and per scan.

For every slice:

1. the segmenter runs in segment-everything mode over a keypoint grid;
2. part masks whose area is at most ``tau_fraction`` of the image, or at
   least ``background_fraction`` of it, are dropped;
3. each survivor crops the slice (multiply by the mask, then cut to the
   mask's tight box) and the crop is embedded;
4. for each ROI target the crop with the highest cosine similarity to the
   target's text embedding wins (lowest index on ties);
5. the winner's bounding box prompts the segmenter again, and the per-target
   results are OR-ed into the final mask.

In ``per-lung`` mode the targets are the right and left lung, each with its
own prompts, and a part already chosen for one target is not offered to the
next. ``single`` mode runs one target.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .backends.base import (
    DEFAULT_GRID_N,
    EmbedderBackend,
    SegmenterBackend,
    as_embedding,
    ensemble_text_embedding,
    guarded,
    make_grid,
    validate_prompts,
)
from .backends.prompts import default_prompts
from .data import BoundingBox, Mask, ScanVolume
from .errors import BackendError, DegenerateEmbedding, EmptyMask, LungscanError, NoCandidates
from .volume_io import save_mask

log = logging.getLogger(__name__)

ROI_MODES = ("single", "per-lung")
BACKGROUND_FRACTION = 0.9


@dataclass(frozen=True)
class PipelineConfig:
    tau_fraction: float = 0.02
    grid_n: int = DEFAULT_GRID_N
    roi_mode: str = "per-lung"
    background_fraction: float = BACKGROUND_FRACTION
    prompts: Mapping[str, tuple[str, ...]] | None = None

    def __post_init__(self):
        if not 0.0 <= self.tau_fraction < 1.0:
            raise ValueError(f"tau_fraction must be in [0, 1), got {self.tau_fraction}")
        if self.grid_n < 1:
            raise ValueError(f"grid_n must be >= 1, got {self.grid_n}")
        if self.roi_mode not in ROI_MODES:
            raise ValueError(f"roi_mode must be one of {ROI_MODES}, got {self.roi_mode!r}")
        if not 0.0 < self.background_fraction <= 1.0:
            raise ValueError("background_fraction must be in (0, 1]")
        prompts = self.prompts if self.prompts is not None else default_prompts(self.roi_mode)
        prompts = {str(k): validate_prompts(v) for k, v in prompts.items()}
        if not prompts:
            raise ValueError("at least one ROI target is required")
        if self.roi_mode == "single" and len(prompts) != 1:
            raise ValueError("single ROI mode takes exactly one prompt set")
        object.__setattr__(self, "prompts", prompts)

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(self.prompts)


def _pixels(image) -> np.ndarray:
    return np.asarray(getattr(image, "pixels", image), dtype=np.float64)


def _keep(area: int, tau_fraction: float, image_area: int, background_fraction: float) -> bool:
    return tau_fraction * image_area < area < background_fraction * image_area


def filter_indices(masks: Sequence[Mask], tau_fraction: float, image_area: int,
                   background_fraction: float = BACKGROUND_FRACTION) -> list[int]:
    if image_area <= 0:
        raise ValueError("image_area must be positive")
    return [i for i, m in enumerate(masks) if _keep(m.area, tau_fraction, image_area, background_fraction)]


def filter_masks(masks: Sequence[Mask], tau_fraction: float, image_area: int,
                 background_fraction: float = BACKGROUND_FRACTION) -> list[Mask]:
    """Drop part masks that are too small to matter or big enough to be background.

    Keeps ``m`` iff ``tau_fraction * image_area < m.area < background_fraction * image_area``,
    preserving input order.
    """
    return [masks[i] for i in filter_indices(masks, tau_fraction, image_area, background_fraction)]


def compute_bbox(a: Mask) -> BoundingBox:
    if a.area == 0:
        raise EmptyMask("bounding box of an empty mask")
    rows = np.flatnonzero(a.bits.any(axis=1))
    cols = np.flatnonzero(a.bits.any(axis=0))
    return BoundingBox(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))


def crop_with_mask(image, a: Mask) -> np.ndarray:
    px = _pixels(image)
    if px.shape != a.shape:
        raise ValueError(f"image {px.shape} and mask {a.shape} differ in shape")
    box = compute_bbox(a)
    masked = px * a.bits
    return masked[box.y_min:box.y_max + 1, box.x_min:box.x_max + 1].copy()


def cosine_similarity(v, w) -> float:
    v = as_embedding(v)
    w = as_embedding(w)
    if v.shape != w.shape:
        raise ValueError(f"embedding dimensions differ: {v.shape} vs {w.shape}")
    nv = np.linalg.norm(v)
    nw = np.linalg.norm(w)
    if nv == 0.0 or nw == 0.0:
        raise DegenerateEmbedding("cosine similarity with a zero vector")
    s = float(np.dot(v / nv, w / nw))
    return min(1.0, max(-1.0, s))


def _best(vecs: Sequence[np.ndarray], w) -> tuple[int, float]:
    best_i, best_s = -1, -np.inf
    for i, v in enumerate(vecs):
        s = cosine_similarity(v, w)
        if s > best_s:  # strict: earliest index wins ties
            best_i, best_s = i, s
    return best_i, best_s


def select_roi(crops, embedder: EmbedderBackend, w) -> tuple[int, float]:
    """Position in ``crops`` whose image embedding best matches ``w``.

    ``crops`` is a sequence of crops or of ``(source_index, crop)`` pairs.
    """
    crops = list(crops)
    if not crops:
        raise NoCandidates(msg="no crops to select a region of interest from")
    images = [c[1] if isinstance(c, tuple) else c for c in crops]
    return _best([embedder.embed_image(c) for c in images], w)


@dataclass
class RoiChoice:
    target: str
    mask_index: int
    score: float
    box: BoundingBox


@dataclass
class SliceResult:
    mask: Mask
    status: str = "ok"
    rois: list[RoiChoice] = field(default_factory=list)
    n_parts: int = 0
    n_candidates: int = 0


def target_embeddings(cfg: PipelineConfig, embedder: EmbedderBackend) -> dict[str, np.ndarray]:
    return {t: ensemble_text_embedding(p, embedder) for t, p in cfg.prompts.items()}


def segment_slice_detailed(image, segmenter: SegmenterBackend, embedder: EmbedderBackend,
                           cfg: PipelineConfig, text_vectors: Mapping[str, np.ndarray] | None = None,
                           slice_index: int | None = None) -> SliceResult:
    px = _pixels(image)
    h, w = px.shape
    if text_vectors is None:
        text_vectors = target_embeddings(cfg, embedder)

    parts = segmenter.segment_everything(px, make_grid(h, w, cfg.grid_n))
    for m in parts:
        if m.shape != px.shape:
            raise ValueError(f"segmenter returned mask of shape {m.shape} for image {px.shape}")
    kept = filter_indices(parts, cfg.tau_fraction, h * w, cfg.background_fraction)
    if not kept:
        raise NoCandidates(slice_index)

    crop_set = [(i, crop_with_mask(px, parts[i])) for i in kept]
    vecs = [embedder.embed_image(c) for _, c in crop_set]

    final = np.zeros(px.shape, dtype=bool)
    taken: set[int] = set()
    rois = []
    for target in cfg.targets:
        avail = [k for k in range(len(crop_set)) if k not in taken]
        if not avail:
            log.debug("slice %s: no part left for target %s", slice_index, target)
            continue
        pos, score = _best([vecs[k] for k in avail], text_vectors[target])
        k = avail[pos]
        taken.add(k)
        src = crop_set[k][0]
        box = compute_bbox(parts[src])
        out = segmenter.segment_with_box(px, box)
        if out.shape != px.shape:
            raise ValueError(f"segmenter returned mask of shape {out.shape} for image {px.shape}")
        final |= out.bits
        rois.append(RoiChoice(target, src, score, box))
    return SliceResult(Mask(final), "ok", rois, len(parts), len(kept))


def segment_slice(image, segmenter: SegmenterBackend, embedder: EmbedderBackend,
                  cfg: PipelineConfig | None = None) -> Mask:
    return segment_slice_detailed(image, segmenter, embedder, cfg or PipelineConfig()).mask


@dataclass
class VolumeSegmentation:
    scan_id: str
    masks: list[Mask]
    slices: list[SliceResult]

    @property
    def flagged(self) -> list[int]:
        return [i for i, r in enumerate(self.slices) if r.status != "ok"]

    def report_records(self) -> list[dict]:
        recs = []
        for i, r in enumerate(self.slices):
            recs.append({
                "index": i,
                "status": r.status,
                "roi_scores": {c.target: round(c.score, 12) for c in r.rois},
                "roi_boxes": {c.target: list(c.box.as_tuple()) for c in r.rois},
                "n_parts": r.n_parts,
                "n_candidates": r.n_candidates,
            })
        return recs


def segment_volume(volume: ScanVolume, segmenter: SegmenterBackend, embedder: EmbedderBackend,
                   cfg: PipelineConfig | None = None, workers: int = 1) -> VolumeSegmentation:
    """Segment every slice independently; results come back in slice order.

    A slice on which no part survives filtering yields an all-zero mask with
    status ``no_candidates``. Any other backend failure aborts the scan as a
    ``BackendError`` carrying the slice index.
    """
    cfg = cfg or PipelineConfig()
    if workers < 1:
        raise ValueError("workers must be >= 1")
    seg = guarded(segmenter)
    emb = guarded(embedder)
    text_vectors = target_embeddings(cfg, emb)

    def run(item):
        i, s = item
        try:
            return segment_slice_detailed(s.pixels, seg, emb, cfg, text_vectors, slice_index=i)
        except NoCandidates:
            return SliceResult(Mask.zeros(s.shape), "no_candidates")
        except (LungscanError, ValueError, RuntimeError) as exc:
            raise BackendError(i, exc) from exc

    items = list(enumerate(volume.slices))
    if workers == 1 or len(items) == 1:
        results = [run(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, items))
    return VolumeSegmentation(volume.scan_id, [r.mask for r in results], results)


def mask_path(root, scan_id: str, index: int) -> Path:
    return Path(root) / scan_id / f"{index}.mask.png"


def write_segmentation(root, seg: VolumeSegmentation) -> Path:
    """Write ``<root>/<scan_id>/<index>.mask.png`` plus ``status.jsonl``."""
    out_dir = Path(root) / seg.scan_id
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, m in enumerate(seg.masks):
        save_mask(m, mask_path(root, seg.scan_id, i))
    lines = [json.dumps(r, sort_keys=True) for r in seg.report_records()]
    (out_dir / "status.jsonl").write_text("\n".join(lines) + "\n")
    return out_dir


def load_segmentation_masks(root, scan_id: str, n_slices: int) -> list[Mask]:
    from .volume_io import load_mask

    return [load_mask(mask_path(root, scan_id, i)) for i in range(n_slices)]

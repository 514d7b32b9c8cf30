"""Deterministic stand-ins for the segmenter and embedder.

``FakeSegmenter`` returns a configured list of part masks per image (looked
up by pixel fingerprint). Box prompts return the union of the configured
parts that lie entirely inside the box.

``FakeEmbedder`` describes an image crop with four hand-computable numbers::

    (mean intensity, centroid x / (W-1), centroid y / (H-1), foreground fraction)

where foreground means pixel > 0 and the centroid is the unweighted mean of
the foreground pixel coordinates. An empty foreground puts the centroid at
the image center (0.5, 0.5); a one-pixel-wide axis also maps to 0.5. Text
vectors are configured per prompt string.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..data import BoundingBox, Mask
from ..errors import UnconfiguredImage, UnconfiguredPrompt
from ..volume_io import load_mask
from .base import as_embedding, fingerprint


class FakeSegmenter:
    thread_safe = True

    def __init__(self, parts: Mapping[str, Sequence[Mask]] | None = None):
        self._parts: dict[str, tuple[Mask, ...]] = {}
        for fp, masks in (parts or {}).items():
            self._parts[fp] = tuple(masks)

    @classmethod
    def for_image(cls, image, masks: Sequence[Mask]) -> "FakeSegmenter":
        return cls({fingerprint(image): masks})

    def add(self, image, masks: Sequence[Mask]) -> None:
        shape = np.shape(getattr(image, "pixels", image))
        for m in masks:
            if m.shape != shape:
                raise ValueError(f"mask shape {m.shape} does not match image {shape}")
        self._parts[fingerprint(image)] = tuple(masks)

    def _lookup(self, image) -> tuple[Mask, ...]:
        fp = fingerprint(image)
        try:
            return self._parts[fp]
        except KeyError:
            raise UnconfiguredImage(f"fake segmenter has no parts for image {fp[:12]}") from None

    def segment_everything(self, image, grid=None) -> list[Mask]:
        return list(self._lookup(image))

    def segment_with_box(self, image, box: BoundingBox) -> Mask:
        shape = np.shape(getattr(image, "pixels", image))
        out = np.zeros(shape, dtype=bool)
        for m in self._lookup(image):
            if m.area and box.contains(m):
                out |= m.bits
        return Mask(out)


def fake_image_features(image) -> np.ndarray:
    px = np.asarray(getattr(image, "pixels", image), dtype=np.float64)
    if px.ndim != 2 or px.size == 0:
        raise ValueError("fake embedder needs a non-empty 2-D crop")
    h, w = px.shape
    fg = px > 0
    n_fg = int(fg.sum())
    if n_fg == 0:
        cx = cy = 0.5
    else:
        ys, xs = np.nonzero(fg)
        cx = xs.mean() / (w - 1) if w > 1 else 0.5
        cy = ys.mean() / (h - 1) if h > 1 else 0.5
    return np.array([px.mean(), cx, cy, n_fg / px.size], dtype=np.float64)


class FakeEmbedder:
    thread_safe = True

    def __init__(self, text_vectors: Mapping[str, Sequence[float]] | None = None):
        self._texts = {k: as_embedding(v) for k, v in (text_vectors or {}).items()}

    def set_text(self, text: str, vector) -> None:
        self._texts[text] = as_embedding(vector)

    def embed_image(self, image) -> np.ndarray:
        return fake_image_features(image)

    def embed_text(self, text: str) -> np.ndarray:
        try:
            return self._texts[text].copy()
        except KeyError:
            raise UnconfiguredPrompt(f"fake embedder has no vector for prompt {text!r}") from None


def write_fake_config(path, image_masks: Mapping[str, Sequence], text_vectors: Mapping[str, Sequence[float]]) -> None:
    """Serialize a fake-backend configuration as JSON.

    ``image_masks`` maps image fingerprints to lists of mask file paths; paths
    are stored relative to the config file when they live below it.
    """
    path = Path(path)
    base = path.parent.resolve()

    def rel(p):
        p = Path(p).resolve()
        try:
            return p.relative_to(base).as_posix()
        except ValueError:
            return p.as_posix()

    doc = {
        "images": {fp: [rel(p) for p in paths] for fp, paths in sorted(image_masks.items())},
        "texts": {k: [float(x) for x in v] for k, v in sorted(text_vectors.items())},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_fake_backends(path) -> tuple[FakeSegmenter, FakeEmbedder]:
    path = Path(path)
    doc = json.loads(path.read_text())
    parts = {}
    for fp, files in doc.get("images", {}).items():
        parts[fp] = [load_mask(f if Path(f).is_absolute() else path.parent / f) for f in files]
    return FakeSegmenter(parts), FakeEmbedder(doc.get("texts", {}))

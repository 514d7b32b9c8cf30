"""Adapters wrapping pretrained SAM / CLIP checkpoints (optional extra).

Requires ``transformers``. A checkpoint root is a directory holding ``sam/``
and ``clip/`` subdirectories in the Hugging Face ``from_pretrained`` layout.
Nothing here is exercised by the offline test suite beyond construction
errors.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..data import BoundingBox, Mask
from ..errors import ConfigError
from .base import make_grid, to_rgb


def _require_transformers():
    try:
        import transformers  # noqa: F401
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise ConfigError(
            "checkpoint backends need the optional 'transformers' dependency "
            "(pip install 'artifact[checkpoint]')"
        ) from exc


def _features(out):
    # get_*_features returns a tensor on older releases, a model output on newer ones
    if hasattr(out, "pooler_output") and out.pooler_output is not None:
        return out.pooler_output
    return out


class SamCheckpointSegmenter:
    thread_safe = False

    def __init__(self, path, device: str = "cpu", points_per_batch: int = 64, min_iou: float = 0.7):
        _require_transformers()
        from transformers import SamModel, SamProcessor

        path = Path(path)
        if not path.is_dir():
            raise ConfigError(f"SAM checkpoint directory not found: {path}")
        self.device = device
        self.points_per_batch = points_per_batch
        self.min_iou = min_iou
        self.model = SamModel.from_pretrained(path).to(device).eval()
        self.processor = SamProcessor.from_pretrained(path)

    def _run(self, rgb, **prompts):
        import torch

        inputs = self.processor(rgb, return_tensors="pt", **prompts).to(self.device)
        with torch.no_grad():
            out = self.model(**inputs)
        masks = self.processor.image_processor.post_process_masks(
            out.pred_masks.cpu(), inputs["original_sizes"].cpu(), inputs["reshaped_input_sizes"].cpu()
        )[0]
        return masks.numpy(), out.iou_scores[0].cpu().numpy()

    def segment_everything(self, image, grid=None) -> list[Mask]:
        rgb = to_rgb(image)
        h, w = rgb.shape[:2]
        grid = list(grid) if grid is not None else make_grid(h, w)
        found: list[Mask] = []
        seen = set()
        for start in range(0, len(grid), self.points_per_batch):
            chunk = grid[start:start + self.points_per_batch]
            pts = [[[float(x), float(y)]] for x, y in chunk]
            masks, scores = self._run(rgb, input_points=[pts])
            for k in range(len(chunk)):
                best = int(np.argmax(scores[k]))
                if scores[k, best] < self.min_iou:
                    continue
                m = Mask(masks[k, best])
                key = m.bits.tobytes()
                if m.area and key not in seen:
                    seen.add(key)
                    found.append(m)
        return found

    def segment_with_box(self, image, box: BoundingBox) -> Mask:
        rgb = to_rgb(image)
        masks, scores = self._run(rgb, input_boxes=[[list(map(float, box.as_tuple()))]])
        best = int(np.argmax(scores[0]))
        return Mask(masks[0, best])


class ClipCheckpointEmbedder:
    thread_safe = False

    def __init__(self, path, device: str = "cpu"):
        _require_transformers()
        from transformers import CLIPModel, CLIPProcessor

        path = Path(path)
        if not path.is_dir():
            raise ConfigError(f"CLIP checkpoint directory not found: {path}")
        self.device = device
        self.model = CLIPModel.from_pretrained(path).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(path)

    def embed_image(self, image) -> np.ndarray:
        import torch

        inputs = self.processor(images=to_rgb(image), return_tensors="pt").to(self.device)
        with torch.no_grad():
            feats = _features(self.model.get_image_features(**inputs))
        return feats[0].cpu().double().numpy()

    def embed_text(self, text: str) -> np.ndarray:
        import torch

        inputs = self.processor(text=[text], return_tensors="pt", padding=True).to(self.device)
        with torch.no_grad():
            feats = _features(self.model.get_text_features(**inputs))
        return feats[0].cpu().double().numpy()


def load_checkpoint_backends(root, device: str = "cpu"):
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"checkpoint root not found: {root}")
    return SamCheckpointSegmenter(root / "sam", device), ClipCheckpointEmbedder(root / "clip", device)

"""Segmenter and embedder backends."""

from __future__ import annotations

from ..errors import ConfigError
from .base import (
    DEFAULT_GRID_N,
    EmbedderBackend,
    SegmenterBackend,
    Serialized,
    ensemble_text_embedding,
    fingerprint,
    guarded,
    make_grid,
    to_rgb,
    unit,
)
from .fake import FakeEmbedder, FakeSegmenter, fake_image_features, load_fake_backends, write_fake_config
from .prompts import default_prompts


def load_backends(selection: str, fake_config=None):
    """Resolve ``fake`` or ``checkpoint:<path>`` into (segmenter, embedder)."""
    selection = (selection or "").strip()
    if selection == "fake":
        if not fake_config:
            raise ConfigError("backend 'fake' needs a fake_config file")
        try:
            return load_fake_backends(fake_config)
        except FileNotFoundError as exc:
            raise ConfigError(f"fake backend config not found: {fake_config}") from exc
    if selection.startswith("checkpoint:"):
        from .checkpoint import load_checkpoint_backends

        return load_checkpoint_backends(selection.split(":", 1)[1])
    raise ConfigError(f"unknown backend selection {selection!r} (expected 'fake' or 'checkpoint:<path>')")


__all__ = [
    "DEFAULT_GRID_N",
    "EmbedderBackend",
    "FakeEmbedder",
    "FakeSegmenter",
    "SegmenterBackend",
    "Serialized",
    "default_prompts",
    "ensemble_text_embedding",
    "fake_image_features",
    "fingerprint",
    "guarded",
    "load_backends",
    "load_fake_backends",
    "make_grid",
    "to_rgb",
    "unit",
    "write_fake_config",
]

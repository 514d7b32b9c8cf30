"""Segmenter / embedder contracts and the helpers shared by every backend."""

from __future__ import annotations

import hashlib
import threading
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..data import BoundingBox, Mask
from ..errors import DegenerateEmbedding

DEFAULT_GRID_N = 32


@runtime_checkable
class SegmenterBackend(Protocol):
    """Promptable segmenter with a prompt-free "everything" mode.

    ``thread_safe`` declares whether concurrent calls are allowed; callers
    serialize access otherwise.
    """

    thread_safe: bool

    def segment_everything(self, image: np.ndarray, grid: Sequence[tuple[int, int]]) -> list[Mask]: ...

    def segment_with_box(self, image: np.ndarray, box: BoundingBox) -> Mask: ...


@runtime_checkable
class EmbedderBackend(Protocol):
    thread_safe: bool

    def embed_image(self, image: np.ndarray) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


def fingerprint(image) -> str:
    """Stable hex digest of a slice's pixel values and shape."""
    px = np.ascontiguousarray(getattr(image, "pixels", image), dtype=np.float64)
    h = hashlib.sha256()
    h.update(repr(px.shape).encode())
    h.update(px.tobytes())
    return h.hexdigest()


def _round_half_up(num: int, den: int) -> int:
    # floor(num/den + 1/2) for non-negative integers
    return (2 * num + den) // (2 * den)


def make_grid(H: int, W: int, n: int = DEFAULT_GRID_N) -> list[tuple[int, int]]:
    """n x n lattice of (x, y) keypoints spanning the image, row-major."""
    if H < 1 or W < 1 or n < 1:
        raise ValueError(f"make_grid needs H, W, n >= 1 (got {H}, {W}, {n})")
    if n == 1:
        return [(_round_half_up(W - 1, 2), _round_half_up(H - 1, 2))]
    xs = [_round_half_up(j * (W - 1), n - 1) for j in range(n)]
    ys = [_round_half_up(i * (H - 1), n - 1) for i in range(n)]
    return [(x, y) for y in ys for x in xs]


def as_embedding(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.size < 1 or not np.all(np.isfinite(arr)):
        raise DegenerateEmbedding(f"embedding must be finite and non-empty, got {arr!r}")
    return arr


def unit(v) -> np.ndarray:
    arr = as_embedding(v)
    norm = np.linalg.norm(arr)
    if norm == 0.0:
        raise DegenerateEmbedding("zero-norm embedding")
    return arr / norm


def ensemble_text_embedding(prompts: Sequence[str], embedder: EmbedderBackend) -> np.ndarray:
    """Mean of the unit-normalized prompt embeddings, renormalized."""
    prompts = validate_prompts(prompts)
    vecs = [unit(embedder.embed_text(p)) for p in prompts]
    dims = {v.shape for v in vecs}
    if len(dims) != 1:
        raise DegenerateEmbedding(f"prompt embeddings disagree on dimension: {sorted(dims)}")
    return unit(np.mean(vecs, axis=0))


def validate_prompts(prompts) -> tuple[str, ...]:
    if isinstance(prompts, str):
        prompts = (prompts,)
    prompts = tuple(prompts)
    if not prompts:
        raise ValueError("prompt set is empty")
    if any(not isinstance(p, str) or not p.strip() for p in prompts):
        raise ValueError("prompt set contains a blank entry")
    return prompts


def to_rgb(image: np.ndarray) -> np.ndarray:
    """H x W in [0, 1] -> H x W x 3 uint8, for backends that expect RGB."""
    px = np.asarray(getattr(image, "pixels", image), dtype=np.float64)
    u8 = np.rint(np.clip(px, 0.0, 1.0) * 255).astype(np.uint8)
    return np.repeat(u8[:, :, None], 3, axis=2)


class Serialized:
    """Proxy funnelling every call on a backend through one lock."""

    thread_safe = True

    def __init__(self, backend):
        self._backend = backend
        self._lock = threading.Lock()

    def __getattr__(self, name):
        attr = getattr(self._backend, name)
        if not callable(attr):
            return attr

        def call(*args, **kwargs):
            with self._lock:
                return attr(*args, **kwargs)

        return call


def guarded(backend):
    return backend if getattr(backend, "thread_safe", False) else Serialized(backend)

"""Reading slice stacks, resizing slices, and persisting masks and manifests.

A scan is a directory of grayscale PNG slices. Slice order is the natural
(numeric-aware) sort of the file names, so ``s2.png`` comes before
``s10.png``. Integer pixel values are divided by the maximum value of their
bit depth to land in [0, 1].
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from skimage.transform import resize as _sk_resize

from .data import Label, Mask, ScanVolume, SliceImage
from .errors import BadSlice, NoSlices

SLICE_SUFFIXES = (".png",)

_DIGITS = re.compile(r"(\d+)")


def natural_key(name: str):
    """Sort key splitting ``name`` into text and integer runs."""
    return [int(tok) if tok.isdigit() else tok.lower() for tok in _DIGITS.split(name)]


def list_slice_files(dir_path) -> list[Path]:
    d = Path(dir_path)
    if not d.is_dir():
        raise NoSlices(f"{d} is not a directory")
    files = [
        p for p in d.iterdir()
        if p.is_file() and p.suffix.lower() in SLICE_SUFFIXES and not p.name.endswith(".mask.png")
    ]
    if not files:
        raise NoSlices(f"no slice images in {d}")
    return sorted(files, key=lambda p: natural_key(p.name))


def read_slice(path) -> SliceImage:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            arr = np.array(im)
            mode = im.mode
    except (OSError, UnidentifiedImageError) as exc:
        raise BadSlice(path, str(exc)) from exc
    if arr.ndim != 2:
        raise BadSlice(path, f"expected single-channel image, got mode {mode} shape {arr.shape}")
    if arr.dtype == np.bool_:
        scaled = arr.astype(np.float64)
    elif arr.dtype in (np.uint8, np.uint16):
        scaled = arr.astype(np.float64) / float(np.iinfo(arr.dtype).max)
    elif mode.startswith("I") and arr.dtype == np.int32:
        # older Pillow decodes 16-bit PNGs as 32-bit "I"
        if arr.min() < 0 or arr.max() > 65535:
            raise BadSlice(path, "pixel values outside 16-bit range")
        scaled = arr.astype(np.float64) / 65535.0
    else:
        raise BadSlice(path, f"unsupported pixel type {arr.dtype}")
    return SliceImage(scaled, source_size=arr.shape)


def load_scan(dir_path, label=None, scan_id: str | None = None) -> ScanVolume:
    """Load every slice in ``dir_path`` in natural filename order."""
    files = list_slice_files(dir_path)
    slices = [read_slice(p) for p in files]
    return ScanVolume(
        scan_id=scan_id if scan_id is not None else Path(dir_path).name,
        slices=slices,
        label=None if label is None else Label.parse(label),
    )


def write_slice(s, path, bit_depth: int = 8) -> None:
    """Quantize a [0, 1] slice and write it as an 8- or 16-bit PNG."""
    px = s.pixels if isinstance(s, SliceImage) else np.asarray(s, dtype=np.float64)
    if bit_depth == 8:
        arr = np.rint(np.clip(px, 0, 1) * 255).astype(np.uint8)
    elif bit_depth == 16:
        arr = np.rint(np.clip(px, 0, 1) * 65535).astype(np.uint16)
    else:
        raise ValueError("bit_depth must be 8 or 16")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def resize_slice(s: SliceImage, target: tuple[int, int]) -> SliceImage:
    """Bilinear resize to ``target`` = (rows, cols), half-pixel sampling grid."""
    h, w = (int(v) for v in target)
    if h < 1 or w < 1:
        raise ValueError(f"target size must be positive, got {target}")
    if s.shape == (h, w):
        return s
    out = _sk_resize(
        s.pixels, (h, w), order=1, mode="edge", anti_aliasing=False,
        preserve_range=True,
    )
    return SliceImage(np.clip(out, 0.0, 1.0), source_size=s.source_size)


def save_mask(m: Mask, path) -> None:
    path = Path(path)
    arr = np.where(m.bits, 255, 0).astype(np.uint8)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(arr).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write mask {path}: {exc}") from exc


def load_mask(path) -> Mask:
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.array(im.convert("L") if im.mode not in ("L", "1") else im)
    except (OSError, UnidentifiedImageError) as exc:
        raise OSError(f"cannot read mask {path}: {exc}") from exc
    return Mask(arr > 127 if arr.dtype != np.bool_ else arr)


@dataclass(frozen=True)
class VolumeManifest:
    scan_id: str
    paths: tuple[Path, ...]
    label: Label | None = None

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(Path(p) for p in self.paths))
        if len(set(self.paths)) != len(self.paths):
            raise ValueError(f"duplicate slice paths in manifest for {self.scan_id}")

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.paths)

    def load(self) -> ScanVolume:
        missing = [p for p in self.paths if not p.is_file()]
        if missing:
            raise BadSlice(missing[0], "file does not exist")
        if not self.paths:
            raise NoSlices(f"manifest for {self.scan_id} lists no slices")
        return ScanVolume(self.scan_id, [read_slice(p) for p in self.paths], self.label)


def build_manifest(dir_path, label=None, scan_id: str | None = None) -> VolumeManifest:
    files = list_slice_files(dir_path)
    return VolumeManifest(
        scan_id=scan_id if scan_id is not None else Path(dir_path).name,
        paths=files,
        label=None if label is None else Label.parse(label),
    )


def write_manifest(manifests, path) -> None:
    """Write one JSON line per slice: scan_id, index, path, label.

    Paths are stored relative to the manifest's directory when possible.
    """
    path = Path(path)
    base = path.parent.resolve()
    lines = []
    for vm in manifests:
        for i, p in enumerate(vm.paths):
            p_abs = Path(p).resolve()
            try:
                stored = p_abs.relative_to(base).as_posix()
            except ValueError:
                stored = p_abs.as_posix()
            rec = {
                "scan_id": vm.scan_id,
                "index": i,
                "path": stored,
                "label": None if vm.label is None else vm.label.name,
            }
            lines.append(json.dumps(rec, sort_keys=True))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path) -> list[VolumeManifest]:
    path = Path(path)
    base = path.parent
    groups: dict[str, list[dict]] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            rec["scan_id"], rec["index"], rec["path"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed manifest record") from exc
        groups.setdefault(str(rec["scan_id"]), []).append(rec)
    out = []
    for scan_id, recs in groups.items():
        recs.sort(key=lambda r: int(r["index"]))
        labels = {r.get("label") for r in recs}
        if len(labels) > 1:
            raise ValueError(f"{path}: scan {scan_id} has conflicting labels {labels}")
        label = labels.pop()
        paths = [Path(r["path"]) if Path(r["path"]).is_absolute() else base / r["path"] for r in recs]
        out.append(VolumeManifest(scan_id, paths, None if label is None else Label.parse(label)))
    return out

"""Core value types: slices, scans, binary masks and boxes."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Label(enum.IntEnum):
    NON_COVID = 0
    COVID = 1

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().upper().replace("-", "_")
        if key in ("NONCOVID", "NON_COVID19", "NON_COVID_19"):
            key = "NON_COVID"
        if key in ("COVID19", "COVID_19"):
            key = "COVID"
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown label {value!r}") from None


@dataclass(frozen=True)
class SliceImage:
    """One CT slice, single channel, intensities in [0, 1]."""

    pixels: np.ndarray
    source_size: tuple[int, int] = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or min(px.shape) < 1:
            raise ValueError(f"slice must be a non-empty 2-D array, got shape {px.shape}")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("slice intensities must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.source_size is None:
            object.__setattr__(self, "source_size", px.shape)
        else:
            object.__setattr__(self, "source_size", tuple(int(s) for s in self.source_size))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class ScanVolume:
    scan_id: str
    slices: tuple[SliceImage, ...]
    label: Label | None = None

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(self.slices))
        if len(self.slices) < 1:
            raise ValueError(f"scan {self.scan_id!r} has no slices")
        if self.label is not None:
            object.__setattr__(self, "label", Label.parse(self.label))

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.slices)

    def __len__(self):
        return len(self.slices)


class Mask:
    """Binary pixel mask over one slice; ``area`` is cached at construction."""

    __slots__ = ("bits", "area")

    def __init__(self, bits):
        b = np.array(bits, dtype=bool, copy=True)
        if b.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {b.shape}")
        b.setflags(write=False)
        self.bits = b
        self.area = int(np.count_nonzero(b))

    @classmethod
    def zeros(cls, shape) -> "Mask":
        return cls(np.zeros(shape, dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def __or__(self, other: "Mask") -> "Mask":
        return Mask(self.bits | other.bits)

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.shape, self.bits.tobytes()))

    def __repr__(self):
        return f"Mask(shape={self.shape}, area={self.area})"


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive pixel box; x is the column, y the row, origin top-left."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"malformed box {self}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def contains(self, mask: Mask) -> bool:
        """True when every foreground pixel of ``mask`` lies inside the box."""
        if mask.area == 0:
            return True
        ys, xs = np.nonzero(mask.bits)
        return bool(
            xs.min() >= self.x_min and xs.max() <= self.x_max
            and ys.min() >= self.y_min and ys.max() <= self.y_max
        )

    def to_mask(self, shape) -> Mask:
        bits = np.zeros(shape, dtype=bool)
        bits[self.y_min:self.y_max + 1, self.x_min:self.x_max + 1] = True
        return Mask(bits)

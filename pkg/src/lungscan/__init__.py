"""Lung segmentation by part-mask retrieval, and routed CNN-RNN scan classification."""

from .data import BoundingBox, Label, Mask, ScanVolume, SliceImage
from .errors import LungscanError

__version__ = "0.1.0"

__all__ = ["BoundingBox", "Label", "LungscanError", "Mask", "ScanVolume", "SliceImage", "__version__"]

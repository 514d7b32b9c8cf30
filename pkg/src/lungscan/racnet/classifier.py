"""Scan-level operations on a :class:`RACNet`: preparation, inference, one training step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..data import Label, Mask, ScanVolume, SliceImage
from ..errors import NumericalError, TooManySlices
from ..volume_io import resize_slice
from .model import RACNet, RACNetConfig
from .routing import RoutingPlan, make_plan


@dataclass
class PreparedScan:
    """Masked, resized slices of one scan plus where they go on the time axis."""

    scan_id: str
    slices: np.ndarray  # (l, H, W) float32
    plan: RoutingPlan
    label: Label | None = None


@dataclass
class SequenceFeatures:
    """Recurrent outputs on the padded axis, rows off the plan zeroed."""

    features: torch.Tensor  # (t, rnn_units)
    plan: RoutingPlan


@dataclass
class ClassifierOutput:
    probabilities: np.ndarray

    @property
    def predicted(self) -> int:
        return int(np.argmax(self.probabilities))


def prepare_scan(volume: ScanVolume, masks: Sequence[Mask] | None, cfg: RACNetConfig) -> PreparedScan:
    """Apply masks (``None`` keeps slices unsegmented), resize, and route."""
    if volume.l > cfg.t:
        raise TooManySlices(f"scan {volume.scan_id} has {volume.l} slices, more than t={cfg.t}")
    if masks is not None and len(masks) != volume.l:
        raise ValueError(f"scan {volume.scan_id}: {len(masks)} masks for {volume.l} slices")
    out = np.empty((volume.l, cfg.input_h, cfg.input_w), dtype=np.float32)
    for i, s in enumerate(volume.slices):
        if masks is not None:
            if masks[i].shape != s.shape:
                raise ValueError(f"scan {volume.scan_id} slice {i}: mask shape {masks[i].shape} != {s.shape}")
            s = SliceImage(s.pixels * masks[i].bits, s.source_size)
        out[i] = resize_slice(s, cfg.input_hw).pixels
    return PreparedScan(volume.scan_id, out, make_plan(cfg.routing, cfg.t, volume.l), volume.label)


def _tensors(model: RACNet, batch: Sequence[PreparedScan]):
    return [torch.from_numpy(p.slices).to(model.dtype) for p in batch], [p.plan for p in batch]


@torch.no_grad()
def embed_and_sequence(model: RACNet, scan: PreparedScan) -> SequenceFeatures:
    model.eval()
    slices, plans = _tensors(model, [scan])
    raw = model.recurrent(model.place(slices, plans))[0]
    keep = torch.from_numpy(scan.plan.keep_mask()).to(raw.dtype).unsqueeze(-1)
    return SequenceFeatures(raw * keep, scan.plan)


def _check_probs(logits: torch.Tensor) -> np.ndarray:
    if not torch.all(torch.isfinite(logits)):
        raise NumericalError("non-finite logits")
    return torch.softmax(logits, dim=-1).double().cpu().numpy()


@torch.no_grad()
def forward(model: RACNet, sf: SequenceFeatures) -> ClassifierOutput:
    """Mask layer + dense head + softmax on (possibly unmasked) recurrent outputs."""
    model.eval()
    keep = model.keep_mask([sf.plan])
    logits = model.head(sf.features.to(model.dtype).unsqueeze(0), keep)
    return ClassifierOutput(_check_probs(logits)[0])


def sequence_loss(model: RACNet, rnn_out: torch.Tensor, plans: Sequence[RoutingPlan], labels) -> torch.Tensor:
    """Cross-entropy computed from raw recurrent outputs (B, t, U)."""
    logits = model.head(rnn_out, model.keep_mask(plans))
    return F.cross_entropy(logits, torch.as_tensor([int(y) for y in labels], dtype=torch.long))


def batch_loss(model: RACNet, batch: Sequence[PreparedScan], labels=None) -> torch.Tensor:
    labels = [p.label for p in batch] if labels is None else labels
    if any(y is None for y in labels):
        missing = [p.scan_id for p, y in zip(batch, labels) if y is None]
        raise ValueError(f"unlabeled scans in batch: {missing}")
    slices, plans = _tensors(model, batch)
    logits = model(slices, plans)
    return F.cross_entropy(logits, torch.as_tensor([int(y) for y in labels], dtype=torch.long))


def train_step(model: RACNet, optimizer: torch.optim.Optimizer, batch: Sequence[PreparedScan],
               labels=None) -> float:
    """One optimizer step on ``batch``; returns the pre-step mean cross-entropy.

    Dense-layer columns tied to positions that no scan in the batch selects
    are held fixed: their gradient is zero by construction, and their values
    and per-parameter optimizer state are restored after the step so that
    moment estimates carried over from earlier steps cannot move them.
    """
    if not batch:
        raise ValueError("empty batch")
    model.train()
    loss = batch_loss(model, batch, labels)
    if not torch.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss.item()}")
    optimizer.zero_grad(set_to_none=True)
    loss.backward()

    weight = model.dense.weight
    frozen = model.frozen_columns([p.plan for p in batch])
    has_frozen = bool(frozen.any())
    if has_frozen:
        with torch.no_grad():
            if weight.grad is not None:
                weight.grad[:, frozen] = 0
            saved = weight[:, frozen].clone()
            saved_state = {
                k: v[:, frozen].clone()
                for k, v in optimizer.state.get(weight, {}).items()
                if torch.is_tensor(v) and v.shape == weight.shape
            }
    optimizer.step()
    if has_frozen:
        with torch.no_grad():
            weight[:, frozen] = saved
            state = optimizer.state.get(weight, {})
            for k, v in state.items():
                if not (torch.is_tensor(v) and v.shape == weight.shape):
                    continue
                v[:, frozen] = saved_state[k] if k in saved_state else 0
    return float(loss.item())


@torch.no_grad()
def predict_prepared(model: RACNet, scan: PreparedScan) -> ClassifierOutput:
    model.eval()
    slices, plans = _tensors(model, [scan])
    return ClassifierOutput(_check_probs(model(slices, plans))[0])


def classify_scan(model: RACNet, volume: ScanVolume, masks: Sequence[Mask] | None,
                  cfg: RACNetConfig | None = None) -> ClassifierOutput:
    cfg = cfg or model.cfg
    return forward(model, embed_and_sequence(model, prepare_scan(volume, masks, cfg)))

"""CNN-RNN scan classifier with position routing and a masked dense head.

Per-slice CNN features are placed on a padded time axis of length ``t``
according to a :class:`RoutingPlan`; a GRU runs over all ``t`` steps; the
mask layer zeroes every recurrent output whose position is not in the plan;
the ``t`` rows are concatenated and fed to a dense layer and a softmax head.

Dense-layer input columns ``[k * rnn_units, (k + 1) * rnn_units)`` belong to
position ``k``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .routing import ROUTINGS, RoutingPlan


@dataclass(frozen=True)
class RACNetConfig:
    t: int = 700
    rnn_units: int = 128
    dense_units: int = 128
    dropout_keep: float = 0.8
    num_classes: int = 2
    routing: str = "aligned"
    feature_dim: int = 64
    input_h: int = 256
    input_w: int = 256
    cnn_widths: tuple[int, int] = (16, 32)

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.routing not in ROUTINGS:
            raise ValueError(f"routing must be one of {ROUTINGS}, got {self.routing!r}")
        for name in ("rnn_units", "dense_units", "feature_dim", "input_h", "input_w"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        object.__setattr__(self, "cnn_widths", tuple(int(c) for c in self.cnn_widths))

    @property
    def input_hw(self) -> tuple[int, int]:
        return (self.input_h, self.input_w)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cnn_widths"] = list(self.cnn_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RACNetConfig":
        d = dict(d)
        if "cnn_widths" in d:
            d["cnn_widths"] = tuple(d["cnn_widths"])
        return cls(**d)


class SliceEncoder(nn.Module):
    """Three conv blocks, global average pooling, batch norm, dropout."""

    def __init__(self, feature_dim: int, dropout_keep: float = 0.8, widths: Sequence[int] = (16, 32)):
        super().__init__()
        c1, c2 = widths
        self.blocks = nn.Sequential(
            nn.Conv2d(1, c1, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2, ceil_mode=True),
            nn.Conv2d(c1, c2, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2, ceil_mode=True),
            nn.Conv2d(c2, feature_dim, 3, padding=1), nn.ReLU(),
        )
        self.norm = nn.BatchNorm1d(feature_dim)
        self.drop = nn.Dropout(p=1.0 - dropout_keep)

    def forward(self, x):
        h = self.blocks(x).mean(dim=(2, 3))
        if self.training and h.shape[0] == 1:
            # batch statistics are undefined for a single slice
            h = F.batch_norm(h, self.norm.running_mean, self.norm.running_var,
                             self.norm.weight, self.norm.bias, False, 0.0, self.norm.eps)
        else:
            h = self.norm(h)
        return self.drop(h)


class RACNet(nn.Module):
    def __init__(self, cfg: RACNetConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = SliceEncoder(cfg.feature_dim, cfg.dropout_keep, cfg.cnn_widths)
        self.rnn = nn.GRU(cfg.feature_dim, cfg.rnn_units, batch_first=True)
        self.dense = nn.Linear(cfg.t * cfg.rnn_units, cfg.dense_units)
        self.out = nn.Linear(cfg.dense_units, cfg.num_classes)

    @property
    def dtype(self) -> torch.dtype:
        return self.dense.weight.dtype

    def keep_mask(self, plans: Sequence[RoutingPlan]) -> torch.Tensor:
        keep = torch.zeros(len(plans), self.cfg.t, dtype=torch.bool)
        for b, plan in enumerate(plans):
            if plan.t != self.cfg.t:
                raise ValueError(f"plan built for t={plan.t}, model expects t={self.cfg.t}")
            keep[b, list(plan.selected)] = True
        return keep

    def place(self, slices: Sequence[torch.Tensor], plans: Sequence[RoutingPlan]) -> torch.Tensor:
        """Encode every real slice and scatter the features onto the (B, t, F) grid."""
        if len(slices) != len(plans):
            raise ValueError("one plan per scan is required")
        lengths = [s.shape[0] for s in slices]
        for n, plan in zip(lengths, plans):
            if n != plan.l:
                raise ValueError(f"scan has {n} slices but its plan selects {plan.l}")
        stacked = torch.cat([s.reshape(s.shape[0], 1, *s.shape[-2:]) for s in slices]).to(self.dtype)
        feats = self.encoder(stacked)
        rows = torch.cat([torch.full((n,), b, dtype=torch.long) for b, n in enumerate(lengths)])
        cols = torch.cat([torch.tensor(p.selected, dtype=torch.long) for p in plans])
        grid = feats.new_zeros(len(slices), self.cfg.t, feats.shape[1])
        grid = grid.index_put((rows, cols), feats)
        return grid

    def recurrent(self, grid: torch.Tensor) -> torch.Tensor:
        out, _ = self.rnn(grid)
        return out

    def head(self, rnn_out: torch.Tensor, keep: torch.Tensor) -> torch.Tensor:
        """Mask layer, concatenation, dense layer and output logits."""
        routed = rnn_out * keep.to(rnn_out.dtype).unsqueeze(-1)
        h = F.relu(self.dense(routed.flatten(1)))
        return self.out(h)

    def forward(self, slices: Sequence[torch.Tensor], plans: Sequence[RoutingPlan]) -> torch.Tensor:
        grid = self.place(slices, plans)
        return self.head(self.recurrent(grid), self.keep_mask(plans))

    def position_columns(self, positions) -> torch.Tensor:
        """Boolean selector over dense-layer input columns for the given positions."""
        sel = torch.zeros(self.cfg.t, dtype=torch.bool)
        sel[list(positions)] = True
        return sel.repeat_interleave(self.cfg.rnn_units)

    def frozen_columns(self, plans: Sequence[RoutingPlan]) -> torch.Tensor:
        """Columns whose position is selected by no plan in the batch."""
        used = set()
        for p in plans:
            used.update(p.selected)
        return ~self.position_columns(sorted(used))

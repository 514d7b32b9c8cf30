"""Seeded training loop and single-file checkpoints."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from safetensors.torch import load_file, save_file

from ..errors import ConfigError
from .classifier import PreparedScan, predict_prepared, train_step
from .model import RACNet, RACNetConfig

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "lungscan-racnet"
CHECKPOINT_VERSION = 1
# safetensors stores header metadata in a hash map whose order varies between
# runs; one canonical JSON value under a single key keeps files byte-stable.
META_KEY = "lungscan"


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    batch_size: int = 5
    lr: float = 1e-4
    steps: int = 200

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def build_model(cfg: RACNetConfig, seed: int = 0, dtype: torch.dtype = torch.float32) -> RACNet:
    seed_everything(seed)
    return RACNet(cfg).to(dtype)


def iterate_batches(n: int, batch_size: int, seed: int):
    """Endless stream of index batches; reshuffled every pass over the data."""
    rng = np.random.default_rng(seed)
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start:start + batch_size].tolist()


def fit(model: RACNet, samples: Sequence[PreparedScan], tcfg: TrainConfig, log_path=None) -> list[float]:
    """Run ``tcfg.steps`` Adam steps; optionally log JSON lines (step, loss, lr)."""
    if not samples:
        raise ValueError("no training samples")
    unlabeled = [s.scan_id for s in samples if s.label is None]
    if unlabeled:
        raise ValueError(f"training scans without a label: {unlabeled}")
    torch.manual_seed(tcfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=tcfg.lr)
    batches = iterate_batches(len(samples), tcfg.batch_size, tcfg.seed)
    losses = []
    fh = open(log_path, "w") if log_path is not None else None
    try:
        for step in range(tcfg.steps):
            idx = next(batches)
            loss = train_step(model, optimizer, [samples[i] for i in idx])
            losses.append(loss)
            if fh is not None:
                fh.write(json.dumps({"step": step, "loss": loss, "lr": tcfg.lr}, sort_keys=True) + "\n")
            if step % 50 == 0:
                log.info("step %d loss %.5f", step, loss)
    finally:
        if fh is not None:
            fh.close()
    return losses


def predict(model: RACNet, samples: Sequence[PreparedScan]) -> list[np.ndarray]:
    return [predict_prepared(model, s).probabilities for s in samples]


def save_checkpoint(model: RACNet, path, extra: dict | None = None) -> None:
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": str(CHECKPOINT_VERSION),
        "config": json.dumps(model.cfg.to_dict(), sort_keys=True),
        "dtype": str(model.dtype).replace("torch.", ""),
    }
    if extra:
        meta["extra"] = json.dumps(extra, sort_keys=True)
    tensors = {k: v.detach().contiguous() for k, v in model.state_dict().items()}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    save_file(tensors, str(path), metadata={META_KEY: json.dumps(meta, sort_keys=True)})


def read_checkpoint_meta(path) -> dict:
    from safetensors import SafetensorError, safe_open

    try:
        with safe_open(str(path), framework="pt") as f:
            raw = (f.metadata() or {}).get(META_KEY, "{}")
        meta = json.loads(raw)
    except (OSError, ValueError, SafetensorError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(meta, dict) or meta.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if int(meta.get("version", -1)) != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    return meta


def load_checkpoint(path, expect: RACNetConfig | None = None) -> RACNet:
    meta = read_checkpoint_meta(path)
    cfg = RACNetConfig.from_dict(json.loads(meta["config"]))
    if expect is not None and expect != cfg:
        diff = {k: (v, getattr(cfg, k)) for k, v in asdict(expect).items() if getattr(cfg, k) != v}
        raise ConfigError(f"checkpoint config does not match run config: {diff}")
    model = RACNet(cfg).to(getattr(torch, meta.get("dtype", "float32")))
    model.load_state_dict(load_file(str(path)))
    model.eval()
    return model

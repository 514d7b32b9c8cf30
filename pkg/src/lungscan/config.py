"""Run configuration: INI-style file, environment overrides, canonical dump.

Precedence, highest first: explicit overrides (command-line flags), then
``LUNGSCAN_<SECTION>_<KEY>`` environment variables, then the config file,
then built-in defaults. Sections are ``pipeline``, ``racnet``, ``train`` and
``run``.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import ConfigError
from .racnet.model import RACNetConfig
from .racnet.training import TrainConfig
from .segmentation import PipelineConfig

ENV_PREFIX = "LUNGSCAN_"


@dataclass(frozen=True)
class RunOptions:
    workers: int = 1
    data_root: str = ""
    output_root: str = ""
    backend: str = "fake"
    fake_config: str = ""

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    racnet: RACNetConfig = field(default_factory=RACNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    run: RunOptions = field(default_factory=RunOptions)
    prompts_file: str = ""

    @property
    def seed(self) -> int:
        return self.train.seed


_SECTIONS = {"pipeline": PipelineConfig, "racnet": RACNetConfig, "train": TrainConfig, "run": RunOptions}
_SKIP = {"pipeline": {"prompts"}}


def _keys(section: str) -> list[str]:
    return [f.name for f in dataclasses.fields(_SECTIONS[section]) if f.name not in _SKIP.get(section, ())]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def _defaults() -> dict[str, dict[str, str]]:
    out = {}
    for sec, cls in _SECTIONS.items():
        inst = cls()
        out[sec] = {k: _fmt(getattr(inst, k)) for k in _keys(sec)}
    out["pipeline"]["prompts_file"] = ""
    return out


def _apply(flat: dict[str, dict[str, str]], section: str, key: str, value: str, origin: str) -> None:
    if section not in flat:
        raise ConfigError(f"{origin}: unknown section [{section}]")
    if key not in flat[section]:
        raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]")
    flat[section][key] = str(value)


def _build(flat: dict[str, dict[str, str]]) -> RunConfig:
    parts = {}
    for sec, cls in _SECTIONS.items():
        inst = cls()
        kwargs = {k: _parse(flat[sec][k], getattr(inst, k), f"[{sec}] {k}") for k in _keys(sec)}
        if sec == "pipeline" and flat["pipeline"]["prompts_file"]:
            kwargs["prompts"] = _load_prompts(flat["pipeline"]["prompts_file"])
        try:
            parts[sec] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{sec}]: {exc}") from exc
    return RunConfig(**parts, prompts_file=flat["pipeline"]["prompts_file"])


def _load_prompts(path) -> dict[str, tuple[str, ...]]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read prompts file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object mapping target -> list of prompts")
    return {str(k): tuple(v) for k, v in doc.items()}


def load_config(path=None, overrides: Mapping[str, object] | None = None,
                env: Mapping[str, str] | None = None) -> RunConfig:
    """Resolve a :class:`RunConfig`.

    ``overrides`` maps ``"section.key"`` to values; ``None`` values are ignored.
    """
    flat = _defaults()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for sec in cp.sections():
            for key, value in cp.items(sec):
                _apply(flat, sec, key, value, str(path))
    env = os.environ if env is None else env
    for sec, keys in flat.items():
        for key in list(keys):
            name = f"{ENV_PREFIX}{sec}_{key}".upper()
            if name in env:
                _apply(flat, sec, key, env[name], f"${name}")
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        sec, key = dotted.split(".", 1)
        _apply(flat, sec, key, _fmt(value), "command line")
    return _build(flat)


def config_to_flat(cfg: RunConfig) -> dict[str, dict[str, str]]:
    flat = {}
    for sec in _SECTIONS:
        inst = getattr(cfg, sec)
        flat[sec] = {k: _fmt(getattr(inst, k)) for k in _keys(sec)}
    flat["pipeline"]["prompts_file"] = cfg.prompts_file
    return flat


def dump_config(cfg: RunConfig) -> str:
    """Canonical text form: sections and keys in sorted order."""
    lines = []
    flat = config_to_flat(cfg)
    for sec in sorted(flat):
        lines.append(f"[{sec}]")
        for key in sorted(flat[sec]):
            lines.append(f"{key} = {flat[sec][key]}")
        lines.append("")
    return "\n".join(lines)

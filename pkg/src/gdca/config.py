"""Flat ``key = value`` configuration for training runs."""

from __future__ import annotations

import re
from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .losses import LossWeights
from .models import GeneratorConfig
from .train import TrainSchedule

_INT = re.compile(r"[+-]?\d+")


@dataclass(frozen=True)
class Config:
    # generator
    base_channels: int = 64
    n_ca_blocks: int = 4
    n_le_blocks: int = 4
    ca_reduction: int = 4
    skip_weight_init: float = 1.0
    # loss weights
    w_percep: float = 1.0
    w_img_gan: float = 1e-3
    w_feat_gan: float = 1e-3
    # schedule
    pretrain_steps: int = 1000
    gan_steps: int = 1000
    batch_size: int = 4
    lr_pretrain: float = 1e-4
    lr_gan: float = 1e-4
    seed: int = 0
    # data
    dataset_dir: str = "data/train"
    patch_size: int = 24
    augment: bool = True
    # feature extractor and checkpoints
    extractor_seed: int = 0
    checkpoint_path: str = "gdca.ckpt"
    checkpoint_interval: int = 100
    resume: bool = False
    log_path: str = ""

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(self.base_channels, self.n_ca_blocks, self.n_le_blocks,
                               self.ca_reduction, 4, self.skip_weight_init)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.w_percep, self.w_img_gan, self.w_feat_gan)

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(self.pretrain_steps, self.gan_steps, self.batch_size,
                             self.lr_pretrain, self.lr_gan, self.seed)

    def validate(self) -> "Config":
        """Build every derived object once so semantic errors surface as ConfigError."""
        try:
            self.generator_config()
            self.loss_weights()
            self.schedule()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.patch_size < 8 or (4 * self.patch_size) % 16:
            raise ConfigError("patch_size must be >= 8 and 4*patch_size divisible by 16")
        if self.checkpoint_interval < 0:
            raise ConfigError("checkpoint_interval must be non-negative")
        if not 0 <= self.seed < 2 ** 64 or not 0 <= self.extractor_seed < 2 ** 64:
            raise ConfigError("seeds must fit in an unsigned 64-bit integer")
        return self

    def with_overrides(self, **kw) -> "Config":
        return replace(self, **kw)

    def to_text(self) -> str:
        """Canonical rendering; ``parse_config(c.to_text()) == c``."""
        return "".join(f"{f.name} = {_render(getattr(self, f.name))}\n" for f in fields(self))


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(raw: str, kind, key: str, lineno: int):
    if kind is bool:
        if raw in ("true", "false"):
            return raw == "true"
        raise ConfigError(f"line {lineno}: {key} expects true/false, got {raw!r}", lineno, key)
    if kind is int:
        if _INT.fullmatch(raw):
            return int(raw)
        raise ConfigError(f"line {lineno}: {key} expects an integer, got {raw!r}", lineno, key)
    if kind is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} expects a real number, got {raw!r}", lineno, key) from None
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    return raw


_KINDS = {"int": int, "float": float, "bool": bool, "str": str}


def parse_config(text: str) -> Config:
    kinds = {f.name: _KINDS[f.type] if isinstance(f.type, str) else f.type for f in fields(Config)}
    seen: dict[str, int] = {}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}", lineno)
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", lineno, key)
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})", lineno, key)
        seen[key] = lineno
        values[key] = _convert(raw, kinds[key], key, lineno)
    return Config(**values)

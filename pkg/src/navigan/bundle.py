"""ModelBundle: generator, optional discriminator, and the dimensions that built them.

On disk a bundle is a safetensors file; the architecture lives in the
string metadata under ``navigan``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import torch
from safetensors.torch import load, save

from .discriminator import Discriminator
from .generators import ADVERSARIAL_VARIANTS, NAVIGAN, build_generator

BUNDLE_VERSION = 1


class ModelDimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    variant: str = NAVIGAN
    t_obs: int = 8
    t_pred: int = 12
    hidden_dim: int = 32
    pool_dim: int = 32
    noise_dim: int = 8
    mlp_dim: int = 64


@dataclass
class ModelBundle:
    config: ModelConfig
    generator: torch.nn.Module
    discriminator: Discriminator | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, config: ModelConfig, seed: int | None = None, dtype=torch.float64):
        """Fresh parameters; ``seed`` makes initialisation reproducible."""
        with torch.random.fork_rng(devices=[]):
            if seed is not None:
                torch.manual_seed(seed)
            gen = build_generator(config.variant, config.hidden_dim, config.pool_dim,
                                  config.noise_dim, config.mlp_dim).to(dtype)
            disc = None
            if config.variant in ADVERSARIAL_VARIANTS:
                disc = Discriminator(config.hidden_dim, config.hidden_dim, config.pool_dim,
                                     config.mlp_dim).to(dtype)
        return cls(config, gen, disc)

    @property
    def noise_dim(self) -> int:
        return getattr(self.generator, "noise_dim", 0)

    def state_tensors(self) -> dict[str, torch.Tensor]:
        out = {f"generator.{k}": v for k, v in self.generator.state_dict().items()}
        if self.discriminator is not None:
            out.update({f"discriminator.{k}": v for k, v in self.discriminator.state_dict().items()})
        return out

    def to_bytes(self) -> bytes:
        tensors = {k: v.detach().contiguous() for k, v in self.state_tensors().items()}
        meta = {"format_version": BUNDLE_VERSION, "config": asdict(self.config), "extra": self.extra}
        return save(tensors, metadata={"navigan": json.dumps(meta, sort_keys=True)})

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, expect: dict | None = None):
        header_len = int.from_bytes(data[:8], "little")
        header = json.loads(data[8:8 + header_len])
        raw = header.get("__metadata__", {}).get("navigan")
        if raw is None:
            raise ValueError("not a navigan model bundle")
        meta = json.loads(raw)
        if meta.get("format_version") != BUNDLE_VERSION:
            raise ValueError(f"unsupported bundle version {meta.get('format_version')}")
        config = ModelConfig(**meta["config"])
        for key, value in (expect or {}).items():
            if getattr(config, key) != value:
                raise ModelDimensionMismatch(f"bundle has {key}={getattr(config, key)}, expected {value}")
        tensors = load(data)
        dtype = next(iter(tensors.values())).dtype
        bundle = cls.build(config, dtype=dtype)
        bundle.extra = meta.get("extra", {})
        for prefix, module in (("generator.", bundle.generator), ("discriminator.", bundle.discriminator)):
            if module is None:
                continue
            state = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
            try:
                module.load_state_dict(state, strict=True)
            except RuntimeError as exc:
                raise ModelDimensionMismatch(str(exc)) from None
        return bundle

    @classmethod
    def load(cls, path, expect: dict | None = None):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), expect)

"""Training configuration: dataclass fields, named profiles, and config-file
loading with strict key checking."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import InvalidConfigError, UnknownConfigKeyError
from .losses import LossConfig

MIXER_CRA = "CRA"  # token-level cross-attention mixer
MIXER_CHA = "CHA"  # channel-attention ablation variant


@dataclass
class AblationFlags:
    v2a: bool = True          # vision-to-audio fusion direction
    a2v: bool = True          # audio-to-vision fusion direction
    mixer: str = MIXER_CRA    # CRA | CHA
    se: bool = True           # squeeze-excitation candidate aggregation
    mca: bool = True          # mask-conditioned attention in the dependency head
    dual: bool = True         # dual-branch decoding (False: one shared head)
    supervise_func: bool = True
    supervise_dep: bool = True


@dataclass
class TrainConfig:
    # optimization
    epochs: int = 25
    lr: float = 2e-5
    warmup_steps: int = 0  # linear lr ramp; guards against early sigmoid saturation
    max_grad_norm: float = 1.0  # global-norm clip; 0 disables
    weight_decay: float = 1e-2
    batch_size: int = 8
    seed: int = 0
    # data
    image_size: int = 512
    sample_rate: int = 16000
    target_seconds: float = 5.0
    frame_length: int = 400
    hop_length: int = 160
    train_fraction: float = 0.8
    unseen_categories: tuple[str, ...] = ()
    # model
    backbone_channels: tuple[int, int, int, int] = (32, 64, 128, 256)
    visual_width: int = 256
    embed_dim: int = 256
    n_heads: int = 4
    n_queries: int = 8
    audio_channels: tuple[int, int, int] = (16, 32, 64)
    enhancer_layers: int = 2
    enhancer_heads: int = 4
    # augmentation
    rotate: bool = True
    hflip: bool = True
    color_jitter: bool = True
    # objectives and ablations
    loss: LossConfig = field(default_factory=LossConfig)
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def validate(self) -> None:
        if self.lr <= 0 or self.weight_decay < 0:
            raise InvalidConfigError("lr must be > 0 and weight_decay >= 0")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise InvalidConfigError("epochs and batch_size must be positive")
        if self.image_size % 32:
            raise InvalidConfigError(f"image_size must be divisible by 32, got {self.image_size}")
        if not (self.ablation.supervise_func or self.ablation.supervise_dep):
            raise InvalidConfigError("at least one of supervise_func / supervise_dep must be on")
        if self.ablation.mixer not in (MIXER_CRA, MIXER_CHA):
            raise InvalidConfigError(f"mixer must be CRA or CHA, got {self.ablation.mixer!r}")
        if self.embed_dim % self.n_heads:
            raise InvalidConfigError("embed_dim must be divisible by n_heads")
        if not 0 < self.train_fraction < 1:
            raise InvalidConfigError("train_fraction must be in (0, 1)")
        self.loss.validate()


def desk_profile(**overrides) -> TrainConfig:
    """Small profile that trains in minutes on a laptop CPU.

    Rotation augmentation is off: the synthetic desk categories define the
    function part by absolute orientation (top third), and most shape families
    are rotation-symmetric, so rotated copies would make the target ambiguous.
    """
    cfg = TrainConfig(
        epochs=5,
        lr=4e-3,
        warmup_steps=25,
        batch_size=4,
        image_size=64,
        sample_rate=8000,
        frame_length=256,
        hop_length=128,
        backbone_channels=(8, 16, 32, 64),
        visual_width=64,
        embed_dim=64,
        n_queries=2,
        audio_channels=(8, 16, 32),
        rotate=False,
    )
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def full_profile(**overrides) -> TrainConfig:
    cfg = TrainConfig()
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


PROFILES = {"desk": desk_profile, "full": full_profile}


def _apply_dict(obj, data: dict, path: str = ""):
    valid = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in valid:
            raise UnknownConfigKeyError(f"unknown config key {path + key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            _apply_dict(current, value, path=f"{path}{key}.")
        elif isinstance(current, tuple) and isinstance(value, list):
            setattr(obj, key, tuple(value))
        else:
            setattr(obj, key, value)


def load_config(path: str | Path | None = None, profile: str = "desk", **overrides) -> TrainConfig:
    """Build a TrainConfig from a named profile, an optional YAML file, and
    keyword overrides (applied in that order). Unknown keys are errors."""
    if profile not in PROFILES:
        raise InvalidConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    cfg = PROFILES[profile]()
    if path is not None:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(data, dict):
            raise InvalidConfigError(f"config file {path} must contain a mapping")
        _apply_dict(cfg, data)
    if overrides:
        _apply_dict(cfg, overrides)
    cfg.validate()
    return cfg


def config_to_dict(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> TrainConfig:
    cfg = TrainConfig()
    _apply_dict(cfg, data)
    return cfg


def config_diff(a: TrainConfig, b: TrainConfig) -> dict[str, tuple]:
    """Flat map of dotted field name -> (a value, b value) for fields that differ."""
    def flatten(obj, prefix=""):
        out = {}
        for f in fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                out.update(flatten(v, prefix=f"{prefix}{f.name}."))
            else:
                out[prefix + f.name] = v
        return out

    fa, fb = flatten(a), flatten(b)
    return {k: (fa[k], fb[k]) for k in fa if fa[k] != fb[k]}

"""Model configuration for the dual-branch fusion network.

Two branch families share the prediction heads: a small staged
convolutional encoder (motion, and optionally ethnic context from flow
or RGB) and a patch-based transformer encoder (ethnic context from RGB
texture). Branches never share weights.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..errors import ConfigError

N_EMOTIONS = 3     # Negative, Positive, Surprise
N_ETHNICITIES = 2  # Asian, NonAsian


class Variant(enum.Enum):
    """Benchmark rows: which branch feeds the ethnic context, if any."""

    MOTION_ONLY = "motion_only"
    DUAL_MOTION = "dual_motion"
    MOTION_RGB_CONV = "motion_plus_rgb_conv"
    MOTION_RGB_PATCH = "motion_plus_rgb_patch"

    @property
    def has_ethnic_branch(self) -> bool:
        return self is not Variant.MOTION_ONLY

    @property
    def needs_rgb(self) -> bool:
        return self in (Variant.MOTION_RGB_CONV, Variant.MOTION_RGB_PATCH)

    @property
    def ethnicity_representation(self) -> str:
        return {
            Variant.MOTION_ONLY: "N/A",
            Variant.DUAL_MOTION: "Optical Flow",
            Variant.MOTION_RGB_CONV: "RGB Texture",
            Variant.MOTION_RGB_PATCH: "RGB Texture",
        }[self]


@dataclass(frozen=True)
class EncoderConfig:
    """Staged conv encoder: conv(stride=downsample) + ReLU per stage,
    then global average pooling and a projection to feature_dim."""

    input_channels: int = 3
    stage_widths: tuple[int, ...] = (8, 16, 32)
    kernel_size: int = 3
    downsample: int = 2
    feature_dim: int = 32

    def __post_init__(self):
        if self.feature_dim < 2:
            raise ConfigError("feature_dim must be >= 2")
        if len(self.stage_widths) < 1:
            raise ConfigError("need at least one stage")
        if self.kernel_size % 2 != 1:
            raise ConfigError("kernel_size must be odd")
        if self.downsample < 1:
            raise ConfigError("downsample must be >= 1")

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "stage_widths": list(self.stage_widths),
            "kernel_size": self.kernel_size,
            "downsample": self.downsample,
            "feature_dim": self.feature_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(
            input_channels=d["input_channels"],
            stage_widths=tuple(d["stage_widths"]),
            kernel_size=d["kernel_size"],
            downsample=d["downsample"],
            feature_dim=d["feature_dim"],
        )


@dataclass(frozen=True)
class PatchEncoderConfig:
    """Patch transformer: linear patch embedding + positional term,
    pre-LN self-attention blocks, mean pooling over patches."""

    patch_size: int = 8
    embed_dim: int = 32
    n_blocks: int = 2
    n_heads: int = 4
    mlp_ratio: float = 2.0
    feature_dim: int = 32
    pooling: str = "mean"

    def __post_init__(self):
        if self.embed_dim % self.n_heads != 0:
            raise ConfigError("embed_dim must be divisible by n_heads")
        if self.pooling != "mean":
            raise ConfigError("only mean pooling is supported")
        if self.n_blocks < 1:
            raise ConfigError("need at least one block")

    def to_dict(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "embed_dim": self.embed_dim,
            "n_blocks": self.n_blocks,
            "n_heads": self.n_heads,
            "mlp_ratio": self.mlp_ratio,
            "feature_dim": self.feature_dim,
            "pooling": self.pooling,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatchEncoderConfig":
        return cls(
            patch_size=d["patch_size"],
            embed_dim=d["embed_dim"],
            n_blocks=d["n_blocks"],
            n_heads=d["n_heads"],
            mlp_ratio=d["mlp_ratio"],
            feature_dim=d["feature_dim"],
            pooling=d.get("pooling", "mean"),
        )


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 64
    feature_dim: int = 32
    motion: EncoderConfig = field(default_factory=EncoderConfig)
    ethnic_conv: EncoderConfig = field(default_factory=EncoderConfig)
    texture: PatchEncoderConfig = field(default_factory=PatchEncoderConfig)

    def __post_init__(self):
        for name, enc_dim in (
            ("motion", self.motion.feature_dim),
            ("ethnic_conv", self.ethnic_conv.feature_dim),
            ("texture", self.texture.feature_dim),
        ):
            if enc_dim != self.feature_dim:
                raise ConfigError(f"{name}.feature_dim {enc_dim} != model feature_dim {self.feature_dim}")

    def validate_for(self, variant: Variant) -> None:
        if variant == Variant.MOTION_RGB_PATCH and self.image_size % self.texture.patch_size != 0:
            raise ConfigError(
                f"image side {self.image_size} not divisible by patch size {self.texture.patch_size}"
            )

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.texture.patch_size) ** 2

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "feature_dim": self.feature_dim,
            "motion": self.motion.to_dict(),
            "ethnic_conv": self.ethnic_conv.to_dict(),
            "texture": self.texture.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            image_size=d["image_size"],
            feature_dim=d["feature_dim"],
            motion=EncoderConfig.from_dict(d["motion"]),
            ethnic_conv=EncoderConfig.from_dict(d["ethnic_conv"]),
            texture=PatchEncoderConfig.from_dict(d["texture"]),
        )

    @classmethod
    def small(cls, image_size: int = 64, feature_dim: int = 32) -> "ModelConfig":
        """Desk-scale default used by the CLI and tests."""
        return cls(
            image_size=image_size,
            feature_dim=feature_dim,
            motion=EncoderConfig(feature_dim=feature_dim),
            ethnic_conv=EncoderConfig(feature_dim=feature_dim),
            texture=PatchEncoderConfig(feature_dim=feature_dim),
        )

    @classmethod
    def toy(cls, image_size: int = 16) -> "ModelConfig":
        """Tiny configuration for finite-difference gradient checks."""
        return cls(
            image_size=image_size,
            feature_dim=4,
            motion=EncoderConfig(stage_widths=(2, 3), feature_dim=4),
            ethnic_conv=EncoderConfig(stage_widths=(2, 3), feature_dim=4),
            texture=PatchEncoderConfig(patch_size=8, embed_dim=6, n_blocks=2, n_heads=2, feature_dim=4),
        )

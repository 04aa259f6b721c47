"""Frozen feature extraction for the prima facie study.

A frozen encoder is a staged conv encoder with fixed weights: either
loaded from a checkpoint file (for users holding pretrained weights) or
drawn once from a seeded PCG64 stream (the deterministic random-feature
fallback; PCG64 is platform-stable, so features match across runs and
machines). Extraction is a pure function of the input.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import ConfigError
from ..runutil import derived_rng
from .autodiff import Tensor
from .config import EncoderConfig
from .network import encode_conv
from .params import ParamSet, _conv_stack, load_checkpoint, save_checkpoint


class FrozenEncoder:
    """Fixed-weight conv encoder; no gradient state."""

    def __init__(self, config: EncoderConfig, params: ParamSet, origin: str):
        expected = _frozen_param_set(config, seed=0)
        if params.names() != expected.names():
            raise ConfigError("weight file does not match the frozen encoder configuration")
        for name in expected.names():
            if params[name].shape != expected[name].shape:
                raise ConfigError(
                    f"weight {name}: shape {params[name].shape} != config shape {expected[name].shape}"
                )
        self.config = config
        self.params = params
        self.origin = origin

    @classmethod
    def random_fallback(cls, config: EncoderConfig, seed: int) -> "FrozenEncoder":
        return cls(config, _frozen_param_set(config, seed), origin=f"random-fallback(seed={seed})")

    @classmethod
    def from_file(cls, path) -> "FrozenEncoder":
        params, model_config, _variant, extra = load_checkpoint(path)
        if extra.get("kind") != "frozen_encoder":
            raise ConfigError(f"{path}: not a frozen-encoder checkpoint")
        return cls(model_config.motion, params, origin=f"file:{path}")

    def save(self, path) -> None:
        from .config import ModelConfig, PatchEncoderConfig, Variant

        container = ModelConfig(
            image_size=64,
            feature_dim=self.config.feature_dim,
            motion=self.config,
            ethnic_conv=self.config,
            texture=PatchEncoderConfig(feature_dim=self.config.feature_dim),
        )
        save_checkpoint(path, self.params, container, Variant.MOTION_ONLY, extra={"kind": "frozen_encoder"})


def _frozen_param_set(config: EncoderConfig, seed: int) -> ParamSet:
    rng = derived_rng(seed, "frozen-encoder")
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    _conv_stack(out, rng, "motion", config)
    return ParamSet(out)


def extract_frozen_features(flow_image: np.ndarray, encoder: FrozenEncoder) -> np.ndarray:
    """Length-E feature vector; pure function of (input, encoder weights)."""
    x = np.asarray(flow_image, dtype=np.float64)
    if x.ndim != 3:
        raise ConfigError(f"expected a (3, H, W) flow image, got shape {x.shape}")
    from .network import INPUT_CENTER

    feat, _ = encode_conv(Tensor(x[None] - INPUT_CENTER), encoder.params, {}, "motion", encoder.config)
    return feat.data[0]

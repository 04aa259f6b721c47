"""Named-tensor parameter sets, initialization, and the checkpoint container.

Checkpoint layout (MECK1, little-endian):

    magic "MECK1\\n"
    u32 header length
    header JSON: {"config": ..., "variant": ..., "tensors": [{"name", "shape"}, ...]}
    concatenated row-major float64 tensor data, in header order
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..runutil import atomic_write_bytes, derived_rng
from .config import ModelConfig, N_EMOTIONS, N_ETHNICITIES, Variant

_MAGIC = b"MECK1\n"


@dataclass
class ParamSet:
    """Ordered name -> float64 ndarray mapping; treated as immutable between steps."""

    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return list(self.tensors.keys())

    def copy(self) -> "ParamSet":
        return ParamSet(OrderedDict((k, v.copy()) for k, v in self.tensors.items()))

    def allclose(self, other: "ParamSet", atol: float = 0.0) -> bool:
        if self.names() != other.names():
            return False
        if atol == 0.0:
            return all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors)
        return all(np.allclose(self.tensors[k], other.tensors[k], atol=atol) for k in self.tensors)

    def n_scalars(self) -> int:
        return sum(v.size for v in self.tensors.values())


GradientSet = dict  # name -> ndarray, same shapes as the ParamSet


def _kaiming(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def _trunc_normal(rng: np.random.Generator, shape: tuple, std: float = 0.02) -> np.ndarray:
    # clipped at 2 std, the usual cheap truncation for transformer embeddings
    return np.clip(rng.normal(0.0, std, size=shape), -2 * std, 2 * std)


def _conv_stack(out: OrderedDict, rng, prefix: str, cfg) -> None:
    in_ch = cfg.input_channels
    k = cfg.kernel_size
    for i, width in enumerate(cfg.stage_widths):
        out[f"{prefix}.stage{i}.w"] = _kaiming(rng, (width, in_ch, k, k), in_ch * k * k)
        # small positive bias keeps stage pre-activations off the ReLU kink
        out[f"{prefix}.stage{i}.b"] = np.full(width, 0.01)
        in_ch = width
    out[f"{prefix}.proj.w"] = _kaiming(rng, (cfg.feature_dim, in_ch), in_ch)
    out[f"{prefix}.proj.b"] = np.zeros(cfg.feature_dim)


def _patch_stack(out: OrderedDict, rng, prefix: str, cfg, n_patches: int) -> None:
    patch_dim = 3 * cfg.patch_size * cfg.patch_size
    d = cfg.embed_dim
    out[f"{prefix}.embed.w"] = _trunc_normal(rng, (d, patch_dim))
    out[f"{prefix}.embed.b"] = np.zeros(d)
    out[f"{prefix}.pos"] = _trunc_normal(rng, (n_patches, d))
    hidden = int(round(cfg.mlp_ratio * d))
    for blk in range(cfg.n_blocks):
        p = f"{prefix}.block{blk}"
        out[f"{p}.ln1.gamma"] = np.ones(d)
        out[f"{p}.ln1.beta"] = np.zeros(d)
        for head_part in ("q", "k", "v", "o"):
            out[f"{p}.attn.{head_part}.w"] = _kaiming(rng, (d, d), d)
            out[f"{p}.attn.{head_part}.b"] = np.zeros(d)
        out[f"{p}.ln2.gamma"] = np.ones(d)
        out[f"{p}.ln2.beta"] = np.zeros(d)
        out[f"{p}.mlp.fc1.w"] = _kaiming(rng, (hidden, d), d)
        out[f"{p}.mlp.fc1.b"] = np.full(hidden, 0.01)
        out[f"{p}.mlp.fc2.w"] = _kaiming(rng, (d, hidden), hidden)
        out[f"{p}.mlp.fc2.b"] = np.zeros(d)
    out[f"{prefix}.norm.gamma"] = np.ones(d)
    out[f"{prefix}.norm.beta"] = np.zeros(d)
    out[f"{prefix}.proj.w"] = _kaiming(rng, (cfg.feature_dim, d), d)
    out[f"{prefix}.proj.b"] = np.zeros(cfg.feature_dim)


def init_params(config: ModelConfig, variant: Variant, seed: int) -> ParamSet:
    """Deterministic initialization from the labeled PRNG stream (PCG64)."""
    config.validate_for(variant)
    rng = derived_rng(seed, "init", variant.value)
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    _conv_stack(out, rng, "motion", config.motion)
    if variant == Variant.DUAL_MOTION or variant == Variant.MOTION_RGB_CONV:
        _conv_stack(out, rng, "ethnic", config.ethnic_conv)
    elif variant == Variant.MOTION_RGB_PATCH:
        _patch_stack(out, rng, "texture", config.texture, config.n_patches)
    e = config.feature_dim
    out["head.emotion.w"] = _kaiming(rng, (N_EMOTIONS, e), e)
    out["head.emotion.b"] = np.zeros(N_EMOTIONS)
    if variant.has_ethnic_branch:
        out["head.ethnicity.w"] = _kaiming(rng, (N_ETHNICITIES, e), e)
        out["head.ethnicity.b"] = np.zeros(N_ETHNICITIES)
        out["head.fusion.w"] = _kaiming(rng, (N_EMOTIONS, 2 * e), 2 * e)
        out["head.fusion.b"] = np.zeros(N_EMOTIONS)
    return ParamSet(out)


def save_checkpoint(path, params: ParamSet, config: ModelConfig, variant: Variant, extra: dict | None = None) -> None:
    header = {
        "config": config.to_dict(),
        "variant": variant.value,
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in params.tensors.items()],
    }
    if extra:
        header["extra"] = extra
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [_MAGIC, struct.pack("<I", len(header_bytes)), header_bytes]
    for v in params.tensors.values():
        parts.append(np.ascontiguousarray(v, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_checkpoint(path) -> tuple[ParamSet, ModelConfig, Variant, dict]:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    off = len(_MAGIC)
    (header_len,) = struct.unpack_from("<I", data, off)
    off += 4
    try:
        header = json.loads(data[off : off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed checkpoint header") from exc
    off += header_len
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if off + nbytes > len(data):
            raise DataError(f"{path}: truncated tensor data at {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(data[off : off + nbytes], dtype="<f8").reshape(shape).copy()
        off += nbytes
    config = ModelConfig.from_dict(header["config"])
    variant = Variant(header["variant"])
    return ParamSet(tensors), config, variant, header.get("extra", {})


def check_shapes(params: ParamSet, reference: ParamSet) -> None:
    """Raise if params does not carry exactly the reference names/shapes."""
    if params.names() != reference.names():
        raise ConfigError(
            f"parameter names mismatch: {set(params.names()) ^ set(reference.names())}"
        )
    for name in reference.names():
        if params[name].shape != reference[name].shape:
            raise ConfigError(
                f"shape mismatch for {name}: {params[name].shape} != {reference[name].shape}"
            )

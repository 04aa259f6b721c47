from .config import EncoderConfig, ModelConfig, N_EMOTIONS, N_ETHNICITIES, PatchEncoderConfig, Variant
from .params import GradientSet, ParamSet, check_shapes, init_params, load_checkpoint, save_checkpoint
from .network import (
    ModelInputs,
    ModelOutputs,
    VariantInputError,
    encode_motion,
    encode_texture_patches,
    forward,
    fuse_and_classify,
    predict_emotion,
)
from .losses import LossBreakdown, cce, softmax_probs, total_loss
from .training import (
    AdamState,
    NonFiniteGradientError,
    TrainConfig,
    TrainSample,
    backward,
    evaluate_predictions,
    lr_schedule,
    optimizer_step,
    train_fold,
)
from .features import FrozenEncoder, extract_frozen_features
from .gradcam import ActivationMap, export_activation_map, gradcam

__all__ = [
    "EncoderConfig",
    "ModelConfig",
    "N_EMOTIONS",
    "N_ETHNICITIES",
    "PatchEncoderConfig",
    "Variant",
    "GradientSet",
    "ParamSet",
    "check_shapes",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "ModelInputs",
    "ModelOutputs",
    "VariantInputError",
    "encode_motion",
    "encode_texture_patches",
    "forward",
    "fuse_and_classify",
    "predict_emotion",
    "LossBreakdown",
    "cce",
    "softmax_probs",
    "total_loss",
    "AdamState",
    "NonFiniteGradientError",
    "TrainConfig",
    "TrainSample",
    "backward",
    "evaluate_predictions",
    "lr_schedule",
    "optimizer_step",
    "train_fold",
    "FrozenEncoder",
    "extract_frozen_features",
    "ActivationMap",
    "export_activation_map",
    "gradcam",
]

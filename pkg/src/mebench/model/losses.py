"""The three-term categorical cross-entropy objective.

total = l_emo + l_ethnic + l_fusion, summed in that order. The fusion
term scores the fused logits against the EMOTION label (the merged
head predicts emotion with ethnic context attached). For the
motion-only variant the ethnic and fusion terms are zero by definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from .network import ModelOutputs


def cce(logits: np.ndarray, target: int) -> float:
    """-log softmax(logits)[target], with max-subtraction stabilization."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ConfigError(f"cce expects a logit vector, got shape {logits.shape}")
    if not np.isfinite(logits).all():
        raise DataError("non-finite logits")
    if not (0 <= target < logits.shape[0]):
        raise ConfigError(f"target {target} out of range for {logits.shape[0]} classes")
    z = logits - logits.max()
    return float(np.log(np.exp(z).sum()) - z[target])


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class LossBreakdown:
    l_emo: float
    l_ethnic: float
    l_fusion: float
    total: float

    def __post_init__(self):
        for name in ("l_emo", "l_ethnic", "l_fusion"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be nonnegative")

    @classmethod
    def of(cls, l_emo: float, l_ethnic: float = 0.0, l_fusion: float = 0.0) -> "LossBreakdown":
        # total evaluated in the declared order so the identity is exact
        return cls(l_emo=l_emo, l_ethnic=l_ethnic, l_fusion=l_fusion, total=l_emo + l_ethnic + l_fusion)

    def to_dict(self) -> dict:
        return {"l_emo": self.l_emo, "l_ethnic": self.l_ethnic, "l_fusion": self.l_fusion, "total": self.total}


def total_loss(outputs: ModelOutputs, emotion_label: int, ethnicity_label: int | None = None) -> LossBreakdown:
    """Per-sample loss breakdown for a batch-of-one forward pass."""
    emotion_logits, ethnicity_logits, fused_logits = outputs.logits_arrays()
    l_emo = cce(emotion_logits[0], emotion_label)
    if ethnicity_logits is None:
        return LossBreakdown.of(l_emo)
    if ethnicity_label is None:
        raise DataError("ethnicity label required for dual variants")
    l_ethnic = cce(ethnicity_logits[0], ethnicity_label)
    l_fusion = cce(fused_logits[0], emotion_label)
    return LossBreakdown.of(l_emo, l_ethnic, l_fusion)

"""Anchor-free temporal action detection with Mechanics-MLP blocks."""

from ._tadml import (
    beta_giou_loss,
    infer,
    mean_ap,
    mechanics_mix,
    soft_nms,
    synth_dataset,
    tiou,
    train,
)

__all__ = [
    "beta_giou_loss",
    "infer",
    "mean_ap",
    "mechanics_mix",
    "soft_nms",
    "synth_dataset",
    "tiou",
    "train",
]

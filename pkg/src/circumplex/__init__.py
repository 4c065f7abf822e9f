"""Multi-task expression inference toolkit: discrete expression classes plus
continuous valence/arousal, trained at desk scale on synthetic data."""

from .affect_core import (
    AFFECTNET7,
    AFFECTNET8,
    EMOTIC26,
    AffectSample,
    ClassWeights,
    LabelSpace,
    ValueRange,
    compute_class_weights,
    compute_pos_weights,
    get_space,
    scale_from_unit,
    scale_to_unit,
    validate_sample,
)
from .losses import LossConfig, ccc, ccc_loss, combined_loss, mse_va, weighted_bce_combined, weighted_cross_entropy

__version__ = "0.1.0"

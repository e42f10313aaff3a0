"""Differentiable augmentation policy search space."""

from .ops import DEFAULT_OP_SET, GEOMETRIC_OPS, OPS, ImageOp, apply_image_op, get_op
from .policy import (
    OperationStage,
    Policy,
    SubPolicy,
    apply_policy_infer,
    apply_policy_train,
    apply_stage_train,
    apply_subpolicy_train,
    policy_distribution_snapshot,
    stage_parameter_count,
)

__all__ = [
    "DEFAULT_OP_SET",
    "GEOMETRIC_OPS",
    "OPS",
    "ImageOp",
    "OperationStage",
    "Policy",
    "SubPolicy",
    "apply_image_op",
    "apply_policy_infer",
    "apply_policy_train",
    "apply_stage_train",
    "apply_subpolicy_train",
    "get_op",
    "policy_distribution_snapshot",
    "stage_parameter_count",
]

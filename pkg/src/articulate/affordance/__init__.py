"""Agent-aware pose module: surface sampling, estimators and pose inference."""
from .estimator import (
    EstimatorConfig,
    PoseInference,
    actionability_alpha,
    affordance_A,
    fit,
    infer_pose,
    load_estimator,
    propose_Q,
    save_estimator,
)
from .kernel import KernelEstimator
from .losses import loss_bce, loss_cosine, loss_l1
from .mlp import MLPConfig, MLPEstimator, MLPNet
from .reward import reward_J
from .surface import InteractionPose, SurfacePoint, point_features, sample_surface

__all__ = [
    "EstimatorConfig", "PoseInference", "actionability_alpha", "affordance_A", "fit",
    "infer_pose", "load_estimator", "propose_Q", "save_estimator", "KernelEstimator",
    "loss_bce", "loss_cosine", "loss_l1", "MLPConfig", "MLPEstimator", "MLPNet", "reward_J",
    "InteractionPose", "SurfacePoint", "point_features", "sample_surface",
]

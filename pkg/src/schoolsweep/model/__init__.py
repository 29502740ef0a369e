from .net import (
    CLASSES,
    SCHOOL,
    FeatureBundle,
    cross_entropy_smoothed,
    ensemble_softmax,
    softmax,
    toy_forward_backward,
)
from .tensorio import TensorFormatError, read_tensor, write_tensor
from .train import TrainConfig, lr_range_test, train_toy

__all__ = [
    "CLASSES",
    "SCHOOL",
    "FeatureBundle",
    "TensorFormatError",
    "TrainConfig",
    "cross_entropy_smoothed",
    "ensemble_softmax",
    "lr_range_test",
    "read_tensor",
    "softmax",
    "toy_forward_backward",
    "train_toy",
    "write_tensor",
]

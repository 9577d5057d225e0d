from .functional import (
    batch_norm_backward,
    batch_norm_forward,
    conv2d_backward,
    conv2d_forward,
    global_avg_pool_backward,
    global_avg_pool_forward,
    linear_backward,
    linear_forward,
    relu_backward,
    relu_forward,
    softmax_cross_entropy,
)
from .layers import BatchNorm2d, BatchNormState, Conv2d, Linear, Parameter
from .optim import DivergenceError, lr_at, sgd_step

__all__ = [
    "BatchNorm2d",
    "BatchNormState",
    "Conv2d",
    "DivergenceError",
    "Linear",
    "Parameter",
    "batch_norm_backward",
    "batch_norm_forward",
    "conv2d_backward",
    "conv2d_forward",
    "global_avg_pool_backward",
    "global_avg_pool_forward",
    "linear_backward",
    "linear_forward",
    "lr_at",
    "relu_backward",
    "relu_forward",
    "sgd_step",
    "softmax_cross_entropy",
]

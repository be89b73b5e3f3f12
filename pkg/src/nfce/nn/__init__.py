"""Minimal NN layer library: conv2d, batch norm, ReLU, self-attention.

Forward passes return (output, cache); backward passes consume the cache
and a gradient of the loss with respect to the output, returning exact
reverse-mode gradients. A finite-difference checker verifies every layer.
"""

from .kernels import available_backends, get_backend, set_backend
from .layers import (
    AttentionCache,
    BatchNormCache,
    BatchNormLayer,
    ConvLayer,
    SelfAttentionLayer,
    attention_backward,
    attention_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
    softmax_row,
)
from .gradcheck import GradCheckResult, gradcheck, run_all_checks

__all__ = [
    "available_backends",
    "get_backend",
    "set_backend",
    "ConvLayer",
    "BatchNormLayer",
    "SelfAttentionLayer",
    "AttentionCache",
    "BatchNormCache",
    "conv2d_forward",
    "conv2d_backward",
    "relu_forward",
    "relu_backward",
    "batchnorm_forward",
    "batchnorm_backward",
    "attention_forward",
    "attention_backward",
    "softmax_row",
    "GradCheckResult",
    "gradcheck",
    "run_all_checks",
]

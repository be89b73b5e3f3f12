"""Layer definitions with explicit forward/backward passes.

Layers are plain dataclasses holding parameter arrays. Forward functions
return (output, cache); backward functions take the cache and the loss
gradient at the output and return exact reverse-mode gradients. Nothing
here mutates inputs except the documented batch-norm running statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import conv2d_backward_raw, conv2d_forward_raw


def _init_uniform(rng, shape, fan_in, dtype):
    # zero-mean uniform with fan-in scaling
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# ------------------------------------------------------------------- conv2d


@dataclass
class ConvLayer:
    """2-D convolution, stride 1, odd kernel, same-size zero padding."""

    weight: np.ndarray  # [C_out, C_in, r, r]
    bias: np.ndarray  # [C_out]

    def __post_init__(self):
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ValueError(f"kernel must be [Cy, Cx, r, r], got {self.weight.shape}")
        if self.weight.shape[2] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.weight.shape[2]}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match "
                f"{self.weight.shape[0]} output channels"
            )

    @classmethod
    def initialize(cls, c_in: int, c_out: int, kernel_size: int, rng, dtype=np.float64):
        fan_in = c_in * kernel_size * kernel_size
        weight = _init_uniform(rng, (c_out, c_in, kernel_size, kernel_size), fan_in, dtype)
        return cls(weight=weight, bias=np.zeros(c_out, dtype=dtype))


def _check_conv_input(layer: ConvLayer, x: np.ndarray):
    if x.ndim != 4:
        raise ValueError(f"conv input must be [B, C, H, W], got shape {x.shape}")
    if x.shape[1] != layer.weight.shape[1]:
        raise ValueError(
            f"input has {x.shape[1]} channels, kernel expects {layer.weight.shape[1]}"
        )
    if x.shape[2] < 1 or x.shape[3] < 1:
        raise ValueError(f"empty spatial dims in {x.shape}")


def conv2d_forward(layer: ConvLayer, x: np.ndarray) -> np.ndarray:
    """Y(cy) = sum_cx W(cy, cx) star X(cx) + bias(cy), cross-correlation."""
    _check_conv_input(layer, x)
    return conv2d_forward_raw(x, layer.weight, layer.bias)


def conv2d_backward(layer: ConvLayer, x: np.ndarray, grad_out: np.ndarray):
    """Gradients (grad_x, grad_weight, grad_bias) of conv2d_forward."""
    _check_conv_input(layer, x)
    expected = (x.shape[0], layer.weight.shape[0], x.shape[2], x.shape[3])
    if grad_out.shape != expected:
        raise ValueError(f"grad_out shape {grad_out.shape}, expected {expected}")
    return conv2d_backward_raw(x, layer.weight, grad_out)


# --------------------------------------------------------------------- relu


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Subgradient 0 at x == 0."""
    return np.where(x > 0, grad_out, 0)


# --------------------------------------------------------------- batch norm


@dataclass
class BatchNormLayer:
    """Per-channel batch normalization over the (B, H, W) axes.

    Train mode normalizes by batch statistics (biased variance) and blends
    them into the running statistics: new = (1 - momentum) * old +
    momentum * batch. Eval mode normalizes by the running statistics.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1
    mode: str = "train"

    def __post_init__(self):
        shapes = {
            self.gamma.shape,
            self.beta.shape,
            self.running_mean.shape,
            self.running_var.shape,
        }
        if len(shapes) != 1 or self.gamma.ndim != 1:
            raise ValueError("gamma/beta/running stats must share one 1-D shape")
        if self.mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {self.mode!r}")

    @classmethod
    def initialize(cls, num_channels: int, dtype=np.float64):
        return cls(
            gamma=np.ones(num_channels, dtype=dtype),
            beta=np.zeros(num_channels, dtype=dtype),
            running_mean=np.zeros(num_channels, dtype=dtype),
            running_var=np.ones(num_channels, dtype=dtype),
        )

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self


@dataclass
class BatchNormCache:
    mode: str
    x_hat: np.ndarray | None = None
    inv_std: np.ndarray | None = None


def batchnorm_forward(layer: BatchNormLayer, x: np.ndarray, mode: str | None = None):
    """Returns (y, cache). mode overrides layer.mode when given."""
    mode = layer.mode if mode is None else mode
    if x.ndim != 4 or x.shape[1] != layer.gamma.shape[0]:
        raise ValueError(
            f"batchnorm input must be [B, {layer.gamma.shape[0]}, H, W], got {x.shape}"
        )
    gamma = layer.gamma[None, :, None, None]
    beta = layer.beta[None, :, None, None]
    if mode == "eval":
        inv_std = 1.0 / np.sqrt(layer.running_var + layer.eps)
        y = gamma * (x - layer.running_mean[None, :, None, None]) * inv_std[
            None, :, None, None
        ] + beta
        return y, BatchNormCache(mode="eval")
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    count = x.shape[0] * x.shape[2] * x.shape[3]
    if count < 2:
        raise ValueError("train-mode batchnorm needs at least 2 elements per channel")
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))  # biased, matching the normalization
    inv_std = 1.0 / np.sqrt(var + layer.eps)
    x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma * x_hat + beta
    m = layer.momentum
    layer.running_mean[:] = (1.0 - m) * layer.running_mean + m * mean
    layer.running_var[:] = (1.0 - m) * layer.running_var + m * var
    return y, BatchNormCache(mode="train", x_hat=x_hat, inv_std=inv_std)


def batchnorm_backward(layer: BatchNormLayer, cache: BatchNormCache, grad_out: np.ndarray):
    """Gradients (grad_x, grad_gamma, grad_beta) through train-mode BN,
    including the dependence of the batch statistics on x."""
    if cache.mode != "train":
        raise ValueError("batchnorm_backward needs a train-mode cache")
    x_hat = cache.x_hat
    if grad_out.shape != x_hat.shape:
        raise ValueError(f"grad_out shape {grad_out.shape}, expected {x_hat.shape}")
    count = x_hat.shape[0] * x_hat.shape[2] * x_hat.shape[3]
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_gamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
    g = grad_out * layer.gamma[None, :, None, None]
    g_sum = g.sum(axis=(0, 2, 3))[None, :, None, None]
    gx_sum = (g * x_hat).sum(axis=(0, 2, 3))[None, :, None, None]
    grad_x = (
        cache.inv_std[None, :, None, None] / count * (count * g - g_sum - x_hat * gx_sum)
    )
    return grad_x, grad_gamma, grad_beta


# ------------------------------------------------------------------ softmax


def softmax_row(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted exponential normalization along one axis."""
    x = np.asarray(x)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------- self-attention


@dataclass
class SelfAttentionLayer:
    """Single-head scaled dot-product self-attention with square
    projections, so the output is residual-addable to the input."""

    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray

    def __post_init__(self):
        for name in ("w_query", "w_key", "w_value"):
            w = getattr(self, name)
            if w.ndim != 2 or w.shape != self.w_query.shape or w.shape[0] != w.shape[1]:
                raise ValueError("projection matrices must be square and equal-shaped")

    @property
    def width(self) -> int:
        return self.w_query.shape[0]

    @classmethod
    def initialize(cls, width: int, rng, dtype=np.float64):
        return cls(
            w_query=_init_uniform(rng, (width, width), width, dtype),
            w_key=_init_uniform(rng, (width, width), width, dtype),
            w_value=_init_uniform(rng, (width, width), width, dtype),
        )


@dataclass
class AttentionCache:
    x: np.ndarray
    query: np.ndarray
    key: np.ndarray
    value: np.ndarray
    attn: np.ndarray  # row-stochastic attention weights [B, T, T]


def attention_forward(layer: SelfAttentionLayer, x: np.ndarray):
    """softmax(Q K^T / sqrt(D)) V over token sequences x [B, T, C]."""
    if x.ndim != 3 or x.shape[2] != layer.width:
        raise ValueError(
            f"attention input must be [B, T, {layer.width}], got {x.shape}"
        )
    query = x @ layer.w_query
    key = x @ layer.w_key
    value = x @ layer.w_value
    scale = 1.0 / np.sqrt(layer.width)
    scores = (query @ key.transpose(0, 2, 1)) * scale
    attn = softmax_row(scores, axis=-1)
    return attn @ value, AttentionCache(x=x, query=query, key=key, value=value, attn=attn)


def attention_backward(layer: SelfAttentionLayer, cache: AttentionCache, grad_out: np.ndarray):
    """Gradients (grad_x, grad_w_query, grad_w_key, grad_w_value)."""
    if cache is None:
        raise ValueError("attention_backward needs the forward cache")
    x, attn = cache.x, cache.attn
    if grad_out.shape != x.shape:
        raise ValueError(f"grad_out shape {grad_out.shape}, expected {x.shape}")
    scale = 1.0 / np.sqrt(layer.width)

    grad_value = attn.transpose(0, 2, 1) @ grad_out
    grad_attn = grad_out @ cache.value.transpose(0, 2, 1)
    # softmax Jacobian: rows of attn are independent distributions
    grad_scores = attn * (grad_attn - (grad_attn * attn).sum(axis=-1, keepdims=True))
    grad_scores *= scale
    grad_query = grad_scores @ cache.key
    grad_key = grad_scores.transpose(0, 2, 1) @ cache.query

    grad_x = (
        grad_query @ layer.w_query.T
        + grad_key @ layer.w_key.T
        + grad_value @ layer.w_value.T
    )
    grad_w_query = np.tensordot(x, grad_query, axes=((0, 1), (0, 1)))
    grad_w_key = np.tensordot(x, grad_key, axes=((0, 1), (0, 1)))
    grad_w_value = np.tensordot(x, grad_value, axes=((0, 1), (0, 1)))
    return grad_x, grad_w_query, grad_w_key, grad_w_value

"""Residual-attention CNN denoiser for complex channel vectors.

The complex length-M channel becomes a 2-channel real image (real and
imaginary planes). A conv trunk estimates the noise map and the channel
estimate is input minus estimated noise. Architecture:

    head: conv(2 -> C) + ReLU
    body: body_depth x [conv(C -> C) + BN + ReLU + residual attention]
    tail: conv(C -> 2)

The cnn_only variant drops the residual-attention step from every body
block and is otherwise identical (ablation baseline).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn.layers import (
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
)
from .seeding import make_rng

VARIANTS = ("racnn", "cnn_only")


@dataclass
class ModelConfig:
    """Architecture hyperparameters; parameter shapes follow from these."""

    image_height: int
    image_width: int
    width: int = 64
    body_depth: int = 3
    kernel_size: int = 3
    variant: str = "racnn"

    def __post_init__(self):
        if self.image_height < 1 or self.image_width < 1:
            raise ValueError("image dims must be >= 1")
        if self.width < 1:
            raise ValueError(f"width must be >= 1, got {self.width}")
        if self.body_depth < 1:
            raise ValueError(f"body_depth must be >= 1, got {self.body_depth}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def num_antennas(self) -> int:
        return self.image_height * self.image_width

    def to_dict(self) -> dict:
        return {
            "image_height": self.image_height,
            "image_width": self.image_width,
            "width": self.width,
            "body_depth": self.body_depth,
            "kernel_size": self.kernel_size,
            "variant": self.variant,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**{k: data[k] for k in (
            "image_height", "image_width", "width", "body_depth",
            "kernel_size", "variant")})


@dataclass
class BodyBlock:
    conv: ConvLayer
    bn: BatchNormLayer
    attn: SelfAttentionLayer | None  # None in the cnn_only variant


@dataclass
class TrainedModel:
    """Model parameters plus the config that determines their shapes."""

    config: ModelConfig
    head: ConvLayer
    body: list[BodyBlock]
    tail: ConvLayer
    dtype: np.dtype
    training_meta: dict = field(default_factory=dict)

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable tensors in a fixed order, keyed by dotted names."""
        params = {"head.weight": self.head.weight, "head.bias": self.head.bias}
        for i, blk in enumerate(self.body):
            prefix = f"body{i}"
            params[f"{prefix}.conv.weight"] = blk.conv.weight
            params[f"{prefix}.conv.bias"] = blk.conv.bias
            params[f"{prefix}.bn.gamma"] = blk.bn.gamma
            params[f"{prefix}.bn.beta"] = blk.bn.beta
            if blk.attn is not None:
                params[f"{prefix}.attn.w_query"] = blk.attn.w_query
                params[f"{prefix}.attn.w_key"] = blk.attn.w_key
                params[f"{prefix}.attn.w_value"] = blk.attn.w_value
        params["tail.weight"] = self.tail.weight
        params["tail.bias"] = self.tail.bias
        return params

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Non-trainable tensors needed for eval-mode inference."""
        state = {}
        for i, blk in enumerate(self.body):
            state[f"body{i}.bn.running_mean"] = blk.bn.running_mean
            state[f"body{i}.bn.running_var"] = blk.bn.running_var
        return state

    def all_tensors(self) -> dict[str, np.ndarray]:
        tensors = self.parameters()
        tensors.update(self.state_tensors())
        return tensors

    @property
    def num_parameters(self) -> int:
        return sum(arr.size for arr in self.parameters().values())

    def train_mode(self):
        for blk in self.body:
            blk.bn.train()
        return self

    def eval_mode(self):
        for blk in self.body:
            blk.bn.eval()
        return self

    @property
    def is_eval(self) -> bool:
        return all(blk.bn.mode == "eval" for blk in self.body)


def vec_to_image(h: np.ndarray, image_height: int, image_width: int) -> np.ndarray:
    """Complex length-M vector to a [2, H, W] real image, row-major fill:
    channel 0 real parts, channel 1 imaginary parts."""
    h = np.asarray(h)
    if h.ndim != 1 or h.size != image_height * image_width:
        raise ValueError(
            f"need a length-{image_height * image_width} vector, got shape {h.shape}"
        )
    shaped = h.reshape(image_height, image_width)
    return np.stack((shaped.real, shaped.imag))


def image_to_vec(img: np.ndarray) -> np.ndarray:
    """Inverse of vec_to_image; exact round-trip."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 2:
        raise ValueError(f"need a [2, H, W] image, got shape {img.shape}")
    return (img[0] + 1j * img[1]).reshape(-1)


def vecs_to_images(h: np.ndarray, image_height: int, image_width: int,
                   dtype=np.float64) -> np.ndarray:
    """Batch form: (N, M) complex -> (N, 2, H, W) real."""
    h = np.atleast_2d(np.asarray(h))
    if h.shape[1] != image_height * image_width:
        raise ValueError(
            f"need length-{image_height * image_width} rows, got shape {h.shape}"
        )
    shaped = h.reshape(h.shape[0], image_height, image_width)
    return np.stack((shaped.real, shaped.imag), axis=1).astype(dtype, copy=False)


def images_to_vecs(imgs: np.ndarray) -> np.ndarray:
    """Batch inverse: (N, 2, H, W) real -> (N, M) complex."""
    imgs = np.asarray(imgs)
    if imgs.ndim != 4 or imgs.shape[1] != 2:
        raise ValueError(f"need [N, 2, H, W] images, got shape {imgs.shape}")
    n = imgs.shape[0]
    return (imgs[:, 0] + 1j * imgs[:, 1]).reshape(n, -1)


def build_model(config: ModelConfig, init_seed: int, dtype=np.float32) -> TrainedModel:
    """Deterministically initialized untrained model.

    Conv and projection weights draw from a zero-mean uniform with fan-in
    scaling; biases start at 0, BN at gamma=1, beta=0.
    """
    dtype = np.dtype(dtype)
    rng = make_rng(init_seed)
    c, r = config.width, config.kernel_size
    head = ConvLayer.initialize(2, c, r, rng, dtype=dtype)
    body = []
    for _ in range(config.body_depth):
        conv = ConvLayer.initialize(c, c, r, rng, dtype=dtype)
        bn = BatchNormLayer.initialize(c, dtype=dtype)
        attn = (
            SelfAttentionLayer.initialize(c, rng, dtype=dtype)
            if config.variant == "racnn"
            else None
        )
        body.append(BodyBlock(conv=conv, bn=bn, attn=attn))
    tail = ConvLayer.initialize(c, 2, r, rng, dtype=dtype)
    return TrainedModel(config=config, head=head, body=body, tail=tail, dtype=dtype)


# ------------------------------------------------------------ forward pass


def ra_block_forward(attn: SelfAttentionLayer, x: np.ndarray):
    """Residual attention over spatial tokens: y = x + attention(tokens).

    Tokens are the H*W spatial positions; features are the C channels.
    """
    b, c, h, w = x.shape
    tokens = x.transpose(0, 2, 3, 1).reshape(b, h * w, c)
    att_out, cache = attention_forward(attn, tokens)
    return x + att_out.reshape(b, h, w, c).transpose(0, 3, 1, 2), cache


def ra_block_backward(attn: SelfAttentionLayer, cache, grad_out: np.ndarray):
    """Gradients (grad_x, grad_w_query, grad_w_key, grad_w_value)."""
    b, c, h, w = grad_out.shape
    g_tokens = grad_out.transpose(0, 2, 3, 1).reshape(b, h * w, c)
    gx_tokens, gwq, gwk, gwv = attention_backward(attn, cache, g_tokens)
    grad_x = grad_out + gx_tokens.reshape(b, h, w, c).transpose(0, 3, 1, 2)
    return grad_x, gwq, gwk, gwv


@dataclass
class _BlockCache:
    conv_in: np.ndarray
    bn_cache: object
    relu_in: np.ndarray
    ra_cache: object | None


@dataclass
class ModelCache:
    x: np.ndarray
    head_pre: np.ndarray
    blocks: list[_BlockCache]
    tail_in: np.ndarray


def model_forward(model: TrainedModel, x: np.ndarray, mode: str | None = None):
    """Noise estimate of the trunk. Returns (noise_hat, cache); mode
    overrides the batch-norm layers' own train/eval mode when given."""
    if x.ndim != 4 or x.shape[1] != 2:
        raise ValueError(f"model input must be [B, 2, H, W], got {x.shape}")
    expected = (model.config.image_height, model.config.image_width)
    if x.shape[2:] != expected:
        raise ValueError(f"spatial dims {x.shape[2:]} do not match config {expected}")
    head_pre = conv2d_forward(model.head, x)
    feats = relu_forward(head_pre)
    blocks = []
    for blk in model.body:
        conv_in = feats
        z = conv2d_forward(blk.conv, conv_in)
        bn_out, bn_cache = batchnorm_forward(blk.bn, z, mode=mode)
        act = relu_forward(bn_out)
        if blk.attn is not None:
            feats, ra_cache = ra_block_forward(blk.attn, act)
        else:
            feats, ra_cache = act, None
        blocks.append(_BlockCache(conv_in=conv_in, bn_cache=bn_cache,
                                  relu_in=bn_out, ra_cache=ra_cache))
    noise_hat = conv2d_forward(model.tail, feats)
    cache = ModelCache(x=x, head_pre=head_pre, blocks=blocks, tail_in=feats)
    return noise_hat, cache


def model_backward(model: TrainedModel, cache: ModelCache, grad_noise_hat: np.ndarray):
    """Gradients of every trainable tensor given d loss / d noise_hat.

    Returns (grads keyed like parameters(), grad wrt the input image).
    """
    grads: dict[str, np.ndarray] = {}
    g, grads["tail.weight"], grads["tail.bias"] = conv2d_backward(
        model.tail, cache.tail_in, grad_noise_hat
    )
    for i in reversed(range(len(model.body))):
        blk = model.body[i]
        blk_cache = cache.blocks[i]
        prefix = f"body{i}"
        if blk.attn is not None:
            g, gwq, gwk, gwv = ra_block_backward(blk.attn, blk_cache.ra_cache, g)
            grads[f"{prefix}.attn.w_query"] = gwq
            grads[f"{prefix}.attn.w_key"] = gwk
            grads[f"{prefix}.attn.w_value"] = gwv
        g = relu_backward(blk_cache.relu_in, g)
        g, ggamma, gbeta = batchnorm_backward(blk.bn, blk_cache.bn_cache, g)
        grads[f"{prefix}.bn.gamma"] = ggamma
        grads[f"{prefix}.bn.beta"] = gbeta
        g, gw, gb = conv2d_backward(blk.conv, blk_cache.conv_in, g)
        grads[f"{prefix}.conv.weight"] = gw
        grads[f"{prefix}.conv.bias"] = gb
    g = relu_backward(cache.head_pre, g)
    grad_x, grads["head.weight"], grads["head.bias"] = conv2d_backward(
        model.head, cache.x, g
    )
    return grads, grad_x


def denoise(model: TrainedModel, x_noisy_img: np.ndarray):
    """Inference: (h_hat_img, noise_hat_img) with h_hat = input - noise_hat.

    Requires eval-mode batch norm so results are batch-size independent.
    """
    if not model.is_eval:
        raise ValueError("denoise requires eval-mode batch norm; call eval_mode()")
    noise_hat, _ = model_forward(model, x_noisy_img, mode="eval")
    return x_noisy_img - noise_hat, noise_hat

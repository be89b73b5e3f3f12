"""Adam optimizer and the denoiser training loop.

Training consumes clean channels only; noisy inputs are synthesized on the
fly with a per-sample SNR drawn uniformly from the configured levels and
fresh noise every batch. The loss is MSE between the denoised output and
the clean image, so validation loss is directly comparable to evaluation
NMSE numerators. Everything is deterministic given the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .model import TrainedModel, model_backward, model_forward, vecs_to_images
from .seeding import make_rng, mix_seed

_PRECISIONS = {"f32": np.float32, "f64": np.float64}


class NonFiniteLossError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"non-finite training loss {loss} at epoch {epoch}, batch {batch}"
        )


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float = 1e-3
    batch_size: int = 128
    train_snrs_db: tuple = (10.0, 15.0)
    seed: int = 0
    precision: str = "f32"
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not self.train_snrs_db:
            raise ValueError("train_snrs_db must not be empty")
        if self.precision not in _PRECISIONS:
            raise ValueError(f"precision must be one of {tuple(_PRECISIONS)}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in [0, 1), got {self.val_fraction}")

    @property
    def dtype(self):
        return _PRECISIONS[self.precision]


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all entries: (loss, d loss / d pred)."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter dict."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    skipped: int = 0

    @classmethod
    def initialize(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    state: AdamState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> bool:
    """One bias-corrected Adam update, applied to the params in place.

    Returns False (and updates nothing, not even t) when any gradient
    entry is non-finite; the skip is counted in state.skipped.
    """
    for name in params:
        if not np.all(np.isfinite(grads[name])):
            state.skipped += 1
            return False
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return True


def _as_channel_matrix(dataset) -> np.ndarray:
    """Clean channels as an (N, M) complex matrix from any accepted form:
    an array, a sequence of ChannelRealization, or an object with .h."""
    if isinstance(dataset, np.ndarray):
        mat = dataset
    elif hasattr(dataset, "h"):
        mat = np.asarray(dataset.h)
    else:
        mat = np.stack(
            [c.h if isinstance(c, ChannelRealization) else np.asarray(c) for c in dataset]
        )
    mat = np.atleast_2d(mat)
    if mat.ndim != 2:
        raise ValueError(f"dataset must flatten to (N, M), got shape {mat.shape}")
    return mat


def _synth_batch(clean_imgs, rng, snrs_db, dtype):
    """Noisy images for one batch: per-sample SNR choice, fresh noise."""
    b = clean_imgs.shape[0]
    choices = rng.integers(0, len(snrs_db), size=b)
    noise_var = 10.0 ** (-np.asarray(snrs_db, dtype=np.float64)[choices] / 10.0)
    scale = np.sqrt(noise_var / 2.0)[:, None, None, None]
    noise = (rng.standard_normal((b, 2) + clean_imgs.shape[2:]) * scale).astype(dtype)
    return clean_imgs + noise


def _epoch_val_loss(model, val_imgs, cfg, epoch):
    rng = make_rng(mix_seed(cfg.seed, 500_000 + epoch))
    model.eval_mode()
    total = 0.0
    try:
        for start in range(0, val_imgs.shape[0], cfg.batch_size):
            clean = val_imgs[start : start + cfg.batch_size]
            x = _synth_batch(clean, rng, cfg.train_snrs_db, cfg.dtype)
            noise_hat, _ = model_forward(model, x, mode="eval")
            loss, _ = mse_loss(x - noise_hat, clean)
            total += loss * clean.shape[0]
    finally:
        model.train_mode()
    return total / val_imgs.shape[0]


def train(model: TrainedModel, dataset, cfg: TrainConfig):
    """Train the denoiser on clean channels.

    Returns (model, history) where history is a list of per-epoch
    (epoch, train_mse, val_mse) tuples; the model is updated in place and
    its training_meta is filled in. Raises NonFiniteLossError with the
    failing epoch/batch if the loss diverges.
    """
    clean = _as_channel_matrix(dataset)
    config = model.config
    if clean.shape[1] != config.num_antennas:
        raise ValueError(
            f"dataset channels have length {clean.shape[1]}, model expects "
            f"{config.num_antennas}"
        )
    images = vecs_to_images(clean, config.image_height, config.image_width,
                            dtype=cfg.dtype)

    split_rng = make_rng(mix_seed(cfg.seed, 3))
    order = split_rng.permutation(images.shape[0])
    val_count = int(round(cfg.val_fraction * images.shape[0]))
    val_imgs = images[order[:val_count]]
    train_imgs = images[order[val_count:]]
    if train_imgs.shape[0] < 1:
        raise ValueError("no training samples left after the validation split")

    perm_rng = make_rng(mix_seed(cfg.seed, 1))
    noise_rng = make_rng(mix_seed(cfg.seed, 2))
    params = model.parameters()
    state = AdamState.initialize(params)
    model.train_mode()

    history = []
    for epoch in range(1, cfg.epochs + 1):
        perm = perm_rng.permutation(train_imgs.shape[0])
        total = 0.0
        for batch_idx, start in enumerate(range(0, perm.size, cfg.batch_size)):
            clean_batch = train_imgs[perm[start : start + cfg.batch_size]]
            x = _synth_batch(clean_batch, noise_rng, cfg.train_snrs_db, cfg.dtype)
            noise_hat, caches = model_forward(model, x)
            loss, grad_pred = mse_loss(x - noise_hat, clean_batch)
            if not np.isfinite(loss):
                raise NonFiniteLossError(epoch=epoch, batch=batch_idx, loss=loss)
            grads, _ = model_backward(model, caches, -grad_pred)
            adam_step(state, params, grads, lr=cfg.learning_rate)
            total += loss * clean_batch.shape[0]
        train_mse = total / train_imgs.shape[0]
        val_mse = (
            _epoch_val_loss(model, val_imgs, cfg, epoch) if val_count else float("nan")
        )
        history.append((epoch, train_mse, val_mse))

    model.training_meta = {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "train_snrs_db": list(cfg.train_snrs_db),
        "precision": cfg.precision,
        "num_train_samples": int(train_imgs.shape[0]),
        "num_val_samples": int(val_count),
        "final_train_mse": history[-1][1],
        "final_val_mse": history[-1][2],
        "adam_skipped": state.skipped,
    }
    return model, history

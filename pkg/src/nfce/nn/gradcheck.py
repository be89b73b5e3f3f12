"""Central finite-difference verification of analytic gradients.

Each check builds a scalar loss (a fixed random projection of the layer
output, or the model's MSE), computes analytic gradients via the layer's
backward pass, then perturbs every entry of every parameter group by
+/- step and compares. All checks run in f64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..seeding import make_rng, mix_seed
from . import layers as L

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
_REL_FLOOR = 1e-6  # guards the relative error against near-zero gradients


@dataclass
class GradCheckResult:
    name: str
    tolerance: float
    max_rel_err: dict[str, float] = field(default_factory=dict)
    failure: str | None = None

    @property
    def passed(self) -> bool:
        if self.failure is not None:
            return False
        return all(err <= self.tolerance for err in self.max_rel_err.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_err.values(), default=float("inf"))

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.failure is not None:
            return f"{self.name}: {status} ({self.failure})"
        per_group = ", ".join(
            f"{group}={err:.3e}" for group, err in self.max_rel_err.items()
        )
        return f"{self.name}: {status} (tol {self.tolerance:.1e}; {per_group})"


def central_difference(loss_fn, arr: np.ndarray, step: float) -> np.ndarray:
    """Numeric d loss / d arr by central differences, perturbing in place."""
    grad = np.empty_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + step
        up = loss_fn()
        flat[idx] = orig - step
        down = loss_fn()
        flat[idx] = orig
        gflat[idx] = (up - down) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), _REL_FLOOR)
    err = np.abs(analytic - numeric) / denom
    return float(err.max()) if err.size else 0.0


def gradcheck(
    loss_fn,
    groups: dict[str, tuple[np.ndarray, np.ndarray]],
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    name: str = "op",
) -> GradCheckResult:
    """Check analytic gradients of a scalar function.

    loss_fn recomputes the loss from the current contents of the arrays in
    `groups`, which maps group name -> (array to perturb, analytic grad).
    Non-finite losses or gradients are reported as failures.
    """
    result = GradCheckResult(name=name, tolerance=tolerance)
    base = loss_fn()
    if not np.isfinite(base):
        result.failure = f"non-finite loss {base}"
        return result
    for group, (arr, analytic) in groups.items():
        if not np.all(np.isfinite(analytic)):
            result.failure = f"non-finite analytic gradient in {group!r}"
            return result
        numeric = central_difference(loss_fn, arr, step)
        if not np.all(np.isfinite(numeric)):
            result.failure = f"non-finite loss while perturbing {group!r}"
            return result
        result.max_rel_err[group] = max_relative_error(analytic, numeric)
    return result


def _projection(rng, shape):
    # fixed random projection makes any layer output a scalar loss with
    # grad_out equal to the projection itself
    return rng.standard_normal(shape)


def check_conv2d(seed: int = 0, step: float = DEFAULT_STEP,
                 tolerance: float = DEFAULT_TOLERANCE) -> GradCheckResult:
    rng = make_rng(mix_seed(seed, 101))
    layer = L.ConvLayer.initialize(3, 4, 3, rng, dtype=np.float64)
    x = rng.standard_normal((2, 3, 5, 5))
    proj = _projection(rng, (2, 4, 5, 5))

    def loss_fn():
        return float(np.sum(L.conv2d_forward(layer, x) * proj))

    grad_x, grad_w, grad_b = L.conv2d_backward(layer, x, proj)
    return gradcheck(
        loss_fn,
        {
            "x": (x, grad_x),
            "weight": (layer.weight, grad_w),
            "bias": (layer.bias, grad_b),
        },
        step=step,
        tolerance=tolerance,
        name="conv2d",
    )


def check_relu(seed: int = 0, step: float = DEFAULT_STEP,
               tolerance: float = 1e-6) -> GradCheckResult:
    rng = make_rng(mix_seed(seed, 102))
    # keep entries away from the kink at 0 so central differences are exact
    x = rng.uniform(0.2, 1.5, size=(3, 4, 4)) * rng.choice([-1.0, 1.0], size=(3, 4, 4))
    proj = _projection(rng, x.shape)

    def loss_fn():
        return float(np.sum(L.relu_forward(x) * proj))

    grad_x = L.relu_backward(x, proj)
    return gradcheck(loss_fn, {"x": (x, grad_x)}, step=step, tolerance=tolerance,
                     name="relu")


def check_batchnorm(seed: int = 0, step: float = DEFAULT_STEP,
                    tolerance: float = DEFAULT_TOLERANCE) -> GradCheckResult:
    rng = make_rng(mix_seed(seed, 103))
    layer = L.BatchNormLayer.initialize(4, dtype=np.float64)
    layer.gamma[:] = rng.uniform(0.5, 1.5, 4)
    layer.beta[:] = rng.standard_normal(4)
    x = rng.standard_normal((3, 4, 2, 2))
    proj = _projection(rng, x.shape)

    def loss_fn():
        y, _ = L.batchnorm_forward(layer, x, mode="train")
        return float(np.sum(y * proj))

    _, cache = L.batchnorm_forward(layer, x, mode="train")
    grad_x, grad_gamma, grad_beta = L.batchnorm_backward(layer, cache, proj)
    return gradcheck(
        loss_fn,
        {
            "x": (x, grad_x),
            "gamma": (layer.gamma, grad_gamma),
            "beta": (layer.beta, grad_beta),
        },
        step=step,
        tolerance=tolerance,
        name="batchnorm",
    )


def check_attention(seed: int = 0, step: float = DEFAULT_STEP,
                    tolerance: float = DEFAULT_TOLERANCE) -> GradCheckResult:
    rng = make_rng(mix_seed(seed, 104))
    layer = L.SelfAttentionLayer.initialize(3, rng, dtype=np.float64)
    x = rng.standard_normal((1, 4, 3))
    proj = _projection(rng, x.shape)

    def loss_fn():
        y, _ = L.attention_forward(layer, x)
        return float(np.sum(y * proj))

    _, cache = L.attention_forward(layer, x)
    grad_x, grad_wq, grad_wk, grad_wv = L.attention_backward(layer, cache, proj)
    return gradcheck(
        loss_fn,
        {
            "x": (x, grad_x),
            "w_query": (layer.w_query, grad_wq),
            "w_key": (layer.w_key, grad_wk),
            "w_value": (layer.w_value, grad_wv),
        },
        step=step,
        tolerance=tolerance,
        name="attention",
    )


def check_model(seed: int = 0, step: float = DEFAULT_STEP,
                tolerance: float = 1e-3, variant: str = "racnn") -> GradCheckResult:
    """End-to-end check of the full denoiser's MSE gradient on a small
    config (16-element channel, width 8, one body block)."""
    from ..model import ModelConfig, build_model, model_backward, model_forward
    from ..training import mse_loss

    rng = make_rng(mix_seed(seed, 105))
    config = ModelConfig(
        image_height=4, image_width=4, width=8, body_depth=1, variant=variant
    )
    model = build_model(config, init_seed=mix_seed(seed, 106), dtype=np.float64)
    x = rng.standard_normal((2, 2, 4, 4))
    target = rng.standard_normal((2, 2, 4, 4))

    def loss_fn():
        noise_hat, _ = model_forward(model, x, mode="train")
        loss, _ = mse_loss(x - noise_hat, target)
        return loss

    noise_hat, caches = model_forward(model, x, mode="train")
    _, grad_h_hat = mse_loss(x - noise_hat, target)
    grads, grad_x = model_backward(model, caches, -grad_h_hat)
    groups = {"x": (x, grad_x + grad_h_hat)}
    params = model.parameters()
    for pname, arr in params.items():
        groups[pname] = (arr, grads[pname])
    return gradcheck(loss_fn, groups, step=step, tolerance=tolerance,
                     name=f"model_{variant}")


_CHECKS = {
    "conv2d": check_conv2d,
    "relu": check_relu,
    "batchnorm": check_batchnorm,
    "attention": check_attention,
    "model": check_model,
}

LAYER_NAMES = tuple(_CHECKS)


def run_all_checks(seed: int = 0, step: float = DEFAULT_STEP,
                   tolerance: float = DEFAULT_TOLERANCE,
                   model_tolerance: float = 1e-3,
                   layer_names=None) -> dict[str, GradCheckResult]:
    """Run the per-layer checks plus the end-to-end model check.

    The model check defaults to a looser 1e-3 tolerance because depth
    compounds finite-difference truncation noise.
    """
    names = LAYER_NAMES if layer_names is None else tuple(layer_names)
    unknown = [n for n in names if n not in _CHECKS]
    if unknown:
        raise ValueError(f"unknown layer name(s) {unknown}; choose from {LAYER_NAMES}")
    results = {}
    for name in names:
        if name == "model":
            results[name] = check_model(seed=seed, step=step,
                                        tolerance=model_tolerance)
        else:
            results[name] = _CHECKS[name](seed=seed, step=step, tolerance=tolerance)
    return results

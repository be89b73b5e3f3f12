"""Benchmark the conv2d backends (numba JIT loops vs numpy im2col+BLAS).

Times the raw forward/backward kernels at training-relevant shapes and one
full optimizer step of the default denoiser, for every available backend.

    python3 benchmarks/bench_kernels.py [--repeats 5] [--batch 128]
"""

import argparse
import time

import numpy as np

from nfce.model import ModelConfig, build_model, model_backward, model_forward
from nfce.nn import kernels
from nfce.training import AdamState, adam_step, mse_loss

# (label, B, C_in, C_out, H, W, r)
SHAPES = [
    ("head 2->32, 8x8", 128, 2, 32, 8, 8, 3),
    ("body 32->32, 8x8", 128, 32, 32, 8, 8, 3),
    ("body 64->64, 16x16", 32, 64, 64, 16, 16, 3),
]


def time_call(fn, repeats):
    fn()  # warmup (JIT compile, page in)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_conv(backend, repeats, batch):
    rng = np.random.default_rng(0)
    print(f"\n[{backend}] conv2d kernels")
    for label, b, cin, cout, h, w, r in SHAPES:
        b = min(b, batch)
        x = rng.standard_normal((b, cin, h, w)).astype(np.float32)
        wgt = rng.standard_normal((cout, cin, r, r)).astype(np.float32)
        bias = rng.standard_normal(cout).astype(np.float32)
        go = rng.standard_normal((b, cout, h, w)).astype(np.float32)
        flops_fwd = 2.0 * b * h * w * cout * cin * r * r

        t_fwd = time_call(lambda: kernels.conv2d_forward_raw(x, wgt, bias), repeats)
        t_bwd = time_call(
            lambda: kernels.conv2d_backward_raw(x, wgt, go), repeats)
        print(f"  {label:22s} fwd {t_fwd*1e3:7.2f} ms "
              f"({flops_fwd/t_fwd/1e9:6.2f} GFLOP/s)   "
              f"bwd {t_bwd*1e3:7.2f} ms "
              f"({2*flops_fwd/t_bwd/1e9:6.2f} GFLOP/s)")


def bench_train_step(backend, repeats, batch):
    cfg = ModelConfig(image_height=8, image_width=8, width=32, body_depth=2)
    model = build_model(cfg, init_seed=1)
    params = model.parameters()
    state = AdamState.initialize(params)
    rng = np.random.default_rng(1)
    clean = rng.standard_normal((batch, 2, 8, 8)).astype(np.float32)
    x = clean + 0.1 * rng.standard_normal(clean.shape).astype(np.float32)

    def step():
        noise_hat, caches = model_forward(model, x)
        _, grad_pred = mse_loss(x - noise_hat, clean)
        grads, _ = model_backward(model, caches, -grad_pred)
        adam_step(state, params, grads, lr=0.0)  # lr 0: timing, not training

    t = time_call(step, repeats)
    print(f"[{backend}] full train step (batch {batch}, width 32, depth 2): "
          f"{t*1e3:.1f} ms  ({batch/t:,.0f} samples/s)")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--batch", type=int, default=128)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"backends available: {', '.join(backends)}")
    for backend in backends:
        previous = kernels.set_backend(backend)
        try:
            bench_conv(backend, args.repeats, args.batch)
            bench_train_step(backend, args.repeats, args.batch)
        finally:
            kernels.set_backend(previous)


if __name__ == "__main__":
    main()

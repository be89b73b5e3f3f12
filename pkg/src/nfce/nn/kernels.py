"""Conv2d compute kernels with selectable backends.

Two implementations of the same stride-1, same-size zero-padded
cross-correlation and its gradients:

- "numpy": im2col patch extraction plus one large matmul (BLAS).
- "numba": direct nested loops compiled with @njit(parallel=True).

The backend comes from the NFCE_BACKEND environment variable ("numba" or
"numpy"); unset, it defaults to numba when importable and numpy otherwise.
set_backend() overrides at runtime. NFCE_THREADS caps the numba thread
count. Both backends give bitwise-reproducible results for a fixed thread
count, and the numba kernels parallelize so that every output element is
written by exactly one thread, which makes them bitwise independent of the
thread count as well.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit, prange
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

_VALID_BACKENDS = ("numba", "numpy")
_backend: str | None = None


def available_backends() -> tuple[str, ...]:
    return _VALID_BACKENDS if numba is not None else ("numpy",)


def _resolve_default() -> str:
    env = os.environ.get("NFCE_BACKEND")
    if env:
        if env not in _VALID_BACKENDS:
            raise ValueError(
                f"NFCE_BACKEND must be one of {_VALID_BACKENDS}, got {env!r}"
            )
        if env == "numba" and numba is None:
            raise RuntimeError("NFCE_BACKEND=numba but numba is not importable")
        return env
    return "numba" if numba is not None else "numpy"


def get_backend() -> str:
    global _backend
    if _backend is None:
        _backend = _resolve_default()
        if _backend == "numba":
            _apply_thread_cap()
    return _backend


def set_backend(name: str) -> str:
    """Select the conv backend at runtime; returns the previous one."""
    global _backend
    if name not in _VALID_BACKENDS:
        raise ValueError(f"backend must be one of {_VALID_BACKENDS}, got {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba backend requested but numba is not importable")
    previous = get_backend()
    _backend = name
    if name == "numba":
        _apply_thread_cap()
    return previous


def _apply_thread_cap():
    cap = os.environ.get("NFCE_THREADS")
    if cap:
        numba.set_num_threads(max(1, int(cap)))


def _pad_spatial(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


# ---------------------------------------------------------------- numpy path


def _im2col(xp: np.ndarray, r: int, h: int, w: int) -> np.ndarray:
    """Stack the r*r shifted views of the padded input: (B, C*r*r, H*W)."""
    b, c = xp.shape[:2]
    cols = np.empty((b, c, r, r, h, w), dtype=xp.dtype)
    for u in range(r):
        for v in range(r):
            cols[:, :, u, v] = xp[:, :, u : u + h, v : v + w]
    return cols.reshape(b, c * r * r, h * w)


def _np_forward(x, w, bias):
    b, _, h, wid = x.shape
    c_out, c_in, r, _ = w.shape
    xp = _pad_spatial(x, (r - 1) // 2)
    cols = _im2col(xp, r, h, wid)
    flat = cols.transpose(1, 0, 2).reshape(c_in * r * r, b * h * wid)
    out = w.reshape(c_out, -1) @ flat
    out = out.reshape(c_out, b, h * wid).transpose(1, 0, 2).reshape(b, c_out, h, wid)
    return out + bias[None, :, None, None]


def _np_backward(x, w, grad_out):
    b, _, h, wid = x.shape
    c_out, c_in, r, _ = w.shape
    pad = (r - 1) // 2
    hw = h * wid

    grad_bias = grad_out.sum(axis=(0, 2, 3))
    go_flat = grad_out.transpose(1, 0, 2, 3).reshape(c_out, b * hw)

    xp = _pad_spatial(x, pad)
    cols = _im2col(xp, r, h, wid).transpose(1, 0, 2).reshape(c_in * r * r, b * hw)
    grad_w = (go_flat @ cols.T).reshape(w.shape)

    gcols = w.reshape(c_out, -1).T @ go_flat
    gcols = (
        gcols.reshape(c_in, r, r, b, hw).transpose(3, 0, 1, 2, 4)
        .reshape(b, c_in, r, r, h, wid)
    )
    gxp = np.zeros_like(xp)
    for u in range(r):  # shifted windows overlap, so accumulate serially
        for v in range(r):
            gxp[:, :, u : u + h, v : v + wid] += gcols[:, :, u, v]
    grad_x = gxp[:, :, pad : pad + h, pad : pad + wid] if pad else gxp
    return np.ascontiguousarray(grad_x), grad_w, grad_bias


# ---------------------------------------------------------------- numba path

if numba is not None:

    @njit(parallel=True, cache=True)
    def _nb_forward(xp, w, bias, out):
        b, c_out, h, wid = out.shape
        c_in = xp.shape[1]
        r = w.shape[2]
        for bi in prange(b):
            for cy in range(c_out):
                for i in range(h):
                    for j in range(wid):
                        out[bi, cy, i, j] = bias[cy]
                for cx in range(c_in):
                    for u in range(r):
                        for v in range(r):
                            wv = w[cy, cx, u, v]
                            for i in range(h):
                                for j in range(wid):
                                    out[bi, cy, i, j] += wv * xp[bi, cx, i + u, j + v]

    @njit(parallel=True, cache=True)
    def _nb_grad_x(gop, w, gx):
        # gx accumulates the correlation of padded grad_out with the
        # spatially flipped, channel-transposed kernel; gx arrives zeroed.
        b, c_in, h, wid = gx.shape
        c_out = w.shape[0]
        r = w.shape[2]
        for bi in prange(b):
            for cx in range(c_in):
                for cy in range(c_out):
                    for u in range(r):
                        for v in range(r):
                            wv = w[cy, cx, r - 1 - u, r - 1 - v]
                            for i in range(h):
                                for j in range(wid):
                                    gx[bi, cx, i, j] += wv * gop[bi, cy, i + u, j + v]

    @njit(parallel=True, cache=True)
    def _nb_grad_w(xp, go, gw):
        # parallel over output channels: each thread owns one gw slice
        b, c_out, h, wid = go.shape
        c_in = xp.shape[1]
        r = gw.shape[2]
        for cy in prange(c_out):
            for cx in range(c_in):
                for u in range(r):
                    for v in range(r):
                        acc = 0.0
                        for bi in range(b):
                            for i in range(h):
                                for j in range(wid):
                                    acc += go[bi, cy, i, j] * xp[bi, cx, i + u, j + v]
                        gw[cy, cx, u, v] = acc


# --------------------------------------------------------------- dispatchers


def conv2d_forward_raw(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Stride-1, same-padded cross-correlation. Inputs are validated by the
    layer wrapper; shapes are x [B,Cx,H,W], w [Cy,Cx,r,r], bias [Cy]."""
    if get_backend() == "numpy":
        return _np_forward(x, w, bias)
    xp = _pad_spatial(x, (w.shape[2] - 1) // 2)
    out = np.empty((x.shape[0], w.shape[0], x.shape[2], x.shape[3]), dtype=x.dtype)
    _nb_forward(xp, np.ascontiguousarray(w), np.ascontiguousarray(bias), out)
    return out


def conv2d_backward_raw(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray):
    """Gradients of conv2d_forward_raw: (grad_x, grad_w, grad_bias)."""
    if get_backend() == "numpy":
        return _np_backward(x, w, grad_out)
    r = w.shape[2]
    pad = (r - 1) // 2
    wc = np.ascontiguousarray(w)
    gop = _pad_spatial(grad_out, pad)
    gx = np.zeros_like(x)
    _nb_grad_x(gop, wc, gx)
    gw = np.empty_like(wc)
    _nb_grad_w(_pad_spatial(x, pad), np.ascontiguousarray(grad_out), gw)
    gb = grad_out.sum(axis=(0, 2, 3))
    return gx, gw, gb

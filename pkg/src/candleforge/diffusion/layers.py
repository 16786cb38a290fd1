"""Forward/backward primitives for the denoiser, in plain numpy.

Each forward returns (out, cache); each backward consumes (dout, cache) and
returns input and parameter gradients. Dtype follows the inputs, so the same
code runs float32 for training and float64 for gradient checks.
"""

from __future__ import annotations

import numpy as np

GN_EPS = 1e-5


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    b, c, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((b, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols.reshape(b, c * kh * kw, oh * ow), oh, ow


def _col2im(dcols: np.ndarray, xshape, kh: int, kw: int, stride: int, pad: int,
            oh: int, ow: int) -> np.ndarray:
    b, c, h, w = xshape
    dxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    dcols = dcols.reshape(b, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, i, j]
    return dxp[:, :, pad:pad + h, pad:pad + w]


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 1):
    """x (B,Cin,H,W) * w (Cout,Cin,kh,kw) + b -> (B,Cout,OH,OW)."""
    cout, cin, kh, kw = w.shape
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    wf = w.reshape(cout, -1)
    out = np.matmul(wf, cols) + b[:, None]
    out = out.reshape(x.shape[0], cout, oh, ow)
    return out, (x.shape, cols, wf, w.shape, stride, pad, oh, ow)


def conv2d_backward(dout: np.ndarray, cache):
    xshape, cols, wf, wshape, stride, pad, oh, ow = cache
    cout, cin, kh, kw = wshape
    df = dout.reshape(dout.shape[0], cout, oh * ow)
    dw = np.tensordot(df, cols, axes=([0, 2], [0, 2])).reshape(wshape)
    db = dout.sum(axis=(0, 2, 3))
    dcols = np.matmul(wf.T, df)
    dx = _col2im(dcols, xshape, kh, kw, stride, pad, oh, ow)
    return dx, dw, db


def group_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, groups: int):
    b, c, h, w = x.shape
    m = (c // groups) * h * w
    xg = x.reshape(b, groups, m)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + GN_EPS)
    xhat = ((xg - mu) * inv).reshape(b, c, h, w)
    out = xhat * gamma[:, None, None] + beta[:, None, None]
    return out, (xhat, inv, gamma, (b, c, h, w), groups)


def group_norm_backward(dout: np.ndarray, cache):
    xhat, inv, gamma, shape, groups = cache
    b, c, h, w = shape
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    m = (c // groups) * h * w
    dxg = (dout * gamma[:, None, None]).reshape(b, groups, m)
    xg = xhat.reshape(b, groups, m)
    mean_d = dxg.mean(axis=2, keepdims=True)
    mean_dx = (dxg * xg).mean(axis=2, keepdims=True)
    dx = inv * (dxg - mean_d - xg * mean_dx)
    return dx.reshape(b, c, h, w), dgamma, dbeta


def silu(x: np.ndarray):
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))  # overflow-free sigmoid
    return x * sig, (x, sig)


def silu_backward(dy: np.ndarray, cache) -> np.ndarray:
    x, sig = cache
    return dy * sig * (1.0 + x * (1.0 - sig))


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x (B,din) @ w (dout,din).T + b."""
    return x @ w.T + b, (x, w)


def linear_backward(dy: np.ndarray, cache):
    x, w = cache
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def upsample2x(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample2x_backward(dy: np.ndarray) -> np.ndarray:
    b, c, h2, w2 = dy.shape
    return dy.reshape(b, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))

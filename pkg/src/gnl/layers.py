"""Numpy layer primitives with hand-written backward passes.

All tensors are batched, laid out as (batch, channels, height, width).
Each ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
consumes the upstream gradient and that cache.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LEAK = 0.01


def conv2d_forward(x, w, stride=1, pad=0):
    """2-D cross-correlation without bias.

    x: (B, C, H, W); w: (O, C, kh, kw).
    """
    kh, kw = w.shape[2:]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # one GEMM per sample: BLAS blocking depends on the row count, and batched
    # results must match single-image results bitwise
    out = np.stack([np.tensordot(win[i], w, axes=([0, 3, 4], [1, 2, 3])) for i in range(x.shape[0])])
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), (x.shape, xp.shape, win, w, stride, pad)


def conv2d_backward(dout, cache):
    x_shape, xp_shape, win, w, stride, pad = cache
    kh, kw = w.shape[2:]
    ho, wo = dout.shape[2:]
    dw = np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(dout, w[:, :, i, j], axes=([1], [0]))
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contrib.transpose(0, 3, 1, 2)
    h, wd = x_shape[2:]
    dx = dxp[:, :, pad:pad + h, pad:pad + wd]
    return dx, dw


def affine_forward(x, gamma, beta):
    out = x * gamma[None, :, None, None] + beta[None, :, None, None]
    return out, (x, gamma)


def affine_backward(dout, cache):
    x, gamma = cache
    dgamma = np.sum(dout * x, axis=(0, 2, 3))
    dbeta = np.sum(dout, axis=(0, 2, 3))
    return dout * gamma[None, :, None, None], dgamma, dbeta


def lrelu_forward(x):
    return np.where(x > 0, x, LEAK * x), x


def lrelu_backward(dout, x):
    return np.where(x > 0, dout, LEAK * dout)


def upsample2_forward(x):
    """Nearest-neighbour x2 upsampling."""
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(dout):
    b, c, h, w = dout.shape
    return dout.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def conv_unit_forward(params, name, x, stride, pad, act=True):
    """conv -> per-channel affine -> optional leaky ReLU."""
    h, c_conv = conv2d_forward(x, params[name + ".w"], stride, pad)
    h, c_aff = affine_forward(h, params[name + ".g"], params[name + ".b"])
    c_act = None
    if act:
        h, c_act = lrelu_forward(h)
    return h, (name, c_conv, c_aff, c_act)


def conv_unit_backward(dout, cache, grads):
    name, c_conv, c_aff, c_act = cache
    if c_act is not None:
        dout = lrelu_backward(dout, c_act)
    dout, dg, db = affine_backward(dout, c_aff)
    dx, dw = conv2d_backward(dout, c_conv)
    _accumulate(grads, name + ".w", dw)
    _accumulate(grads, name + ".g", dg)
    _accumulate(grads, name + ".b", db)
    return dx


def res_block_forward(params, name, x, stride):
    """Basic residual block; a 1x1 projection shortcut exists iff ``name.proj.w`` is present."""
    h, c1 = conv_unit_forward(params, name + ".conv1", x, stride, 1)
    h, c2 = conv_unit_forward(params, name + ".conv2", h, 1, 1, act=False)
    if name + ".proj.w" in params:
        sc, cp = conv_unit_forward(params, name + ".proj", x, stride, 0, act=False)
    else:
        sc, cp = x, None
    out, c_act = lrelu_forward(h + sc)
    return out, (c1, c2, cp, c_act)


def res_block_backward(dout, cache, grads):
    c1, c2, cp, c_act = cache
    dsum = lrelu_backward(dout, c_act)
    dh = conv_unit_backward(dsum, c2, grads)
    dx = conv_unit_backward(dh, c1, grads)
    if cp is not None:
        dx = dx + conv_unit_backward(dsum, cp, grads)
    else:
        dx = dx + dsum
    return dx


def _accumulate(grads, key, g):
    if key in grads:
        grads[key] = grads[key] + g
    else:
        grads[key] = g

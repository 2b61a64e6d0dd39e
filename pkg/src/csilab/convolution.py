"""2-D same-padded cross-correlation with two interchangeable backends.

Both backends lower the convolution to one large GEMM, picking between
two lowerings by shape.  When the output channel count is at least the
input's, the classic im2col is used: a (B*H*W, C*kh*kw) column matrix
times the reshaped kernel, which hands BLAS a long inner dimension; the
weight gradient then reuses the cached column matrix and is a single
GEMM with no packing at all.  When the input channel count dominates
(the decoder's wide feature stacks feeding a few output planes), the
kn2row lowering is cheaper: the padded channels-last input times a
(C, kh*kw*O) tap matrix followed by a shifted gather-sum over the taps,
whose intermediates scale with O instead of C.  The input gradient is a
small im2col over the output gradient against the flipped kernel in
either case.

The compiled extension (``csilab._convops``) does the gather/scatter and
layout passes around the GEMMs in single fused C loops with the zero
padding folded into the bounds checks; the pure-numpy fallback expresses
the same passes with padded slab copies and strided views.  The backend
is picked at import time: the extension when it is built, numpy
otherwise.  ``CSILAB_CONV_BACKEND=ext|numpy`` forces one (see
``benchmarks/bench_conv.py`` for measured comparisons).

Padding convention for even kernels: ``pad_before = (k-1)//2``,
``pad_after = k//2`` on each spatial axis, so output extents always equal
input extents.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _convops

    HAVE_EXT = True
except ImportError:  # extension not built; numpy path covers everything
    _convops = None
    HAVE_EXT = False

_choice = os.environ.get("CSILAB_CONV_BACKEND", "auto")
if _choice not in ("auto", "ext", "numpy"):
    raise ValueError(f"CSILAB_CONV_BACKEND must be auto|ext|numpy, got {_choice!r}")
if _choice == "ext" and not HAVE_EXT:
    raise ImportError("CSILAB_CONV_BACKEND=ext but csilab._convops is not built")

BACKEND = "numpy" if _choice == "numpy" or not HAVE_EXT else "ext"


def _use_im2col(c: int, o: int) -> bool:
    """Lowering choice: intermediates scale with C (im2col) vs O (kn2row)."""
    return o >= c


def _tap_matrix(w: np.ndarray) -> np.ndarray:
    """(O, C, kh, kw) weights as a (C, kh*kw*O) GEMM operand."""
    O, C, kh, kw = w.shape
    return np.ascontiguousarray(w.transpose(1, 2, 3, 0)).reshape(C, kh * kw * O)


def _flipped_tap_matrix(w: np.ndarray) -> np.ndarray:
    """Flipped kernel as a (kh*kw*O, C) operand for the input gradient."""
    O, C, kh, kw = w.shape
    return np.ascontiguousarray(
        w[:, :, ::-1, ::-1].transpose(2, 3, 0, 1)
    ).reshape(kh * kw * O, C)


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(B, C, H, W) input as (B*H*W, C*kh*kw) columns, zero padded."""
    B, C, H, W = x.shape
    pt, pl = (kh - 1) // 2, (kw - 1) // 2
    cols = np.empty((B, H, W, C, kh, kw), dtype=x.dtype)
    if BACKEND == "ext":
        _convops.im2col(x, cols, pt, pl)
    else:
        xp = np.zeros((B, C, H + kh - 1, W + kw - 1), dtype=x.dtype)
        xp[:, :, pt:pt + H, pl:pl + W] = x
        win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
        cols[:] = win.transpose(0, 2, 3, 1, 4, 5)
    return cols.reshape(B * H * W, C * kh * kw)


def _pad_nhwc(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Zero-padded channels-last copy of an (B, C, H, W) tensor."""
    B, C, H, W = x.shape
    pt, pl = (kh - 1) // 2, (kw - 1) // 2
    xp = np.empty((B, H + kh - 1, W + kw - 1, C), dtype=x.dtype)
    if BACKEND == "ext":
        _convops.pack_pad(x, xp, pt, pl)
        return xp
    xp[:] = 0
    xp[:, pt:pt + H, pl:pl + W, :] = x.transpose(0, 2, 3, 1)
    return xp


def _to_nchw(nhwc: np.ndarray) -> np.ndarray:
    B, H, W, C = nhwc.shape
    if BACKEND == "ext":
        out = np.empty((B, C, H, W), dtype=nhwc.dtype)
        _convops.unpack_nhwc(nhwc, out)
        return out
    return np.ascontiguousarray(nhwc.transpose(0, 3, 1, 2))


def conv2d_forward(
    x: np.ndarray, w: np.ndarray, bias: np.ndarray, cache: dict | None = None
) -> np.ndarray:
    """Same-padded cross-correlation: (B,C,H,W) x (O,C,kh,kw) -> (B,O,H,W).

    ``cache``, if given a dict, receives intermediates that
    :func:`conv2d_grad_weight` can reuse when handed the same dict.
    """
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    if _use_im2col(C, O):
        cols = _im2col(x, kh, kw)
        if cache is not None:
            cache["cols"] = cols
        prod = cols @ w.reshape(O, C * kh * kw).T
        prod += bias
        return _to_nchw(prod.reshape(B, H, W, O))
    xp = _pad_nhwc(x, kh, kw)
    if cache is not None:
        cache["xp"] = xp
    prod = (xp.reshape(-1, C) @ _tap_matrix(w)).reshape(
        B, H + kh - 1, W + kw - 1, kh, kw, O
    )
    if BACKEND == "ext":
        out = np.empty((B, O, H, W), dtype=x.dtype)
        _convops.gather_taps(prod, bias, out)
        return out
    out = np.empty((B, H, W, O), dtype=x.dtype)
    out[:] = bias
    for i in range(kh):
        for j in range(kw):
            out += prod[:, i:i + H, j:j + W, i, j, :]
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_grad_input(gout: np.ndarray, w: np.ndarray) -> np.ndarray:
    # Adjoint = full correlation with the flipped kernel, channels swapped;
    # the pad split flips with the kernel.
    O, C, kh, kw = w.shape
    B, _, H, W = gout.shape
    pt, pl = kh // 2, kw // 2
    cols = np.empty((B, H, W, kh, kw, O), dtype=gout.dtype)
    if BACKEND == "ext":
        _convops.pack_cols(gout, cols, pt, pl)
    else:
        gp = np.zeros((B, H + kh - 1, W + kw - 1, O), dtype=gout.dtype)
        gp[:, pt:pt + H, pl:pl + W, :] = gout.transpose(0, 2, 3, 1)
        for i in range(kh):
            for j in range(kw):
                cols[:, :, :, i, j, :] = gp[:, i:i + H, j:j + W, :]
    gx = (cols.reshape(B * H * W, -1) @ _flipped_tap_matrix(w)).reshape(B, H, W, C)
    return _to_nchw(gx)


def conv2d_grad_weight(
    x: np.ndarray, gout: np.ndarray, kh: int, kw: int, cache: dict | None = None
) -> np.ndarray:
    B, O, H, W = gout.shape
    cols = cache.get("cols") if cache is not None else None
    if cols is not None or _use_im2col(x.shape[1], O):
        # Single GEMM against the (possibly cached) forward column matrix.
        if cols is None:
            cols = _im2col(x, kh, kw)
        C = cols.shape[1] // (kh * kw)
        gf = np.empty((B, H, W, O), dtype=gout.dtype)
        if BACKEND == "ext":
            _convops.pack_nhwc(gout, gf)
        else:
            gf[:] = gout.transpose(0, 2, 3, 1)
        gw = cols.T @ gf.reshape(B * H * W, O)
        return np.ascontiguousarray(gw.reshape(C, kh, kw, O).transpose(3, 0, 1, 2))
    xp = cache.get("xp") if cache is not None else None
    if xp is None:
        xp = _pad_nhwc(x, kh, kw)
    C = xp.shape[3]
    spread = np.empty((B, H + kh - 1, W + kw - 1, kh, kw, O), dtype=gout.dtype)
    if BACKEND == "ext":
        _convops.spread_taps(gout, spread)
    else:
        spread[:] = 0
        g = gout.transpose(0, 2, 3, 1)
        for i in range(kh):
            for j in range(kw):
                spread[:, i:i + H, j:j + W, i, j, :] = g
    gw = spread.reshape(-1, kh * kw * O).T @ xp.reshape(-1, C)
    return np.ascontiguousarray(gw.reshape(kh, kw, O, C).transpose(2, 3, 0, 1))


def conv2d_grad_bias(gout: np.ndarray) -> np.ndarray:
    return gout.sum(axis=(0, 2, 3))

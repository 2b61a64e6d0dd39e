# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled data-movement kernels for the GEMM conv lowerings.

The convolution itself is one BLAS GEMM (see :mod:`csilab.convolution`);
these kernels handle the surrounding packing in single fused passes: the
im2col gather (padding folded into the bounds check), the padded
channels-last packing, the shifted tap gather/scatter of the kn2row
lowering, and channels-first/-last layout changes.

Same-padding convention: pad_top = (kh-1)//2, pad_left = (kw-1)//2, with
the remainder of the padding on the bottom/right, so output spatial
extents equal input extents for any kernel size.
"""

from cython.parallel import prange


ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, real[:, :, :, :, :, ::1] cols,
           Py_ssize_t pt, Py_ssize_t pl):
    """cols[b, h, w, c, i, j] = x[b, c, h+i-pt, w+j-pl] (zero off-grid)."""
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t kh = cols.shape[4], kw = cols.shape[5]
    cdef Py_ssize_t b, c, h, w, i, j, hh, ww

    for b in prange(B, nogil=True, schedule='static'):
        for h in range(H):
            for w in range(W):
                for c in range(C):
                    for i in range(kh):
                        hh = h + i - pt
                        for j in range(kw):
                            ww = w + j - pl
                            if 0 <= hh < H and 0 <= ww < W:
                                cols[b, h, w, c, i, j] = x[b, c, hh, ww]
                            else:
                                cols[b, h, w, c, i, j] = 0


def pack_pad(real[:, :, :, ::1] x, real[:, :, :, ::1] xp,
             Py_ssize_t pt, Py_ssize_t pl):
    """xp[b, h+pt, w+pl, c] = x[b, c, h, w]; zero elsewhere."""
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Hp = xp.shape[1], Wp = xp.shape[2]
    cdef Py_ssize_t b, c, h, w, hp, wp

    for b in prange(B, nogil=True, schedule='static'):
        for hp in range(Hp):
            for wp in range(Wp):
                for c in range(C):
                    xp[b, hp, wp, c] = 0
        for c in range(C):
            for h in range(H):
                for w in range(W):
                    xp[b, h + pt, w + pl, c] = x[b, c, h, w]


def gather_taps(real[:, :, :, :, :, ::1] prod, real[::1] bias,
                real[:, :, :, ::1] out):
    """out[b, o, h, w] = bias[o] + sum_{i,j} prod[b, h+i, w+j, i, j, o]."""
    cdef Py_ssize_t B = out.shape[0], O = out.shape[1]
    cdef Py_ssize_t H = out.shape[2], W = out.shape[3]
    cdef Py_ssize_t kh = prod.shape[3], kw = prod.shape[4]
    cdef Py_ssize_t b, o, h, w, i, j
    cdef real acc[256]

    if O > 256:
        raise ValueError("gather_taps supports at most 256 output channels")
    for b in prange(B, nogil=True, schedule='static'):
        for h in range(H):
            for w in range(W):
                for o in range(O):
                    acc[o] = bias[o]
                for i in range(kh):
                    for j in range(kw):
                        for o in range(O):
                            acc[o] = acc[o] + prod[b, h + i, w + j, i, j, o]
                for o in range(O):
                    out[b, o, h, w] = acc[o]


def spread_taps(real[:, :, :, ::1] gout, real[:, :, :, :, :, ::1] spread):
    """spread[b, h+i, w+j, i, j, o] = gout[b, o, h, w]; zero elsewhere."""
    cdef Py_ssize_t B = gout.shape[0], O = gout.shape[1]
    cdef Py_ssize_t H = gout.shape[2], W = gout.shape[3]
    cdef Py_ssize_t Hp = spread.shape[1], Wp = spread.shape[2]
    cdef Py_ssize_t kh = spread.shape[3], kw = spread.shape[4]
    cdef Py_ssize_t b, o, h, w, hp, wp, i, j
    cdef real g[256]

    if O > 256:
        raise ValueError("spread_taps supports at most 256 channels")
    for b in prange(B, nogil=True, schedule='static'):
        for hp in range(Hp):
            for wp in range(Wp):
                for i in range(kh):
                    for j in range(kw):
                        for o in range(O):
                            spread[b, hp, wp, i, j, o] = 0
        for h in range(H):
            for w in range(W):
                for o in range(O):
                    g[o] = gout[b, o, h, w]
                for i in range(kh):
                    for j in range(kw):
                        for o in range(O):
                            spread[b, h + i, w + j, i, j, o] = g[o]


def pack_nhwc(real[:, :, :, ::1] src, real[:, :, :, ::1] dst):
    """dst[b, h, w, c] = src[b, c, h, w]."""
    cdef Py_ssize_t B = src.shape[0], C = src.shape[1]
    cdef Py_ssize_t H = src.shape[2], W = src.shape[3]
    cdef Py_ssize_t b, c, h, w

    for b in prange(B, nogil=True, schedule='static'):
        for c in range(C):
            for h in range(H):
                for w in range(W):
                    dst[b, h, w, c] = src[b, c, h, w]


def pack_cols(real[:, :, :, ::1] gout, real[:, :, :, :, :, ::1] cols,
              Py_ssize_t pt, Py_ssize_t pl):
    """cols[b, h, w, i, j, o] = gout[b, o, h+i-pt, w+j-pl] (zero off-grid)."""
    cdef Py_ssize_t B = gout.shape[0], O = gout.shape[1]
    cdef Py_ssize_t H = gout.shape[2], W = gout.shape[3]
    cdef Py_ssize_t kh = cols.shape[3], kw = cols.shape[4]
    cdef Py_ssize_t b, o, h, w, i, j, hh, ww

    for b in prange(B, nogil=True, schedule='static'):
        for h in range(H):
            for w in range(W):
                for i in range(kh):
                    hh = h + i - pt
                    for j in range(kw):
                        ww = w + j - pl
                        if 0 <= hh < H and 0 <= ww < W:
                            for o in range(O):
                                cols[b, h, w, i, j, o] = gout[b, o, hh, ww]
                        else:
                            for o in range(O):
                                cols[b, h, w, i, j, o] = 0


def unpack_nhwc(real[:, :, :, ::1] src, real[:, :, :, ::1] dst):
    """dst[b, c, h, w] = src[b, h, w, c]."""
    cdef Py_ssize_t B = dst.shape[0], C = dst.shape[1]
    cdef Py_ssize_t H = dst.shape[2], W = dst.shape[3]
    cdef Py_ssize_t b, c, h, w

    for b in prange(B, nogil=True, schedule='static'):
        for c in range(C):
            for h in range(H):
                for w in range(W):
                    dst[b, c, h, w] = src[b, h, w, c]

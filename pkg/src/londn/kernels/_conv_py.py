"""Pure-numpy "same" 2D cross-correlation kernels.

Each kernel tap is one GEMM against a shifted window of the zero-padded
input. Windows are taken from the flattened padded array, so every tap
operand is a strided view with contiguous rows (no im2col copy). Outputs
are computed on a grid of width ``W + 2p`` and the ``2p`` wrap-around
columns per row are discarded.
"""
import numpy as np


def _padded_flat(x, p):
    cin, h, w = x.shape
    wp = w + 2 * p
    # one extra row keeps the last tap window in bounds
    buf = np.zeros((cin, h + 2 * p + 1, wp))
    buf[:, p:p + h, p:p + w] = x
    return buf.reshape(cin, -1), wp


def conv2d_forward(x, w, b):
    """Correlate ``x`` (Cin, H, W) with ``w`` (Cout, Cin, k, k) and add ``b``."""
    cout, cin, k, _ = w.shape
    _, h, wd = x.shape
    p = (k - 1) // 2
    xf, wp = _padded_flat(x, p)
    n = h * wp
    taps = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
    out = np.zeros((cout, n))
    for dy in range(k):
        for dx in range(k):
            off = dy * wp + dx
            out += taps[dy, dx] @ xf[:, off:off + n]
    out = out.reshape(cout, h, wp)[:, :, :wd]
    out += b[:, None, None]
    return out


def conv2d_backward(x, w, gout):
    """Gradients of ``sum(gout * conv2d_forward(x, w, b))``.

    Returns:
        tuple: ``(gx, gw, gb)`` shaped like ``x``, ``w`` and the bias.
    """
    cout, cin, k, _ = w.shape
    _, h, wd = x.shape
    p = (k - 1) // 2
    gb = gout.sum(axis=(1, 2))

    xf, wp = _padded_flat(x, p)
    n = h * wp
    # gout on the wide grid; garbage columns are zero so they contribute nothing
    gwide = np.zeros((cout, h, wp))
    gwide[:, :, :wd] = gout
    gwide = gwide.reshape(cout, n)
    gtaps = np.empty((k, k, cout, cin))
    for dy in range(k):
        for dx in range(k):
            off = dy * wp + dx
            gtaps[dy, dx] = gwide @ xf[:, off:off + n].T
    gw = np.ascontiguousarray(gtaps.transpose(2, 3, 0, 1))

    # input gradient is a correlation of gout with the flipped, transposed kernel
    wflip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gx = conv2d_forward(gout, wflip, np.zeros(cin))
    return gx, gw, gb

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled "same" 2D cross-correlation with BLAS GEMMs.

Same contract as ``_conv_py``: ``x`` is (Cin, H, W), ``w`` is
(Cout, Cin, k, k) with odd ``k``, everything float64.

Two lowering strategies, chosen per call by the contraction length:

* im2col: one GEMM with inner dimension ``Cin*k*k``; used when that is
  small (first layer, input-gradient of the last layer).
* shifted taps: ``k*k`` GEMMs with inner dimension ``Cin`` reading strided
  windows of the flattened zero-padded input directly (BLAS leading
  dimension), accumulating in place with ``beta=1``.
"""
import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

DEF IM2COL_MAX = 64


cdef void _gemm(bint ta, bint tb, int m, int n, int k, double alpha,
                const double* a, int lda, const double* b, int ldb,
                double beta, double* c, int ldc) noexcept nogil:
    # row-major C(m, n) = alpha * op(A) @ op(B) + beta * C
    cdef char transa = b'T' if tb else b'N'
    cdef char transb = b'T' if ta else b'N'
    dgemm(&transa, &transb, &n, &m, &k, &alpha, <double*>b, &ldb,
          <double*>a, &lda, &beta, c, &ldc)


cdef void _im2col(const double* x, int cin, int h, int w, int k,
                  double* cols) noexcept nogil:
    # cols[(c*k + dy)*k + dx, i*w + j] = x[c, i + dy - p, j + dx - p], 0 outside
    cdef int p = (k - 1) // 2
    cdef int c, dy, dx, i, j, si, j0, j1
    cdef double* row
    cdef const double* src
    for c in range(cin):
        for dy in range(k):
            for dx in range(k):
                row = cols + (<Py_ssize_t>((c * k + dy) * k + dx)) * h * w
                j0 = p - dx if dx < p else 0
                j1 = w + p - dx if dx > p else w
                for i in range(h):
                    si = i + dy - p
                    if si < 0 or si >= h:
                        for j in range(w):
                            row[i * w + j] = 0.0
                        continue
                    src = x + (<Py_ssize_t>c * h + si) * w + dx - p
                    for j in range(j0):
                        row[i * w + j] = 0.0
                    for j in range(j0, j1):
                        row[i * w + j] = src[j]
                    for j in range(j1, w):
                        row[i * w + j] = 0.0


cdef void _pad_flat(const double* x, int cin, int h, int w, int p,
                    double* xf) noexcept nogil:
    # xf is (cin, (h + 2p + 1) * (w + 2p)), zeroed by the caller
    cdef int wp = w + 2 * p
    cdef Py_ssize_t plane = (h + 2 * p + 1) * wp
    cdef int c, i, j
    for c in range(cin):
        for i in range(h):
            for j in range(w):
                xf[c * plane + (i + p) * wp + j + p] = x[(<Py_ssize_t>c * h + i) * w + j]


cdef object _correlate(cnp.ndarray x, cnp.ndarray w):
    cdef double[:, :, ::1] xv = x
    cdef double[:, :, :, ::1] wv = w
    cdef int cin = xv.shape[0], h = xv.shape[1], wd = xv.shape[2]
    cdef int cout = wv.shape[0], k = wv.shape[2]
    cdef int p = (k - 1) // 2, kk = cin * k * k, hw = h * wd
    cdef int wp = wd + 2 * p, n = h * wp, plane = (h + 2 * p + 1) * wp
    cdef int dy, dx, o, i, j
    out = np.empty((cout, h, wd))
    cdef double[:, :, ::1] ov = out
    cdef double[:, ::1] cols
    cdef double[:, ::1] xf
    cdef double[:, ::1] wide
    cdef double[:, :, :, ::1] taps
    if kk <= IM2COL_MAX:
        cols = np.empty((kk, hw))
        with nogil:
            _im2col(&xv[0, 0, 0], cin, h, wd, k, &cols[0, 0])
            _gemm(False, False, cout, hw, kk, 1.0, &wv[0, 0, 0, 0], kk,
                  &cols[0, 0], hw, 0.0, &ov[0, 0, 0], hw)
        return out
    taps = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
    xf = np.zeros((cin, plane))
    wide = np.empty((cout, n))
    with nogil:
        _pad_flat(&xv[0, 0, 0], cin, h, wd, p, &xf[0, 0])
        for dy in range(k):
            for dx in range(k):
                _gemm(False, False, cout, n, cin, 1.0, &taps[dy, dx, 0, 0], cin,
                      &xf[0, 0] + dy * wp + dx, plane,
                      0.0 if (dy == 0 and dx == 0) else 1.0, &wide[0, 0], n)
        for o in range(cout):
            for i in range(h):
                for j in range(wd):
                    ov[o, i, j] = wide[o, i * wp + j]
    return out


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_forward(x, w, b):
    """Correlate ``x`` (Cin, H, W) with ``w`` (Cout, Cin, k, k) and add ``b``."""
    x, w, b = _f64(x), _f64(w), _f64(b)
    if (x.ndim != 3 or w.ndim != 4 or w.shape[1] != x.shape[0]
            or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0 or b.shape != (w.shape[0],)):
        raise ValueError("inconsistent convolution shapes")
    out = _correlate(x, w)
    out += b[:, None, None]
    return out


def conv2d_backward(x, w, gout):
    """Gradients of ``sum(gout * conv2d_forward(x, w, b))``.

    Returns:
        tuple: ``(gx, gw, gb)`` shaped like ``x``, ``w`` and the bias.
    """
    x, w, gout = _f64(x), _f64(w), _f64(gout)
    if (x.ndim != 3 or w.ndim != 4 or w.shape[1] != x.shape[0]
            or gout.shape != (w.shape[0],) + x.shape[1:]):
        raise ValueError("inconsistent convolution shapes")
    cdef double[:, :, ::1] xv = x
    cdef double[:, :, ::1] gv = gout
    cdef int cin = xv.shape[0], h = xv.shape[1], wd = xv.shape[2]
    cdef int cout = w.shape[0], k = w.shape[2]
    cdef int p = (k - 1) // 2, kk = cin * k * k, hw = h * wd
    cdef int wp = wd + 2 * p, n = h * wp, plane = (h + 2 * p + 1) * wp
    cdef int dy, dx, o, i, j
    cdef double[:, ::1] cols
    cdef double[:, ::1] xf
    cdef double[:, ::1] gwide
    cdef double[:, :, :, ::1] gtaps
    cdef double[:, ::1] gwm

    gb = gout.sum(axis=(1, 2))
    if kk <= IM2COL_MAX:
        gw = np.empty((cout, cin, k, k))
        gwm = gw.reshape(cout, kk)
        cols = np.empty((kk, hw))
        with nogil:
            _im2col(&xv[0, 0, 0], cin, h, wd, k, &cols[0, 0])
            _gemm(False, True, cout, kk, hw, 1.0, &gv[0, 0, 0], hw,
                  &cols[0, 0], hw, 0.0, &gwm[0, 0], kk)
    else:
        xf = np.zeros((cin, plane))
        gwide = np.zeros((cout, n))
        gtaps = np.empty((k, k, cout, cin))
        with nogil:
            _pad_flat(&xv[0, 0, 0], cin, h, wd, p, &xf[0, 0])
            for o in range(cout):
                for i in range(h):
                    for j in range(wd):
                        gwide[o, i * wp + j] = gv[o, i, j]
            for dy in range(k):
                for dx in range(k):
                    _gemm(False, True, cout, cin, n, 1.0, &gwide[0, 0], n,
                          &xf[0, 0] + dy * wp + dx, plane,
                          0.0, &gtaps[dy, dx, 0, 0], cin)
        gw = np.ascontiguousarray(np.asarray(gtaps).transpose(2, 3, 0, 1))

    # input gradient: correlate gout with the flipped, channel-transposed kernel
    wflip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gx = _correlate(gout, wflip)
    return gx, gw, gb

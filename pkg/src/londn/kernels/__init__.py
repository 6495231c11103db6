"""Convolution kernels used by the denoiser.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``LONDN_PURE_PYTHON`` is set to a non-empty value, the
numpy implementation is used. ``BACKEND`` names the active one.
"""
import os

from . import _conv_py

try:
    if os.environ.get("LONDN_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _conv_ext as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _conv_py
    BACKEND = "python"

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward

__all__ = ["BACKEND", "conv2d_forward", "conv2d_backward"]

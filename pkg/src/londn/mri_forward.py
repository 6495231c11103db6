"""Centered orthonormal FFTs and the multi-coil Cartesian SENSE operator.

The forward model for coil ``c`` is ``A_c = M F S_c``: multiply by the coil
sensitivity, take the centered unitary 2D DFT and zero the unsampled
phase-encode columns.
"""
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .data_model import SamplingMask, as_image, as_stack, check_smaps

_AXES = (-2, -1)


def fft2c(x):
    """Centered, unitary 2D DFT over the last two axes."""
    x = np.asarray(x, dtype=np.complex128)
    x = scipy.fft.ifftshift(x, axes=_AXES)
    x = scipy.fft.fft2(x, axes=_AXES, norm="ortho")
    return scipy.fft.fftshift(x, axes=_AXES)


def ifft2c(k):
    """Inverse of :func:`fft2c`."""
    k = np.asarray(k, dtype=np.complex128)
    k = scipy.fft.ifftshift(k, axes=_AXES)
    k = scipy.fft.ifft2(k, axes=_AXES, norm="ortho")
    return scipy.fft.fftshift(k, axes=_AXES)


@dataclass(frozen=True)
class ForwardModel:
    """Sampling mask plus coil sensitivities for one scan."""

    mask: SamplingMask
    smaps: np.ndarray

    def __post_init__(self):
        smaps = check_smaps(self.smaps)
        if smaps.shape[1:] != self.mask.shape:
            raise ValueError(
                f"mask shape {self.mask.shape} does not match coil maps {smaps.shape[1:]}"
            )
        smaps = np.ascontiguousarray(smaps)
        smaps.setflags(write=False)
        object.__setattr__(self, "smaps", smaps)
        object.__setattr__(self, "_mask_f", self.mask.grid.astype(np.float64))
        object.__setattr__(self, "_smaps_conj", np.conj(smaps))
        # column pattern in unshifted frequency order, for the row-FFT Gram operator
        cols = scipy.fft.ifftshift(self.mask.columns.astype(np.float64))
        object.__setattr__(self, "_cols_unshifted", cols)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def ncoils(self):
        return self.smaps.shape[0]

    def _check_image(self, img):
        img = np.asarray(img, dtype=np.complex128)
        if img.shape != self.shape:
            raise ValueError(f"image shape {img.shape} does not match model {self.shape}")
        return img

    def _check_ksp(self, ksp):
        ksp = as_stack(ksp)
        if ksp.shape != self.smaps.shape:
            raise ValueError(f"k-space shape {ksp.shape} does not match model {self.smaps.shape}")
        return ksp


def forward(model, img):
    """Apply ``A_c x`` for every coil; returns a ``(C, H, W)`` stack."""
    img = model._check_image(img)
    return model._mask_f * fft2c(model.smaps * img)


def adjoint(model, ksp):
    """Apply ``sum_c A_c^H y_c``."""
    ksp = model._check_ksp(ksp)
    return np.sum(model._smaps_conj * ifft2c(model._mask_f * ksp), axis=0)


def normal_op(model, img):
    """Gram operator ``sum_c A_c^H A_c x``.

    The mask depends only on the column index, so ``F^H M F`` acts along
    rows alone and the transform over columns cancels. It is also circulant,
    so the centering shifts cancel too. What remains is a 1D FFT, a
    multiply and an inverse FFT per row, equal to ``adjoint(forward(x))`` up
    to rounding.
    """
    img = model._check_image(img)
    k = scipy.fft.fft(model.smaps * img, axis=-1)
    k *= model._cols_unshifted
    return np.sum(model._smaps_conj * scipy.fft.ifft(k, axis=-1), axis=0)


def zero_filled(model, ksp):
    """Initial estimate ``x0 = A^H y``."""
    return as_image(adjoint(model, ksp))

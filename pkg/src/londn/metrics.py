"""Reconstruction quality metrics on magnitude images.

Peak value and SSIM data range are taken from the ground truth.
"""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

PSNR_CAP = 100.0


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    ssim: float
    hfen: float


def _mags(recon, gt):
    r = np.abs(np.asarray(recon))
    g = np.abs(np.asarray(gt))
    if r.shape != g.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {g.shape}")
    return r, g


def psnr(recon, gt):
    """``20 log10(max|gt| / RMSE)`` in dB, capped at 100."""
    r, g = _mags(recon, gt)
    peak = g.max()
    if peak == 0:
        raise ValueError("PSNR undefined for an all-zero ground truth")
    rmse = np.sqrt(np.mean((r - g) ** 2))
    if rmse == 0:
        return PSNR_CAP
    return float(min(20.0 * np.log10(peak / rmse), PSNR_CAP))


def gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(recon, gt, win_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM over the valid (unpadded) region with a Gaussian window."""
    r, g = _mags(recon, gt)
    if min(g.shape) < win_size:
        raise ValueError(f"image smaller than the {win_size}x{win_size} window")
    data_range = g.max() - g.min()
    if data_range == 0:
        raise ValueError("SSIM undefined for a constant ground truth")
    win = gaussian_window(win_size, sigma)

    def filt(a):
        return signal.correlate(a, win, mode="valid", method="direct")

    mu_r, mu_g = filt(r), filt(g)
    var_r = filt(r * r) - mu_r**2
    var_g = filt(g * g) - mu_g**2
    cov = filt(r * g) - mu_r * mu_g
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_r * mu_g + c1) * (2 * cov + c2)
    den = (mu_r**2 + mu_g**2 + c1) * (var_r + var_g + c2)
    return float(np.mean(num / den))


def log_kernel(size=15, sigma=1.5):
    """Laplacian-of-Gaussian kernel, shifted to sum to zero."""
    ax = np.arange(size) - (size - 1) / 2.0
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    r2 = xx**2 + yy**2
    g = np.exp(-r2 / (2 * sigma**2))
    g /= g.sum()
    h = g * (r2 - 2 * sigma**2) / sigma**4
    return h - h.mean()


def log_filter(img, size=15, sigma=1.5):
    # reflect padding: constant offsets map to exactly zero response
    return ndimage.correlate(np.asarray(img, dtype=np.float64), log_kernel(size, sigma), mode="reflect")


def hfen(recon, gt, size=15, sigma=1.5):
    """``||LoG(|recon|) - LoG(|gt|)|| / ||LoG(|gt|)||``."""
    r, g = _mags(recon, gt)
    if min(g.shape) < size:
        raise ValueError(f"image smaller than the {size}x{size} LoG kernel")
    lg = log_filter(g, size, sigma)
    denom = np.linalg.norm(lg)
    # a flat image leaves only rounding noise after the zero-sum kernel
    if denom <= 1e-12 * np.linalg.norm(g):
        raise ValueError("HFEN undefined: LoG of the ground truth is zero")
    return float(np.linalg.norm(log_filter(r, size, sigma) - lg) / denom)


def evaluate(recon, gt):
    return MetricReport(psnr(recon, gt), ssim(recon, gt), hfen(recon, gt))

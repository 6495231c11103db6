"""Local neighbor training of an unrolled MRI reconstructor.

Submodules:
    data_model   file formats, masks, seeded randomness
    mri_forward  centered FFTs and the multi-coil SENSE operator
    denoiser     residual CNN with hand-written backprop and Adam
    unrolled     CG data consistency, unrolled network, training
    neighbors    L1 / L2 / NCC distances, kNN and matching accuracy
    algorithm    the per-scan local training loop
    metrics      PSNR, SSIM, HFEN
    phantom      clustered phantoms, coil maps, sampling masks
    experiments  desk-scale comparison runs
    cli          the ``londn`` command
"""
from .algorithm import LondnConfig, londn_reconstruct, upper_loss
from .data_model import SamplingMask, read_complex, read_mask, write_complex, write_mask
from .denoiser import AdamState, DenoiserConfig, denoise, denoise_vjp, init_params
from .kernels import BACKEND
from .metrics import evaluate, hfen, psnr, ssim
from .mri_forward import ForwardModel, adjoint, fft2c, forward, ifft2c, normal_op
from .neighbors import distance, knn, nma
from .unrolled import TrainingPair, UnrollConfig, dc_block, train, unroll_forward, unroll_grad

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BACKEND",
    "DenoiserConfig",
    "ForwardModel",
    "LondnConfig",
    "SamplingMask",
    "TrainingPair",
    "UnrollConfig",
    "adjoint",
    "dc_block",
    "denoise",
    "denoise_vjp",
    "distance",
    "evaluate",
    "fft2c",
    "forward",
    "hfen",
    "ifft2c",
    "init_params",
    "knn",
    "londn_reconstruct",
    "nma",
    "normal_op",
    "psnr",
    "read_complex",
    "read_mask",
    "ssim",
    "train",
    "unroll_forward",
    "unroll_grad",
    "upper_loss",
    "write_complex",
    "write_mask",
]

"""MoDL-style unrolled reconstruction with shared denoiser weights.

Each block denoises the current estimate, ``z = D(x)``, then solves the
data-consistency problem

    argmin_x  nu * sum_c ||A_c x - y_c||^2 + mu * ||x - z||^2

with conjugate gradients, i.e. ``(nu * A^H A + mu * I) x = nu * A^H y + mu * z``.
Gradients flow back through each solve implicitly: with ``Q`` Hermitian,
``dL/dz = mu * Q^{-1} dL/dx``, which is one more CG solve.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data_model import as_image
from .denoiser import adam_step, denoise_vjp, denoise_with_cache
from .mri_forward import adjoint, forward, normal_op


class CGWarning(RuntimeWarning):
    """CG hit its iteration cap before reaching the tolerance."""


@dataclass(frozen=True)
class UnrollConfig:
    L: int = 5
    nu: float = 1.0
    mu_over_nu: float = 0.1
    cg_tol: float = 1e-5
    cg_max_iter: int = 50

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if not self.nu > 0 or not self.mu_over_nu > 0 or not self.cg_tol > 0:
            raise ValueError("nu, mu_over_nu and cg_tol must be positive")
        if self.cg_max_iter < 0:
            raise ValueError("cg_max_iter must be >= 0")

    @property
    def mu(self):
        return self.mu_over_nu * self.nu


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)

    @property
    def warning(self):
        return not self.converged


def _dot(a, b):
    return np.vdot(a, b).real


def cg_solve(apply_q, b, x0, tol, max_iter):
    """Conjugate gradients for a Hermitian positive definite ``apply_q``.

    Stops when ``||b - Q x|| <= tol * ||b||``. ``residuals`` holds the
    relative residual norm at every iterate, starting with ``x0``.
    """
    bnorm = np.sqrt(_dot(b, b))
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, True, [0.0])
    x = np.array(x0, dtype=np.complex128, copy=True)
    r = b - apply_q(x)
    rr = _dot(r, r)
    residuals = [np.sqrt(rr) / bnorm]
    if residuals[-1] <= tol:
        return CGResult(x, 0, True, residuals)
    p = r.copy()
    for it in range(1, max_iter + 1):
        qp = apply_q(p)
        alpha = rr / _dot(p, qp)
        x += alpha * p
        r -= alpha * qp
        rr_new = _dot(r, r)
        residuals.append(np.sqrt(rr_new) / bnorm)
        if residuals[-1] <= tol:
            return CGResult(x, it, True, residuals)
        p *= rr_new / rr
        p += r
        rr = rr_new
    return CGResult(x, max_iter, False, residuals)


def _dc_operator(model, cfg):
    nu, mu = cfg.nu, cfg.mu

    def apply_q(v):
        return nu * normal_op(model, v) + mu * v

    return apply_q


def dc_block(model, cfg, ksp, z, aty=None):
    """Data-consistency solve started from ``z``.

    Args:
        aty: precomputed ``adjoint(model, ksp)`` (optional).

    Returns:
        CGResult: ``.x`` is the solution; ``.converged`` False means the
        iteration cap was hit (a :class:`CGWarning` is also emitted).
    """
    z = as_image(z)
    if aty is None:
        aty = adjoint(model, ksp)
    b = cfg.nu * aty + cfg.mu * z
    res = cg_solve(_dc_operator(model, cfg), b, z, cfg.cg_tol, cfg.cg_max_iter)
    if not res.converged:
        warnings.warn(
            f"CG stopped at {res.iterations} iterations with relative residual "
            f"{res.residuals[-1]:.3g} > {cfg.cg_tol:g}",
            CGWarning,
            stacklevel=2,
        )
    return res


@dataclass
class TrainingPair:
    """Ground truth with its simulated undersampled acquisition."""

    x0: np.ndarray
    target: np.ndarray
    model: object
    ksp: np.ndarray

    @classmethod
    def simulate(cls, gt, model):
        gt = as_image(gt)
        ksp = forward(model, gt)
        return cls(adjoint(model, ksp), gt, model, ksp)


@dataclass
class BlockTape:
    x_in: np.ndarray
    z: np.ndarray
    cache: tuple
    cg: CGResult


def unroll_forward(params, dcfg, ucfg, x0, model, ksp, aty=None):
    """Run ``L`` blocks of denoise + DC from ``x0``.

    Returns:
        tuple: ``(xL, tape)``, ``tape`` being one :class:`BlockTape` per block.
    """
    x = as_image(x0)
    if aty is None:
        aty = adjoint(model, ksp)
    tape = []
    for _ in range(ucfg.L):
        z, cache = denoise_with_cache(params, dcfg, x)
        res = dc_block(model, ucfg, ksp, z, aty=aty)
        tape.append(BlockTape(x, z, cache, res))
        x = res.x
    return x, tape


def reconstruct(params, dcfg, ucfg, model, ksp):
    """Unrolled reconstruction from measured k-space (starts at ``A^H y``)."""
    aty = adjoint(model, ksp)
    return unroll_forward(params, dcfg, ucfg, aty, model, ksp, aty=aty)[0]


def unroll_grad(params, dcfg, ucfg, pair):
    """Squared-error loss of the unrolled output and its gradient.

    Returns:
        tuple: ``(loss, grads)`` with ``loss = ||x^L - target||^2``.
    """
    xl, tape = unroll_forward(params, dcfg, ucfg, pair.x0, pair.model, pair.ksp)
    diff = xl - pair.target
    loss = float(np.vdot(diff, diff).real)
    g = 2.0 * diff
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    apply_q = _dc_operator(pair.model, ucfg)
    for block in reversed(tape):
        adj = cg_solve(apply_q, g, g / (ucfg.nu + ucfg.mu), ucfg.cg_tol, ucfg.cg_max_iter)
        gz = ucfg.mu * adj.x
        gp, g = denoise_vjp(params, dcfg, block.x_in, gz, cache=block.cache)
        for k in grads:
            grads[k] += gp[k]
    return loss, grads


def write_loss_csv(path, losses):
    from .data_model import write_text_atomic

    lines = ["epoch,mean_loss"] + [f"{e},{v:.10g}" for e, v in enumerate(losses, start=1)]
    write_text_atomic(path, "\n".join(lines) + "\n")


def train(params, dcfg, ucfg, pairs, epochs, batch, adam, l1_weight=0.0, rng=None,
          loss_csv=None, progress=None):
    """Minibatch Adam over ``pairs`` for ``epochs`` epochs.

    Pairs are shuffled each epoch with ``rng``; the batch gradient is the
    mean of per-pair gradients, accumulated in pair order.

    Returns:
        tuple: ``(params, epoch_losses)`` where ``epoch_losses[e]`` is the mean
        pre-update loss over all pairs seen in epoch ``e``.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no training pairs")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    losses = []
    for epoch in range(epochs):
        adam.epoch = epoch
        order = rng.permutation(len(pairs))
        total = 0.0
        for start in range(0, len(order), batch):
            idx = order[start:start + batch]
            acc = None
            for i in idx:
                loss, g = unroll_grad(params, dcfg, ucfg, pairs[i])
                total += loss
                if acc is None:
                    acc = g
                else:
                    for k in acc:
                        acc[k] += g[k]
            for k in acc:
                acc[k] /= len(idx)
            params, adam = adam_step(params, acc, adam, l1_weight)
        losses.append(total / len(pairs))
        if progress is not None:
            progress(epoch, losses[-1])
    if loss_csv is not None:
        write_loss_csv(loss_csv, losses)
    return params, losses

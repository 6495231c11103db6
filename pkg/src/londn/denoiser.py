"""Residual CNN denoiser on 2-channel (real, imag) images.

Parameters live in an ordered ``dict`` mapping ``"conv{i}.weight"`` and
``"conv{i}.bias"`` to float64 arrays. Gradients and optimizer moments use the
same keys.
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .data_model import read_complex, write_complex, write_text_atomic


@dataclass(frozen=True)
class DenoiserConfig:
    n_layers: int = 4
    features: int = 32
    kernel: int = 3
    residual: bool = True

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")
        if self.n_layers < 2:
            raise ValueError(f"n_layers must be >= 2, got {self.n_layers}")
        if self.features < 1:
            raise ValueError(f"features must be >= 1, got {self.features}")

    def layer_shapes(self):
        """``(out_ch, in_ch, k, k)`` per layer, first 2->F, last F->2."""
        chans = [2] + [self.features] * (self.n_layers - 1) + [2]
        k = self.kernel
        return [(chans[i + 1], chans[i], k, k) for i in range(self.n_layers)]


def param_names(cfg):
    names = []
    for i in range(cfg.n_layers):
        names += [f"conv{i}.weight", f"conv{i}.bias"]
    return names


def init_params(cfg, rng, last_scale=0.1):
    """He-normal weights, zero biases; the last layer is scaled by ``last_scale``
    so a fresh residual network starts close to the identity."""
    params = {}
    shapes = cfg.layer_shapes()
    for i, shape in enumerate(shapes):
        fan_in = shape[1] * shape[2] * shape[3]
        std = np.sqrt(2.0 / fan_in)
        if i == len(shapes) - 1:
            std *= last_scale
        params[f"conv{i}.weight"] = rng.standard_normal(shape) * std
        params[f"conv{i}.bias"] = np.zeros(shape[0])
    return params


def zero_params(cfg):
    params = {}
    for i, shape in enumerate(cfg.layer_shapes()):
        params[f"conv{i}.weight"] = np.zeros(shape)
        params[f"conv{i}.bias"] = np.zeros(shape[0])
    return params


def check_params(params, cfg):
    for i, shape in enumerate(cfg.layer_shapes()):
        w = params.get(f"conv{i}.weight")
        b = params.get(f"conv{i}.bias")
        if w is None or b is None:
            raise ValueError(f"missing parameters for layer {i}")
        if w.shape != shape or b.shape != (shape[0],):
            raise ValueError(
                f"layer {i}: expected weight {shape} / bias {(shape[0],)}, "
                f"got {w.shape} / {b.shape}"
            )
    extra = set(params) - set(param_names(cfg))
    if extra:
        raise ValueError(f"unexpected parameters: {sorted(extra)}")


def to_channels(img):
    img = np.asarray(img, dtype=np.complex128)
    return np.stack([img.real, img.imag])


def from_channels(ch):
    return ch[0] + 1j * ch[1]


def _forward(params, cfg, img):
    """Forward pass keeping the per-layer inputs and pre-activations."""
    check_params(params, cfg)
    a = to_channels(img)
    inputs, preacts = [], []
    for i in range(cfg.n_layers):
        inputs.append(a)
        h = kernels.conv2d_forward(a, params[f"conv{i}.weight"], params[f"conv{i}.bias"])
        preacts.append(h)
        a = np.maximum(h, 0.0) if i < cfg.n_layers - 1 else h
    net = from_channels(a)
    out = np.asarray(img, dtype=np.complex128) - net if cfg.residual else net
    return out, (inputs, preacts)


def denoise(params, cfg, img):
    """Apply the denoiser to a complex image."""
    img = np.asarray(img, dtype=np.complex128)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    return _forward(params, cfg, img)[0]


def denoise_with_cache(params, cfg, img):
    """Like :func:`denoise` but also returns the activations for backprop."""
    return _forward(params, cfg, img)


def denoise_vjp(params, cfg, img, cotangent, cache=None):
    """Reverse-mode gradient of ``<cotangent, denoise(img)>`` (real inner
    product over the real/imag channels).

    Args:
        cache: activations from :func:`denoise_with_cache`; recomputed if None.

    Returns:
        tuple: ``(grads, grad_input)`` with ``grads`` keyed like ``params``
        and ``grad_input`` a complex image (real part = d/d Re, imag = d/d Im).
    """
    img = np.asarray(img, dtype=np.complex128)
    cotangent = np.asarray(cotangent, dtype=np.complex128)
    if cotangent.shape != img.shape:
        raise ValueError(f"cotangent shape {cotangent.shape} != image shape {img.shape}")
    if cache is None:
        _, cache = _forward(params, cfg, img)
    inputs, preacts = cache
    g_out = to_channels(cotangent)
    g = -g_out if cfg.residual else g_out
    grads = {}
    for i in reversed(range(cfg.n_layers)):
        if i < cfg.n_layers - 1:
            g = g * (preacts[i] > 0)
        gx, gw, gb = kernels.conv2d_backward(inputs[i], params[f"conv{i}.weight"], g)
        grads[f"conv{i}.weight"] = gw
        grads[f"conv{i}.bias"] = gb
        g = gx
    if cfg.residual:
        g = g + g_out
    grads = {name: grads[name] for name in param_names(cfg)}
    return grads, from_channels(g)


@dataclass
class AdamState:
    """Adam moments plus a multi-step learning-rate schedule.

    The rate for epoch ``e`` is ``lr * decay ** (number of milestones <= e)``.
    """

    lr: float = 6e-5
    milestones: tuple = (100, 150)
    decay: float = 0.65
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    epoch: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def local(cls):
        return cls(lr=6e-5, milestones=(100, 150), decay=0.65)

    @classmethod
    def global_(cls):
        return cls(lr=1e-4, milestones=(50, 100), decay=0.6)

    def rate(self, epoch=None):
        epoch = self.epoch if epoch is None else epoch
        n = sum(1 for ms in self.milestones if epoch >= ms)
        return self.lr * self.decay ** n


def adam_step(params, grads, state, l1_weight=0.0):
    """One Adam update with an l1 subgradient ``l1_weight * sign(theta)``.

    Returns:
        tuple: ``(new_params, state)``; ``state`` is updated in place.
    """
    if l1_weight < 0:
        raise ValueError("l1_weight must be >= 0")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr = state.rate()
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if l1_weight:
            g = g + l1_weight * np.sign(p)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        new[name] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return new, state


def save_weights(directory, params, cfg):
    """One ``CPX1`` file per tensor (imag = 0) plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = []
    for name in param_names(cfg):
        arr = params[name]
        flat = arr.reshape(1, -1)
        write_complex(directory / name, flat.astype(np.complex128))
        tensors.append({"name": name, "shape": list(arr.shape)})
    manifest = {"config": asdict(cfg), "tensors": tensors}
    write_text_atomic(directory / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def load_weights(directory):
    """Inverse of :func:`save_weights`; returns ``(params, cfg)``.

    Values pass through float32 on disk.
    """
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    cfg = DenoiserConfig(**manifest["config"])
    params = {}
    for entry in manifest["tensors"]:
        data = read_complex(directory / entry["name"])
        params[entry["name"]] = data.real.reshape(entry["shape"]).astype(np.float64)
    check_params(params, cfg)
    return params, cfg


def quantize_params(params):
    """Round parameters through float32, matching what :func:`save_weights` stores."""
    return {k: v.astype(np.float32).astype(np.float64) for k, v in params.items()}

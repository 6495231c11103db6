"""Synthetic data: Cartesian masks, coil sensitivities and clustered phantoms.

Every cluster is a random collection of soft-edged ellipses with complex
amplitudes and a smooth phase; members are jittered copies of it. Member
``i`` of cluster ``c`` is generated from its own seeded substream, so the
dataset does not depend on generation order or worker count.
"""
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data_model import (
    SamplingMask,
    make_rng,
    normalize_smaps,
    read_complex,
    write_complex,
    write_text_atomic,
)

# reference center block sizes for 256 phase-encode columns
_REF_WIDTH = 256
_REF_CENTER = {4: 31, 8: 15}


def default_center_lines(width, accel):
    """Center block size scaled proportionally from the reference width."""
    ref = _REF_CENTER.get(int(accel)) if float(accel).is_integer() else None
    if ref is None:
        ref = int(round(_REF_WIDTH / accel * 0.12))
    return max(1, int(round(ref * width / _REF_WIDTH)))


@dataclass(frozen=True)
class MaskSpec:
    accel: float = 4
    center_lines: int = 8
    width: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.accel < 1:
            raise ValueError("accel must be >= 1")
        if self.width < 1 or self.center_lines < 0:
            raise ValueError("width must be positive and center_lines non-negative")
        if self.accel > 1 and not self.center_lines < self.width / self.accel:
            raise ValueError(
                f"center_lines={self.center_lines} must be < width/accel={self.width / self.accel:g}"
            )
        if self.center_lines > self.width:
            raise ValueError("center_lines exceeds width")

    @property
    def n_sampled(self):
        return int(round(self.width / self.accel))


def center_columns(width, center_lines):
    start = width // 2 - center_lines // 2
    return np.arange(start, start + center_lines)


def gen_mask(spec, rng=None, height=None):
    """Variable-density 1D random phase-encode mask with a full center block."""
    if rng is None:
        rng = make_rng(spec.seed)
    height = spec.width if height is None else height
    cols = np.zeros(spec.width, dtype=np.uint8)
    center = center_columns(spec.width, spec.center_lines)
    cols[center] = 1
    remaining = spec.n_sampled - len(center)
    if remaining < 0:
        raise ValueError("center block is larger than the sampling budget")
    others = np.flatnonzero(cols == 0)
    cols[rng.choice(others, size=remaining, replace=False)] = 1
    return SamplingMask.from_columns(cols, height, spec.accel, spec.center_lines)


def gen_smaps(n_coils, height, width, rotation=0.0, sigma_frac=0.6, phase_cycles=0.5):
    """Gaussian coil profiles centered on the image border with linear phase.

    Coil ``c`` sits at angle ``rotation + 2 pi c / n_coils`` on the border of
    the (square-normalized) field of view.
    """
    if n_coils < 1:
        raise ValueError("n_coils must be >= 1")
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(height) - cy, np.arange(width) - cx, indexing="ij")
    sigma = sigma_frac * max(height, width)
    maps = []
    for c in range(n_coils):
        ang = rotation + 2 * np.pi * c / n_coils
        dy, dx = np.sin(ang), np.cos(ang)
        # project the direction onto the border of the rectangle
        scale = 1.0 / max(abs(dy) / (height / 2.0), abs(dx) / (width / 2.0))
        py, px = dy * scale, dx * scale
        mag = np.exp(-((yy - py) ** 2 + (xx - px) ** 2) / (2 * sigma**2))
        phase = 2 * np.pi * phase_cycles * (dx * xx / width + dy * yy / height)
        maps.append(mag * np.exp(1j * phase))
    return normalize_smaps(np.array(maps))


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 64
    n_clusters: int = 8
    per_cluster: int = 25
    n_coils: int = 4
    jitter: float = 0.05
    n_heldout: int = 10

    def __post_init__(self):
        if self.per_cluster < 2:
            raise ValueError("per_cluster must be >= 2")
        if self.n_clusters < 1 or self.size < 4 or self.n_coils < 1 or self.jitter < 0:
            raise ValueError("invalid phantom spec")

    @property
    def n_samples(self):
        return self.n_clusters * self.per_cluster


def _cluster_template(rng):
    n = int(rng.integers(5, 11))
    ellipses = []
    for i in range(n):
        if i == 0:
            # large body ellipse so every phantom has a support
            center = rng.uniform(-0.08, 0.08, 2)
            axes = rng.uniform(0.55, 0.8, 2)
            amp = rng.uniform(0.6, 1.0)
        else:
            center = rng.uniform(-0.5, 0.5, 2)
            axes = rng.uniform(0.06, 0.3, 2)
            amp = rng.uniform(-0.5, 0.8)
        ellipses.append(
            {
                "center": center,
                "axes": axes,
                "angle": rng.uniform(0, np.pi),
                "amp": amp * np.exp(1j * rng.uniform(-0.3, 0.3)),
            }
        )
    phase = rng.normal(0, 0.5, 5)  # coefficients of 1, x, y, x^2, y^2
    return ellipses, phase


def _render(ellipses, phase, size, edge=0.02):
    ax = np.linspace(-1, 1, size)
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    img = np.zeros((size, size), dtype=np.complex128)
    for e in ellipses:
        cy, cx = e["center"]
        ay, axx = e["axes"]
        c, s = np.cos(e["angle"]), np.sin(e["angle"])
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        r = np.sqrt((u / axx) ** 2 + (v / ay) ** 2)
        img += e["amp"] * expit((1.0 - r) / edge)
    ph = phase[0] + phase[1] * xx + phase[2] * yy + phase[3] * xx**2 + phase[4] * yy**2
    return img * np.exp(1j * ph)


def _jittered(template, rng, jitter):
    ellipses, phase = template
    out = []
    for e in ellipses:
        out.append(
            {
                "center": e["center"] + jitter * rng.standard_normal(2),
                "axes": e["axes"] * (1 + jitter * rng.standard_normal(2)),
                "angle": e["angle"] + jitter * np.pi * rng.standard_normal(),
                "amp": e["amp"] * (1 + jitter * rng.standard_normal()),
            }
        )
    return out, phase + jitter * rng.standard_normal(len(phase))


def gen_member(spec, seed, cluster, member):
    """Ground truth and coil maps for member ``member`` of ``cluster``."""
    template = _cluster_template(make_rng(seed, 0, cluster))
    rng = make_rng(seed, 1, cluster, member)
    ellipses, phase = _jittered(template, rng, spec.jitter)
    gt = _render(ellipses, phase, spec.size)
    gt /= np.abs(gt).max()
    smaps = gen_smaps(spec.n_coils, spec.size, spec.size, rotation=rng.uniform(0, 2 * np.pi))
    return gt, smaps


def gen_dataset(spec, seed):
    """Training set of ``n_clusters * per_cluster`` samples, cluster-major.

    Returns:
        tuple: ``(samples, labels)``, ``samples`` a list of ``(gt, smaps)``.
    """
    samples, labels = [], []
    for c in range(spec.n_clusters):
        for m in range(spec.per_cluster):
            samples.append(gen_member(spec, seed, c, m))
            labels.append(c)
    return samples, labels


def gen_heldout(spec, seed, n=None):
    """Held-out members (indices beyond ``per_cluster``), clusters round-robin."""
    n = spec.n_heldout if n is None else n
    samples, labels = [], []
    for i in range(n):
        c = i % spec.n_clusters
        m = spec.per_cluster + i // spec.n_clusters
        samples.append(gen_member(spec, seed, c, m))
        labels.append(c)
    return samples, labels


def _write_samples(root, sub, samples):
    entries = []
    for i, (gt, smaps) in enumerate(samples):
        d = root / sub / f"sample_{i:05d}" if sub else root / f"sample_{i:05d}"
        d.mkdir(parents=True, exist_ok=True)
        write_complex(d / "gt", gt)
        write_complex(d / "smaps", smaps)
        entries.append(str(d.relative_to(root)))
    return entries


def save_dataset(root, spec, seed, train, train_labels, heldout=(), heldout_labels=()):
    """Write the dataset directory layout and ``meta.json``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    train_paths = _write_samples(root, None, train)
    held_paths = _write_samples(root, "heldout", heldout)
    meta = {
        "spec": asdict(spec),
        "seed": seed,
        "n_clusters": spec.n_clusters,
        "clusters": list(range(spec.n_clusters)),
        "samples": [
            {"index": i, "cluster": int(c), "path": p}
            for i, (c, p) in enumerate(zip(train_labels, train_paths))
        ],
        "heldout": [
            {"index": i, "cluster": int(c), "path": p}
            for i, (c, p) in enumerate(zip(heldout_labels, held_paths))
        ],
    }
    write_text_atomic(root / "meta.json", json.dumps(meta, indent=2) + "\n")
    return meta


def _read_sample(root, rel):
    gt = read_complex(root / rel / "gt")[0]
    smaps = read_complex(root / rel / "smaps")
    return gt, smaps


def load_dataset(root):
    """Returns ``(meta, train, heldout)`` with samples as ``(gt, smaps)``.

    Coil maps are re-normalized after the float32 round trip.
    """
    root = Path(root)
    meta = json.loads((root / "meta.json").read_text())

    def load(entries):
        out = []
        for e in entries:
            gt, smaps = _read_sample(root, e["path"])
            out.append((gt, normalize_smaps(smaps)))
        return out

    return meta, load(meta["samples"]), load(meta.get("heldout", []))

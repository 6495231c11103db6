"""Per-scan local training on nearest neighbors (the LONDN loop).

For each alternation the current estimate is matched against the training
set, the unrolled network is trained on the ``k`` closest pairs simulated
under the scan's own mask, and the estimate is recomputed from ``x0``.
The first search compares aliased images (``x0`` against each training
image's ``A^H A x_n`` under the same mask); later searches compare the
current reconstruction against ground truths.
"""
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .data_model import make_rng
from .denoiser import AdamState, init_params, load_weights
from .mri_forward import ForwardModel, adjoint
from .neighbors import distances_to, knn
from .unrolled import TrainingPair, train, unroll_forward


@dataclass(frozen=True)
class LondnConfig:
    k: int = 30
    S: int = 2
    epochs: Optional[int] = None  # None: 200 cold start, 10 warm start
    metric: str = "NCC"
    l1_weight: float = 1e-9
    warm_start: Optional[str] = None
    oracle: bool = False
    batch: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.S < 1:
            raise ValueError("k and S must be >= 1")
        if self.epochs is not None and self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.metric.upper() not in ("L1", "L2", "NCC"):
            raise ValueError(f"unknown metric {self.metric!r}")

    def resolved_epochs(self, warm):
        if self.epochs is not None:
            return self.epochs
        return 10 if warm else 200


def simulate_pair(gt, smaps, mask):
    """Training pair for ``gt`` acquired with ``smaps`` under ``mask``."""
    return TrainingPair.simulate(gt, ForwardModel(mask, smaps))


def upper_loss(x, train_gts, k, metric="L2"):
    """RMS error between ``x`` and its ``k`` nearest training ground truths."""
    gallery = np.asarray(train_gts)
    ns = knn(x, gallery, k, metric)
    q = np.asarray(x).size
    sq = [np.sum(np.abs(x - gallery[i]) ** 2) / q for i in ns.indices]
    return float(np.sqrt(np.mean(sq)))


@dataclass
class Alternation:
    query: str
    neighbors: object
    upper_loss: float
    train_loss: list
    recon: np.ndarray = field(repr=False, default=None)


@dataclass
class LondnTrace:
    metric: str
    k: int
    oracle: bool
    alternations: list = field(default_factory=list)
    final_neighbors: object = None

    def searches(self):
        """Neighbor sets in search order: one per alternation plus the final one."""
        out = [a.neighbors for a in self.alternations]
        if self.final_neighbors is not None:
            out.append(self.final_neighbors)
        return out

    def to_dict(self):
        return {
            "metric": self.metric,
            "k": self.k,
            "oracle": self.oracle,
            "alternations": [
                {
                    "s": s,
                    "query": a.query,
                    **a.neighbors.to_dict(),
                    "upper_loss": a.upper_loss,
                    "train_loss": list(a.train_loss),
                }
                for s, a in enumerate(self.alternations, start=1)
            ],
            "final_search": None if self.final_neighbors is None else self.final_neighbors.to_dict(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


def londn_reconstruct(test_ksp, test_model, trainset, cfg, dcfg, ucfg,
                      init=None, gt=None, log=None):
    """Alternate neighbor search and local training for one scan.

    Args:
        trainset: list of ``(gt, smaps)`` training samples.
        init: initial parameters; otherwise ``cfg.warm_start`` weights, otherwise
            a seeded random initialization.
        gt: ground-truth test image, required in oracle mode. The oracle
            searches once, with ``gt`` as the query, and trains for
            ``S * T`` epochs on those neighbors.

    Returns:
        tuple: ``(x, params, trace)``.
    """
    n = len(trainset)
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds training set size {n}")
    if cfg.oracle and gt is None:
        raise ValueError("oracle mode needs the ground-truth test image")

    warm = init is not None or cfg.warm_start is not None
    if init is not None:
        params = {k: v.copy() for k, v in init.items()}
    elif cfg.warm_start is not None:
        params, wcfg = load_weights(cfg.warm_start)
        if wcfg != dcfg:
            raise ValueError(f"warm-start weights have config {wcfg}, expected {dcfg}")
    else:
        params = init_params(dcfg, make_rng(cfg.seed, 7))
    epochs = cfg.resolved_epochs(warm)

    mask = test_model.mask
    x0 = adjoint(test_model, test_ksp)
    aty = x0
    train_gts = np.array([g for g, _ in trainset])
    pairs = [simulate_pair(g, s, mask) for g, s in trainset]
    aliased = np.array([p.x0 for p in pairs])

    adam = AdamState.local()
    trace = LondnTrace(cfg.metric, cfg.k, cfg.oracle)
    x = x0
    n_alt = 1 if cfg.oracle else cfg.S
    if cfg.oracle:
        # one search, but the same total training budget as S alternations
        epochs *= cfg.S
    for s in range(n_alt):
        if cfg.oracle:
            query, gallery, qname = gt, train_gts, "oracle"
        elif s == 0:
            query, gallery, qname = x0, aliased, "aliased"
        else:
            query, gallery, qname = x, train_gts, "recon"
        ns = knn(query, gallery, cfg.k, cfg.metric)
        local = [pairs[i] for i in ns.indices]
        params, losses = train(
            params, dcfg, ucfg, local, epochs, cfg.batch, adam, cfg.l1_weight,
            rng=make_rng(cfg.seed, 11, s),
        )
        x = unroll_forward(params, dcfg, ucfg, x0, test_model, test_ksp, aty=aty)[0]
        ul = upper_loss(x, train_gts, cfg.k, "L2")
        trace.alternations.append(Alternation(qname, ns, ul, losses, x))
        if log is not None:
            log(f"alternation {s + 1}: upper loss {ul:.5f}")
    trace.final_neighbors = knn(x, train_gts, cfg.k, cfg.metric)
    return x, params, trace


def oracle_upper_loss(gt, train_gts, k):
    """Upper-level loss evaluated at the ground-truth test image."""
    return upper_loss(gt, train_gts, k, "L2")


def config_dict(cfg):
    return asdict(cfg)


__all__ = [
    "LondnConfig",
    "LondnTrace",
    "Alternation",
    "simulate_pair",
    "upper_loss",
    "oracle_upper_loss",
    "londn_reconstruct",
    "distances_to",
]

"""Image distances, k-nearest-neighbor selection and neighbor-matching accuracy."""
from dataclasses import dataclass

import numpy as np

METRICS = ("L1", "L2", "NCC")


@dataclass(frozen=True)
class NeighborSet:
    indices: tuple
    distances: tuple

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        if len(self.indices) != len(self.distances):
            raise ValueError("indices and distances differ in length")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("neighbor indices must be distinct")

    @property
    def k(self):
        return len(self.indices)

    def to_dict(self):
        return {"indices": list(self.indices), "distances": list(self.distances)}


def _check_metric(metric):
    metric = metric.upper()
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return metric


def distances_to(query, gallery, metric):
    """Distances from ``query`` (H, W) to every image in ``gallery`` (N, H, W).

    NCC similarity ``|a^H b| / (||a|| ||b||)`` is returned as ``1 - NCC``.
    """
    metric = _check_metric(metric)
    q = np.asarray(query, dtype=np.complex128)
    g = np.asarray(gallery, dtype=np.complex128)
    if g.ndim == 2:
        g = g[None]
    if g.shape[1:] != q.shape:
        raise ValueError(f"shape mismatch: query {q.shape}, gallery {g.shape[1:]}")
    flat = g.reshape(len(g), -1)
    qf = q.ravel()
    if metric == "L1":
        return np.abs(flat - qf).sum(axis=1)
    if metric == "L2":
        return np.sqrt((np.abs(flat - qf) ** 2).sum(axis=1))
    qn = np.linalg.norm(qf)
    gn = np.linalg.norm(flat, axis=1)
    if qn == 0 or np.any(gn == 0):
        raise ValueError("NCC distance is undefined for a zero image")
    ncc = np.abs(flat.conj() @ qf) / (qn * gn)
    return np.clip(1.0 - ncc, 0.0, 1.0)


def distance(a, b, metric):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    metric = _check_metric(metric)
    if metric == "NCC":
        # symmetric form; the gallery path conjugates the other argument
        an, bn = np.linalg.norm(a), np.linalg.norm(b)
        if an == 0 or bn == 0:
            raise ValueError("NCC distance is undefined for a zero image")
        ncc = abs(np.vdot(a, b)) / (an * bn)
        return float(min(max(1.0 - ncc, 0.0), 1.0))
    return float(distances_to(a, b[None], metric)[0])


def knn(query, gallery, k, metric):
    """The ``k`` gallery entries closest to ``query``; ties go to lower index."""
    n = len(gallery)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for a gallery of {n}")
    d = distances_to(query, gallery, metric)
    order = np.argsort(d, kind="stable")[:k]
    return NeighborSet(order, d[order])


def nma(found, oracle, k):
    """Neighbor-matching accuracy in percent, averaged over test items."""
    found = list(found)
    oracle = list(oracle)
    if len(found) != len(oracle):
        raise ValueError("found and oracle lists are not aligned")
    if not found:
        raise ValueError("no test items")
    scores = []
    for f, o in zip(found, oracle):
        if f.k != k or o.k != k:
            raise ValueError(f"neighbor sets must have k={k}")
        scores.append(len(set(f.indices) & set(o.indices)) / k)
    return 100.0 * float(np.mean(scores))

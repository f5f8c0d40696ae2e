"""Greedy input-space sampling (GSx) over blended global/graph distances."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .features import minmax_scale, pooled_graph_vector


@dataclass(frozen=True)
class PoolItem:
    id: str
    global_vec: np.ndarray
    graph_vec: np.ndarray


@dataclass
class CandidatePool:
    items: list[PoolItem]
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("pool ids must be unique")

    def __len__(self) -> int:
        return len(self.items)

    def digest(self) -> str:
        """sha256 over ids and vector bytes, in id order."""
        h = hashlib.sha256()
        for it in sorted(self.items, key=lambda it: it.id):
            h.update(it.id.encode("utf-8") + b"\0")
            h.update(np.ascontiguousarray(it.global_vec, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(it.graph_vec, dtype="<f8").tobytes())
        return h.hexdigest()


def build_pool(ids: Sequence[str], global_rows, node_matrices: Sequence[np.ndarray], alpha: float = 0.5) -> CandidatePool:
    """Mean-pool each graph, then min-max scale both parts across the pool."""
    g, _ = minmax_scale(np.asarray(global_rows, dtype=np.float64))
    pooled, _ = minmax_scale(np.stack([pooled_graph_vector(m) for m in node_matrices]))
    return CandidatePool([PoolItem(i, gv, pv) for i, gv, pv in zip(ids, g, pooled)], alpha)


def blended_distance(a: PoolItem, b: PoolItem, alpha: float = 0.5) -> float:
    """alpha * |a_global - b_global| + (1 - alpha) * |a_graph - b_graph| (Euclidean)."""
    if a.global_vec.shape != b.global_vec.shape or a.graph_vec.shape != b.graph_vec.shape:
        raise ValueError("dimension mismatch between pool items")
    dg = a.global_vec - b.global_vec
    dh = a.graph_vec - b.graph_vec
    return alpha * math.sqrt(float(dg @ dg)) + (1.0 - alpha) * math.sqrt(float(dh @ dh))


@dataclass
class SelectionResult:
    selected_ids: list[str]
    distances_at_selection: list[float]  # first entry: distance to the centroid


def _blend_to_all(G, H, g, h, alpha):
    dg = G - g
    dh = H - h
    return alpha * np.sqrt(np.einsum("ij,ij->i", dg, dg)) + (1.0 - alpha) * np.sqrt(np.einsum("ij,ij->i", dh, dh))


def gsx_select(pool: CandidatePool, k: int) -> SelectionResult:
    """Pick the item nearest the pool centroid, then repeatedly the item farthest from the picked set.

    Items are visited in id order and argmin/argmax keep the first hit, so ties
    always go to the lowest id and input order does not matter.
    """
    n = len(pool)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    items = sorted(pool.items, key=lambda it: it.id)
    G = np.stack([it.global_vec for it in items]).astype(np.float64)
    H = np.stack([it.graph_vec for it in items]).astype(np.float64)
    a = pool.alpha

    to_centroid = _blend_to_all(G, H, G.mean(axis=0), H.mean(axis=0), a)
    first = int(np.argmin(to_centroid))
    chosen = [first]
    dists = [float(to_centroid[first])]
    taken = np.zeros(n, dtype=bool)
    taken[first] = True
    nearest = _blend_to_all(G, H, G[first], H[first], a)
    for _ in range(k - 1):
        cand = np.where(taken, -np.inf, nearest)
        pick = int(np.argmax(cand))
        chosen.append(pick)
        dists.append(float(nearest[pick]))
        taken[pick] = True
        nearest = np.minimum(nearest, _blend_to_all(G, H, G[pick], H[pick], a))
    return SelectionResult([items[i].id for i in chosen], dists)


def plan_budget(population: int, confidence: float = 95.0, margin: float = 5.0) -> int:
    """Finite-population sample size at p = 0.5.

    n0 = z^2 * 0.25 / m^2 and n = ceil(n0 / (1 + (n0 - 1) / N)), with confidence and
    margin given in percent.
    """
    if population < 1:
        raise ValueError("population must be >= 1")
    if not margin > 0:
        raise ValueError("margin must be positive")
    if not 0 < confidence < 100:
        raise ValueError("confidence must be in (0, 100)")
    z = stats.norm.ppf(1.0 - (1.0 - confidence / 100.0) / 2.0)
    m = margin / 100.0
    n0 = z * z * 0.25 / (m * m)
    return min(population, math.ceil(n0 / (1.0 + (n0 - 1.0) / population)))

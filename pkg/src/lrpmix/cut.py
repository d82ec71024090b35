"""Arc cuts of the cycle: edge boundaries, the arc Cheeger ratio and the
resulting lower bound on the mixing time.

Only arcs are searched, so the reported ratio is an upper bound on the
Cheeger constant min |dA|/|A| over |A| <= N/2, which is the direction the
lower bound on tau needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import LrpGraph

_LOWER_CONST = (1.0 - math.log(2.0)) / 2.0


@dataclass
class CutReport:
    start: int
    length: int
    boundary: int  # unordered edges leaving the arc, with multiplicity
    ratio: float  # boundary / length
    tau_lower: float
    conductance: float  # boundary / sum of degrees in the arc (diagnostic only)

    @property
    def best_arc(self) -> tuple[int, int]:
        return self.start, self.length


def arc_mask(n: int, start: int, length: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[(start + np.arange(length)) % n] = True
    return mask


def arc_boundary(graph: LrpGraph, start: int, length: int) -> int:
    """|dA| for A = {start, ..., start + length - 1} (mod N), by full recount."""
    if not 1 <= length <= graph.n - 1:
        raise ValueError(f"arc length must be in [1, N-1], got {length}")
    mask = arc_mask(graph.n, start, length)
    x, y, m = graph.edges.T
    return int(m[mask[x] != mask[y]].sum())


@njit(cache=True)
def _sliding_boundaries(indptr, indices, mult, n, length, b0):
    out = np.empty(n, np.int64)
    b = b0
    out[0] = b
    for start in range(n - 1):
        v = start
        w = (start + length) % n
        lo = start + 1  # A minus v is the arc [lo, lo + length - 1)
        for s in range(indptr[v], indptr[v + 1]):
            u = indices[s]
            if (u - lo) % n < length - 1:
                b += mult[s]
            else:
                b -= mult[s]
        for s in range(indptr[w], indptr[w + 1]):
            u = indices[s]
            if (u - lo) % n < length - 1:
                b -= mult[s]
            else:
                b += mult[s]
        out[start + 1] = b
    return out


def sliding_boundaries(graph: LrpGraph, length: int) -> np.ndarray:
    """|dA| for every arc of the given length, indexed by start vertex."""
    b0 = arc_boundary(graph, 0, length)
    return _sliding_boundaries(graph.indptr, graph.indices, graph.mult, graph.n, length, b0)


def cheeger_tau_lower(ratio: float) -> float:
    """((1 - log 2) / 2) * (1 / (2 ratio) - 1), floored at 0."""
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    return max(0.0, _LOWER_CONST * (1.0 / (2.0 * float(ratio)) - 1.0))


def cheeger_arcs(graph: LrpGraph, lengths=None) -> CutReport:
    """Minimise |dA|/|A| over arcs with the given lengths (default N // 2)."""
    n = graph.n
    lengths = [n // 2] if lengths is None else sorted(set(int(l) for l in lengths))
    if any(not 1 <= l <= n // 2 for l in lengths):
        raise ValueError(f"arc lengths must lie in [1, {n // 2}]")
    best = None
    for length in lengths:
        bnd = sliding_boundaries(graph, length)
        start = int(np.argmin(bnd))
        ratio = bnd[start] / length
        if best is None or ratio < best[2]:
            best = (start, length, ratio, int(bnd[start]))
    start, length, ratio, boundary = best
    vol = int(graph.degree[arc_mask(n, start, length)].sum())
    return CutReport(start, length, boundary, float(ratio), cheeger_tau_lower(ratio), boundary / vol)

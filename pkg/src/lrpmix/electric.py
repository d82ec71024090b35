"""Hitting times of the simple random walk through electrical networks.

Edges are unit resistors (a multi-edge of multiplicity m is conductance m).
With the target set grounded and a unit current injected at u, the
voltage v satisfies ``E_u[V_x] = v(x) deg(x)`` for the number of visits
V_x to x before the target is hit, hence ``E_u[T] = sum_x v(x) deg(x)``.

Vertices are 0-based: vertex i here is vertex i + 1 in the 1..N labelling
used for the arcs A = {1..N/2}, B = {N/2+1..3N/4}, C = {3N/4+1..N}.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .model import LrpGraph, STREAM_WALKS, stream_key

DIRECT_MAX_N = 512
RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class RegionSplit:
    n: int
    A: range
    B: range
    C: range
    K: tuple  # eight ranges
    u: int
    nominal_u: int  # vertex 3N/8 (1-based), which lies inside A
    lenient: bool = False

    def ground_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.A.start:self.B.stop] = True
        return mask


def region_split(n: int, strict: bool = True, u: int | None = None) -> RegionSplit:
    """A, B, C, K_1..K_8 and the probe u (default vertex 7N/8, mid-C)."""
    lenient = n % 8 != 0
    if lenient and strict:
        raise ValueError(f"n={n} is not divisible by 8")
    if n < 8:
        raise ValueError("n must be at least 8")
    h, q3 = n // 2, (3 * n) // 4
    b = n // 8
    K = tuple(range(i * b, (i + 1) * b if i < 7 else n) for i in range(8))
    probe = (7 * n) // 8 - 1 if u is None else int(u)
    if probe < q3 or probe >= n:
        raise ValueError(f"probe vertex {probe} must lie outside A and B")
    return RegionSplit(n, range(0, h), range(h, q3), range(q3, n), K, probe, (3 * n) // 8 - 1, lenient)


@dataclass
class VoltageSolution:
    v: np.ndarray
    residual: float
    source: int
    method: str

    @property
    def effective_resistance(self) -> float:
        return float(self.v[self.source])


def laplacian(graph: LrpGraph) -> sp.csr_matrix:
    A = graph.to_scipy()
    return (sp.diags(graph.degree.astype(np.float64)) - A).tocsr()


def solve_voltages(graph: LrpGraph, source: int, ground, method: str = "auto") -> VoltageSolution:
    """Voltages with ``ground`` held at 0 and unit current into ``source``."""
    n = graph.n
    ground = np.asarray(ground)
    if ground.dtype == bool:
        gmask = ground.copy()
    else:
        gmask = np.zeros(n, dtype=bool)
        gmask[ground.astype(np.int64)] = True
    if not gmask.any():
        raise ValueError("ground set must be non-empty")
    if gmask[source]:
        raise ValueError("source lies in the ground set")
    free = np.flatnonzero(~gmask)
    pos = np.searchsorted(free, source)
    Lff = laplacian(graph)[free][:, free].tocsc()
    rhs = np.zeros(len(free))
    rhs[pos] = 1.0
    if method == "auto":
        method = "direct" if n <= DIRECT_MAX_N else "cg"
    if method == "direct":
        x = spla.splu(Lff).solve(rhs)
    elif method == "cg":
        jacobi = sp.diags(1.0 / Lff.diagonal())
        x, info = spla.cg(Lff, rhs, rtol=1e-14, atol=0.0, M=jacobi, maxiter=50 * n)
        if info > 0:
            res = float(np.abs(Lff @ x - rhs).max())
            if res > RESIDUAL_TOL:
                raise SolverError(f"CG stopped after {info} iterations", res)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = float(np.abs(Lff @ x - rhs).max())
    if res > RESIDUAL_TOL:
        raise SolverError("voltage solve missed the residual target", res)
    v = np.zeros(n)
    v[free] = x
    return VoltageSolution(v, res, source, method)


def expected_hitting_direct(graph: LrpGraph, source: int, target_mask: np.ndarray) -> np.ndarray:
    """h = 1 + P h off the target, P the simple walk; h = 0 on the target."""
    n = graph.n
    free = np.flatnonzero(~target_mask)
    A = graph.to_scipy()
    P = sp.diags(1.0 / graph.degree.astype(np.float64)) @ A
    M = sp.identity(len(free), format="csr") - P.tocsr()[free][:, free]
    if n <= 2 * DIRECT_MAX_N:
        h_free = np.linalg.solve(M.toarray(), np.ones(len(free)))
    else:
        h_free = spla.spsolve(M.tocsc(), np.ones(len(free)))
    h = np.zeros(n)
    h[free] = h_free
    return h


@dataclass
class Bottleneck:
    counts: list  # degree-2 vertices per block K_i
    side: str  # "right" (towards N) or "left" (towards B)
    sequence: list  # degree-2 vertices between ground and u, nearest ground first
    side_current: float


def degree2_bottleneck(graph: LrpGraph, split: RegionSplit, voltage: VoltageSolution | None = None) -> Bottleneck:
    deg2 = graph.degree == 2
    counts = [int(deg2[list(K)].sum()) if len(K) else 0 for K in split.K]
    if voltage is None:
        voltage = solve_voltages(graph, split.u, np.flatnonzero(split.ground_mask()))
    v, u, n = voltage.v, split.u, graph.n
    right = graph.multiplicity(u, (u + 1) % n) * (v[u] - v[(u + 1) % n])
    left = graph.multiplicity(u, u - 1) * (v[u] - v[u - 1])
    ground = split.ground_mask()
    if right >= left:
        side, current = "right", right
        span = [x for x in range(n - 1, u, -1) if not ground[x]]
    else:
        side, current = "left", left
        span = [x for x in range(split.C.start, u) if not ground[x]]
    seq = [x for x in span if deg2[x]]
    return Bottleneck(counts, side, seq, float(current))


@dataclass
class HittingReport:
    u: int
    expected_T_visits: float
    expected_T_direct: float
    degree2_counts: list
    pi_AB: float
    effective_resistance: float
    nominal_u: int
    bottleneck: Bottleneck = field(repr=False, default=None)

    @property
    def relative_gap(self) -> float:
        return abs(self.expected_T_visits - self.expected_T_direct) / self.expected_T_direct


def hitting_time(graph: LrpGraph, split: RegionSplit, method: str = "auto") -> HittingReport:
    """E_u[T] for the simple walk from u to A ∪ B, computed two ways."""
    ground = split.ground_mask()
    sol = solve_voltages(graph, split.u, np.flatnonzero(ground), method=method)
    deg = graph.degree.astype(np.float64)
    via_visits = float((sol.v * deg)[~ground].sum())
    via_system = float(expected_hitting_direct(graph, split.u, ground)[split.u])
    bott = degree2_bottleneck(graph, split, sol)
    return HittingReport(
        u=split.u,
        expected_T_visits=via_visits,
        expected_T_direct=via_system,
        degree2_counts=bott.counts,
        pi_AB=float(deg[ground].sum() / deg.sum()),
        effective_resistance=sol.effective_resistance,
        nominal_u=split.nominal_u,
        bottleneck=bott,
    )


@njit(cache=True)
def _simulate(indptr, indices, mult, degree, source, target, n_walks, lazy, max_steps, seed):
    np.random.seed(seed)
    n = len(degree)
    vsum = np.zeros(n)
    vsq = np.zeros(n)
    times = np.empty(n_walks, np.int64)
    counts = np.zeros(n, np.int64)
    touched = np.empty(n, np.int64)
    for w in range(n_walks):
        x = source
        t = 0
        ntouch = 0
        while not target[x] and t < max_steps:
            if counts[x] == 0:
                touched[ntouch] = x
                ntouch += 1
            counts[x] += 1
            t += 1
            if lazy and np.random.random() < 0.5:
                continue
            r = np.random.random() * degree[x]
            acc = 0.0
            nxt = indices[indptr[x + 1] - 1]
            for s in range(indptr[x], indptr[x + 1]):
                acc += mult[s]
                if r < acc:
                    nxt = indices[s]
                    break
            x = nxt
        times[w] = t if target[x] else -1
        for i in range(ntouch):
            c = counts[touched[i]]
            vsum[touched[i]] += c
            vsq[touched[i]] += c * c
            counts[touched[i]] = 0
    return vsum, vsq, times


@dataclass
class WalkSample:
    mean_visits: np.ndarray
    se_visits: np.ndarray
    mean_T: float
    se_T: float
    n_walks: int


def simulate_visits(graph: LrpGraph, source: int, target_mask, n_walks: int, seed: int = 0, lazy: bool = False, max_steps: int = 10**7) -> WalkSample:
    """Monte Carlo visit counts before hitting ``target_mask``."""
    target = np.asarray(target_mask, dtype=np.bool_)
    key = stream_key(seed, STREAM_WALKS) & 0x7FFFFFFF
    vsum, vsq, times = _simulate(
        graph.indptr, graph.indices, graph.mult, graph.degree.astype(np.float64),
        source, target, n_walks, lazy, max_steps, key,
    )
    if np.any(times < 0):
        raise RuntimeError("a simulated walk exceeded max_steps")
    mean = vsum / n_walks
    var = np.maximum(vsq / n_walks - mean**2, 0.0)
    return WalkSample(
        mean, np.sqrt(var / n_walks), float(times.mean()), float(times.std() / np.sqrt(n_walks)), n_walks,
    )

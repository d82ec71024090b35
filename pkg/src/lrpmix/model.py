"""Long-range percolation on the N-cycle: parameters, geometry and sampling.

The graph G_{s,beta}(N) is the cycle Z/NZ plus, for every unordered pair
{x, y} with x != y, an independent extra edge present with probability
``1 - exp(-beta * ||x - y||^-s)``.  Extra edges between cycle neighbours
coexist with the cycle edge, so the graph is a multigraph and
``deg(x) = 2 + sum_y Z_xy``.

Every Bernoulli draw is a pure function of ``(seed, min(x, y), max(x, y))``
through a counter-based hash, so single pairs can be re-queried without
resampling and the same parameters always give the same graph.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

MAX_VERTICES = 1 << 15

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# stream tags for independent uses of the same seed
STREAM_EDGES = 0
STREAM_COUPLING = 1
STREAM_WALKS = 2


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & _MASK64
    z = ((z ^ (z >> 27)) * _M2) & _MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int = STREAM_EDGES) -> int:
    """64-bit key for one (seed, stream) combination."""
    return _mix64((seed + (stream + 1) * _GOLDEN) & _MASK64)


def pair_uniform(seed: int, x: int, y: int, stream: int = STREAM_EDGES) -> float:
    """Uniform [0, 1) draw attached to the unordered pair {x, y}."""
    a, b = (x, y) if x <= y else (y, x)
    z = _mix64(stream_key(seed, stream) ^ ((a << 32) | b))
    return (z >> 11) * 2.0**-53


@njit(cache=True)
def _mix64_nb(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _uniform_nb(key, a, b):
    z = _mix64_nb(key ^ ((np.uint64(a) << np.uint64(32)) | np.uint64(b)))
    return float(z >> np.uint64(11)) * 1.1102230246251565e-16


@njit(cache=True)
def _sample_long_edges(n, key, mu, skip_adjacent, cap):
    out_a = np.empty(cap, np.int64)
    out_b = np.empty(cap, np.int64)
    cnt = 0
    half = n // 2
    for d in range(1, half + 1):
        if skip_adjacent and d == 1:
            continue
        m = mu[d]
        if m <= 0.0:
            continue
        xmax = half if 2 * d == n else n
        for x in range(xmax):
            y = x + d
            if y >= n:
                y -= n
            a = min(x, y)
            b = max(x, y)
            if _uniform_nb(key, a, b) < m:
                if cnt < cap:
                    out_a[cnt] = a
                    out_b[cnt] = b
                cnt += 1
    return out_a, out_b, cnt


@dataclass(frozen=True)
class ModelParams:
    n: int
    s: float
    beta: float
    seed: int = 0
    simple: bool = False  # drop extra edges parallel to cycle edges

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")
        if not self.s > 0:
            raise ValueError(f"s must be positive, got {self.s}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True, eq=False)
class LrpGraph:
    """Immutable multigraph in CSR form.

    ``indices[indptr[x]:indptr[x+1]]`` are the sorted neighbours of x and
    ``mult`` the matching edge multiplicities.  ``edges`` holds each
    unordered edge once as rows ``(x, y, m)`` with x < y, sorted.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    mult: np.ndarray
    edges: np.ndarray
    params: ModelParams | None = None
    degree: np.ndarray = field(init=False)

    def __post_init__(self):
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        deg = np.bincount(rows, weights=self.mult, minlength=self.n).astype(np.int64)
        object.__setattr__(self, "degree", deg)
        for arr in (self.indptr, self.indices, self.mult, self.edges, deg):
            arr.setflags(write=False)

    @property
    def oriented_edge_count(self) -> int:
        """|E(G)|: oriented edges counted with multiplicity, i.e. sum of degrees."""
        return int(self.degree.sum())

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def neighbors(self, x: int) -> list[tuple[int, int]]:
        lo, hi = self.indptr[x], self.indptr[x + 1]
        return list(zip(self.indices[lo:hi].tolist(), self.mult[lo:hi].tolist()))

    def multiplicity(self, x: int, y: int) -> int:
        lo, hi = self.indptr[x], self.indptr[x + 1]
        pos = lo + np.searchsorted(self.indices[lo:hi], y)
        if pos < hi and self.indices[pos] == y:
            return int(self.mult[pos])
        return 0

    def long_range_edges(self) -> np.ndarray:
        """Rows (x, y, extra multiplicity) beyond the cycle skeleton."""
        x, y, m = self.edges.T
        on_cycle = (y - x == 1) | ((x == 0) & (y == self.n - 1))
        extra = m - on_cycle.astype(np.int64)
        keep = extra > 0
        return np.column_stack([x[keep], y[keep], extra[keep]])

    def to_scipy(self):
        """Symmetric adjacency with multiplicities as a scipy CSR matrix."""
        from scipy.sparse import csr_matrix

        return csr_matrix(
            (self.mult.astype(np.float64), self.indices, self.indptr),
            shape=(self.n, self.n),
        )


def cyclic_distance(x: int, y: int, n: int) -> int:
    d = abs(x - y)
    return min(d, n - d)


def edge_probability(x: int, y: int, params: ModelParams) -> float:
    if x == y:
        raise ValueError("edge probability is undefined for x == y")
    d = cyclic_distance(x, y, params.n)
    return -math.expm1(-params.beta * d ** (-params.s))


def distance_probabilities(params: ModelParams) -> np.ndarray:
    """mu[d] = 1 - exp(-beta d^-s) for d = 0..n//2 (mu[0] unused, set to 0)."""
    d = np.arange(params.n // 2 + 1, dtype=np.float64)
    mu = np.zeros_like(d)
    mu[1:] = -np.expm1(-params.beta * d[1:] ** (-params.s))
    return mu


def expected_long_degree(params: ModelParams) -> float:
    """sum_{y != x} mu_xy; independent of x by rotation symmetry."""
    n = params.n
    mu = distance_probabilities(params)
    half = n // 2
    total = 2.0 * mu[1:half].sum() if half > 1 else 0.0
    total += mu[half] if n % 2 == 0 else 2.0 * mu[half]
    if params.simple:
        total -= 2.0 * mu[1]
    return float(total)


def degree2_probability(params: ModelParams) -> float:
    """Probability that a fixed vertex receives no extra edge."""
    n = params.n
    d = np.array([cyclic_distance(0, y, n) for y in range(1, n)], dtype=np.float64)
    rate = params.beta * d ** (-params.s)
    if params.simple:
        rate = rate[d > 1]
    return float(np.exp(-rate.sum()))


def from_edges(n: int, edges, params: ModelParams | None = None, include_cycle: bool = True) -> LrpGraph:
    """Build a graph from unordered edges ``(x, y)`` or ``(x, y, m)``.

    Repeated pairs add up.  With ``include_cycle`` the n cycle edges are added.
    """
    rows = [tuple(e) for e in edges]
    xs, ys, ms = [], [], []
    for e in rows:
        x, y = int(e[0]), int(e[1])
        if x == y:
            raise ValueError(f"self-loop at {x}")
        if not (0 <= x < n and 0 <= y < n):
            raise ValueError(f"edge {(x, y)} out of range for n={n}")
        xs.append(min(x, y))
        ys.append(max(x, y))
        ms.append(int(e[2]) if len(e) > 2 else 1)
    if include_cycle:
        for x in range(n):
            y = (x + 1) % n
            xs.append(min(x, y))
            ys.append(max(x, y))
            ms.append(1)
    return _assemble(n, np.asarray(xs, np.int64), np.asarray(ys, np.int64), np.asarray(ms, np.int64), params)


def _assemble(n, a, b, m, params):
    keys = a * n + b
    uniq, inv = np.unique(keys, return_inverse=True)
    mult = np.bincount(inv, weights=m).astype(np.int64)
    keep = mult > 0
    uniq, mult = uniq[keep], mult[keep]
    ea, eb = uniq // n, uniq % n
    edges = np.column_stack([ea, eb, mult]).astype(np.int64)

    rows = np.concatenate([ea, eb])
    cols = np.concatenate([eb, ea])
    vals = np.concatenate([mult, mult])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return LrpGraph(n=n, indptr=indptr, indices=cols.astype(np.int64), mult=vals.astype(np.int64), edges=edges, params=params)


def sample_graph(params: ModelParams, max_n: int = MAX_VERTICES) -> LrpGraph:
    """Sample G_{s,beta}(n) by scanning every unordered pair once."""
    n = params.n
    if n > max_n:
        raise ValueError(f"n={n} exceeds the configured maximum {max_n}")
    mu = distance_probabilities(params)
    key = np.uint64(stream_key(params.seed, STREAM_EDGES))
    cap = int(2 * n * (expected_long_degree(params) + 1)) + 64
    la, lb, cnt = _sample_long_edges(n, key, mu, params.simple, cap)
    if cnt > cap:
        la, lb, cnt = _sample_long_edges(n, key, mu, params.simple, cnt)
    la, lb = la[:cnt], lb[:cnt]
    cyc = np.arange(n, dtype=np.int64)
    nxt = (cyc + 1) % n
    a = np.concatenate([np.minimum(cyc, nxt), la])
    b = np.concatenate([np.maximum(cyc, nxt), lb])
    return _assemble(n, a, b, np.ones(len(a), np.int64), params)


def degree2_vertices(graph: LrpGraph) -> np.ndarray:
    return np.flatnonzero(graph.degree == 2)


def dumps(graph: LrpGraph) -> str:
    """Line format: ``lrp N S BETA SEED`` then ``x y m`` per unordered edge."""
    p = graph.params
    if p is None:
        header = f"lrp {graph.n} nan nan 0"
    else:
        header = f"lrp {p.n} {p.s!r} {p.beta!r} {p.seed}" + (" simple" if p.simple else "")
    lines = [header]
    lines.extend(f"{x} {y} {m}" for x, y, m in graph.edges.tolist())
    return "\n".join(lines) + "\n"


def loads(text: str) -> LrpGraph:
    lines = text.strip().splitlines()
    head = lines[0].split()
    if head[0] != "lrp" or len(head) not in (5, 6):
        raise ValueError(f"bad header: {lines[0]!r}")
    n = int(head[1])
    s, beta = float(head[2]), float(head[3])
    params = None
    if not (math.isnan(s) or math.isnan(beta)):
        params = ModelParams(n=n, s=s, beta=beta, seed=int(head[4]), simple=len(head) == 6)
    rows = [tuple(int(t) for t in ln.split()) for ln in lines[1:] if ln.strip()]
    if not rows:
        raise ValueError("graph has no edges")
    arr = np.asarray(rows, np.int64)
    return _assemble(n, arr[:, 0], arr[:, 1], arr[:, 2], params)


def save(graph: LrpGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(graph))


def load(path) -> LrpGraph:
    with open(path) as fh:
        return loads(fh.read())

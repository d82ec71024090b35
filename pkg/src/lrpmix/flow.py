"""Multicommodity flow built from an interval partition of the cycle.

Pipeline: cut the cycle into k intervals of length L (the last one absorbs
the remainder), contract each interval to a vertex (graph Gamma), couple an
Erdos-Renyi graph Gamma' inside Gamma, route every interval pair along a
canonical shortest path of Gamma', and expand each hop with a fixed witness
edge and interval geodesics.  Every ordered pair (x, y) sends pi(x) pi(y)
along exactly one path, so the flow is valid by construction; edge loads
``f(e) = sum_{p ∋ e} f(p) |p|`` are streamed commodity by commodity.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.sparse.csgraph import shortest_path

from .chain import ChainView
from .model import LrpGraph, ModelParams, STREAM_COUPLING, stream_key

DEFAULT_ALPHA = 4.0


class PartitionError(ValueError):
    pass


class CouplingError(ValueError):
    def __init__(self, offenders, p):
        self.offenders = offenders
        self.p = p
        shown = ", ".join(f"({i},{j}) q={q:.4g}" for i, j, q in offenders[:10])
        more = f" and {len(offenders) - 10} more" if len(offenders) > 10 else ""
        super().__init__(f"ER probability p={p:.4g} exceeds q for {shown}{more}")


@dataclass(frozen=True)
class IntervalPartition:
    n: int
    L: int
    alpha: float
    xi: float
    k: int
    ell: int
    bounds: tuple  # k + 1 cut points, S_j = [bounds[j], bounds[j+1])
    asymptotic_ok: bool  # 2^s beta L^2 <= N^s

    @property
    def intervals(self) -> list[range]:
        return [range(self.bounds[j], self.bounds[j + 1]) for j in range(self.k)]

    def sizes(self) -> np.ndarray:
        return np.diff(np.asarray(self.bounds))

    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.k), self.sizes())


def make_partition(params: ModelParams, alpha: float = DEFAULT_ALPHA) -> IntervalPartition:
    """L = ceil(N^(s-1) xi(N)) with xi(N) = alpha log N / (2^s beta)."""
    n, s, beta = params.n, params.s, params.beta
    if not 1 < s < 2:
        raise PartitionError(f"interval partition needs 1 < s < 2, got s={s}")
    if beta <= 0 or alpha <= 0:
        raise PartitionError("beta and alpha must be positive")
    xi = alpha * math.log(n) / (2.0**s * beta)
    L = math.ceil(n ** (s - 1) * xi)
    ell = n % L
    k = (n - ell) // L
    if k < 2:
        raise PartitionError(f"N={n} too small for alpha={alpha}: L={L} leaves k={k} < 2 intervals")
    bounds = tuple(j * L for j in range(k)) + (n,)
    ok = 2.0**s * beta * L * L <= n**s
    return IntervalPartition(n, L, alpha, xi, k, ell, bounds, ok)


@dataclass
class ContractedGraph:
    k: int
    edges: set  # unordered (i, j), i < j
    witness: dict  # ordered (i, j) -> G-edge (x, y), x in S_i, y in S_j

    def neighbors(self, i):
        return sorted({b for a, b in self.witness if a == i})


def contract(graph: LrpGraph, part: IntervalPartition) -> ContractedGraph:
    """Gamma, with the lexicographically smallest crossing edge as witness."""
    if graph.n != part.n:
        raise ValueError("partition does not match graph size")
    lab = part.labels()
    edges, witness = set(), {}
    for x, y, _ in graph.edges.tolist():  # sorted, x < y
        i, j = int(lab[x]), int(lab[y])
        if i != j and (i, j) not in witness:
            edges.add((i, j))
            witness[(i, j)] = (x, y)
            witness[(j, i)] = (y, x)
    return ContractedGraph(part.k, edges, witness)


def crossing_probabilities(part: IntervalPartition, params: ModelParams) -> np.ndarray:
    """q[i, j] = Pr[(i, j) in Gamma].

    Cyclically adjacent intervals are always joined by a cycle edge (q = 1);
    otherwise q = 1 - exp(-beta * sum_{x in S_i, y in S_j} ||x - y||^-s).
    """
    n, k = part.n, part.k
    r = np.arange(n)
    dist = np.minimum(r, n - r).astype(np.float64)
    w = np.zeros(n)
    w[1:] = dist[1:] ** (-params.s)
    cum = np.concatenate([[0.0], np.cumsum(np.concatenate([w, w]))])
    q = np.zeros((k, k))
    for i in range(k):
        xs = np.arange(part.bounds[i], part.bounds[i + 1])
        for j in range(i + 1, k):
            a, b = part.bounds[j], part.bounds[j + 1]
            off = (a - xs) % n
            lam = float((cum[off + (b - a)] - cum[off]).sum())
            adjacent = j == i + 1 or (i == 0 and j == k - 1)
            q[i, j] = q[j, i] = 1.0 if adjacent else -math.expm1(-params.beta * lam)
    return q


def er_probability(alpha: float, k: int) -> float:
    return alpha / (2.0 * math.e) * math.log(k) / k


@dataclass
class ErCoupling:
    p: float
    edges: set
    q: np.ndarray

    def max_degree(self, k: int) -> int:
        deg = np.zeros(k, np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return int(deg.max()) if k else 0


def coupling_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(stream_key(seed, STREAM_COUPLING))


def couple_er(gamma: ContractedGraph, q: np.ndarray, p: float, rng) -> ErCoupling:
    """Keep each Gamma edge (i, j) with probability p / q[i, j].

    Since Pr[(i, j) in Gamma] = q[i, j] independently over pairs, each pair
    lands in Gamma' with probability exactly p, independently, and Gamma'
    is a subgraph of Gamma on every sample.
    """
    if not isinstance(rng, np.random.Generator):
        rng = coupling_rng(int(rng))
    k = gamma.k
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    bad = [(i, j, float(q[i, j])) for i, j in pairs if p > q[i, j]]
    if bad:
        raise CouplingError(bad, p)
    u = rng.random(len(pairs))
    kept = set()
    for (i, j), ui in zip(pairs, u):
        if (i, j) in gamma.edges and ui * q[i, j] < p:
            kept.add((i, j))
    return ErCoupling(p, kept, q)


@dataclass
class GeodesicTable:
    """All-pairs BFS inside each interval.

    For interval j with local indices a, b: ``dist[j][b, a]`` is the
    distance and ``nxt[j][b, a]`` the local vertex after a on p(a, b).
    """

    bounds: tuple
    dist: list
    nxt: list
    diam: list
    Delta: int


def geodesics(graph: LrpGraph, part: IntervalPartition) -> GeodesicTable:
    A = graph.to_scipy()
    dists, nxts, diams = [], [], []
    for j in range(part.k):
        lo, hi = part.bounds[j], part.bounds[j + 1]
        sub = A[lo:hi, lo:hi]
        d, pred = shortest_path(sub, method="D", directed=False, unweighted=True, return_predecessors=True)
        if not np.all(np.isfinite(d)):
            raise RuntimeError(f"interval {j} is not connected")
        dists.append(d.astype(np.int32))
        nxts.append(pred.astype(np.int32))
        diams.append(int(d.max()))
    return GeodesicTable(part.bounds, dists, nxts, diams, max(diams))


def interval_path(table: GeodesicTable, j: int, x: int, y: int) -> list[int]:
    """Vertices of p(x, y) inside interval j; [x] when x == y."""
    lo = table.bounds[j]
    nxt = table.nxt[j]
    path = [x]
    while x != y:
        x = lo + int(nxt[y - lo, x - lo])
        path.append(x)
    return path


def route_table(k: int, edges) -> dict | None:
    """Canonical BFS shortest paths between all ordered interval pairs.

    Neighbours are scanned in increasing index order, so ties go to the
    lowest index.  Returns None when the graph on {0..k-1} is disconnected.
    """
    adj = [[] for _ in range(k)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    for nb in adj:
        nb.sort()
    routes = {}
    for src in range(k):
        parent = {src: None}
        dq = deque([src])
        while dq:
            u = dq.popleft()
            for v in adj[u]:
                if v not in parent:
                    parent[v] = u
                    dq.append(v)
        if len(parent) < k:
            return None
        for dst in range(k):
            if dst == src:
                continue
            hops = [dst]
            while hops[-1] != src:
                hops.append(parent[hops[-1]])
            routes[(src, dst)] = hops[::-1]
    return routes


@njit(cache=True)
def _edge_slot(indptr, indices, a, b):
    lo = indptr[a]
    hi = indptr[a + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if indices[mid] < b:
            lo = mid + 1
        else:
            hi = mid
    if lo < indptr[a + 1] and indices[lo] == b:
        return lo
    return -1


@njit(cache=True)
def _geo_dist(label, istart, isize, goff, gdist, a, b):
    j = label[a]
    s0 = istart[j]
    return gdist[goff[j] + (b - s0) * isize[j] + (a - s0)]


@njit(cache=True)
def _walk(label, istart, isize, goff, gnext, indptr, indices, a, b, wl, loads):
    j = label[a]
    s0 = istart[j]
    sz = isize[j]
    off = goff[j]
    bad = 0
    while a != b:
        nx = s0 + gnext[off + (b - s0) * sz + (a - s0)]
        slot = _edge_slot(indptr, indices, a, nx)
        if slot < 0:
            bad += 1
        else:
            loads[slot] += wl
        a = nx
    return bad


@njit(cache=True)
def _stream_loads(n, k, pi, indptr, indices, label, istart, isize, goff, gnext, gdist, rptr, ra, rb):
    loads = np.zeros(len(indices))
    maxlen = 0
    bad = 0
    for x in range(n):
        i = label[x]
        for y in range(n):
            if x == y:
                continue
            j = label[y]
            r0 = rptr[i * k + j]
            r1 = rptr[i * k + j + 1]
            length = 0
            cur = x
            for r in range(r0, r1):
                length += _geo_dist(label, istart, isize, goff, gdist, cur, ra[r]) + 1
                cur = rb[r]
            length += _geo_dist(label, istart, isize, goff, gdist, cur, y)
            if length > maxlen:
                maxlen = length
            wl = pi[x] * pi[y] * length
            cur = x
            for r in range(r0, r1):
                bad += _walk(label, istart, isize, goff, gnext, indptr, indices, cur, ra[r], wl, loads)
                slot = _edge_slot(indptr, indices, ra[r], rb[r])
                if slot < 0:
                    bad += 1
                else:
                    loads[slot] += wl
                cur = rb[r]
            bad += _walk(label, istart, isize, goff, gnext, indptr, indices, cur, y, wl, loads)
    return loads, maxlen, bad


@dataclass
class FlowPlan:
    graph: LrpGraph
    part: IntervalPartition
    geo: GeodesicTable
    witness: dict
    routes: dict  # ordered interval pair -> list of interval hops
    route_edges: set  # interval graph actually used for routing
    degraded: bool  # Gamma' disconnected, routed in Gamma instead
    gamma_prime_max_deg: int
    stationary: np.ndarray
    edge_loads: np.ndarray = field(default=None, repr=False)  # aligned with graph.indices
    max_path_len: int = 0

    def weight(self, x: int, y: int) -> float:
        return 0.0 if x == y else float(self.stationary[x] * self.stationary[y])

    def hop_count(self, i: int, j: int) -> int:
        return 0 if i == j else len(self.routes[(i, j)]) - 1


def route(plan: FlowPlan, x: int, y: int) -> list[int]:
    """Vertex sequence of the single path carrying commodity (x, y)."""
    lab = plan.part.labels()
    i, j = int(lab[x]), int(lab[y])
    if i == j:
        return interval_path(plan.geo, i, x, y)
    hops = plan.routes[(i, j)]
    path = [x]
    cur = x
    for a_int, b_int in zip(hops[:-1], hops[1:]):
        a, b = plan.witness[(a_int, b_int)]
        path.extend(interval_path(plan.geo, a_int, cur, a)[1:])
        path.append(b)
        cur = b
    path.extend(interval_path(plan.geo, j, cur, y)[1:])
    return path


def build_flow(graph: LrpGraph, part: IntervalPartition, gamma: ContractedGraph, coupling: ErCoupling, geo: GeodesicTable) -> FlowPlan:
    routes = route_table(part.k, coupling.edges)
    degraded = routes is None
    used = set(coupling.edges)
    if degraded:
        used = set(gamma.edges)
        routes = route_table(part.k, used)
    pi = ChainView(graph).stationary
    plan = FlowPlan(
        graph=graph,
        part=part,
        geo=geo,
        witness=gamma.witness,
        routes=routes,
        route_edges=used,
        degraded=degraded,
        gamma_prime_max_deg=coupling.max_degree(part.k),
        stationary=pi,
    )
    plan.edge_loads, plan.max_path_len = stream_edge_loads(plan)
    return plan


def _flatten(plan: FlowPlan):
    k = plan.part.k
    sizes = plan.part.sizes()
    goff = np.zeros(k, np.int64)
    goff[1:] = np.cumsum(sizes.astype(np.int64) ** 2)[:-1]
    gdist = np.concatenate([d.ravel() for d in plan.geo.dist]).astype(np.int64)
    gnext = np.concatenate([p.ravel() for p in plan.geo.nxt]).astype(np.int64)
    rptr = np.zeros(k * k + 1, np.int64)
    ra, rb = [], []
    for i in range(k):
        for j in range(k):
            if i != j:
                hops = plan.routes[(i, j)]
                for u, v in zip(hops[:-1], hops[1:]):
                    a, b = plan.witness[(u, v)]
                    ra.append(a)
                    rb.append(b)
            rptr[i * k + j + 1] = len(ra)
    istart = np.asarray(plan.part.bounds[:-1], np.int64)
    return (
        plan.part.labels().astype(np.int64), istart, sizes.astype(np.int64), goff, gnext, gdist,
        rptr, np.asarray(ra, np.int64), np.asarray(rb, np.int64),
    )


def stream_edge_loads(plan: FlowPlan):
    """Loads on every oriented edge (CSR slot) and the longest routed path."""
    g = plan.graph
    label, istart, isize, goff, gnext, gdist, rptr, ra, rb = _flatten(plan)
    loads, maxlen, bad = _stream_loads(
        g.n, plan.part.k, plan.stationary, g.indptr, g.indices,
        label, istart, isize, goff, gnext, gdist, rptr, ra, rb,
    )
    if bad:
        raise RuntimeError(f"{bad} routed steps use pairs that are not edges of G")
    return loads, int(maxlen)


def reference_edge_loads(plan: FlowPlan) -> dict:
    """Loads keyed by oriented edge, recomputed path by path in pure Python."""
    loads = {}
    n = plan.graph.n
    for x in range(n):
        for y in range(n):
            if x == y:
                continue
            path = route(plan, x, y)
            wl = plan.weight(x, y) * (len(path) - 1)
            for a, b in zip(path[:-1], path[1:]):
                loads[(a, b)] = loads.get((a, b), 0.0) + wl
    return loads


def loads_by_edge(plan: FlowPlan) -> dict:
    g = plan.graph
    out = {}
    for a in range(g.n):
        for slot in range(g.indptr[a], g.indptr[a + 1]):
            if plan.edge_loads[slot] != 0.0:
                out[(a, int(g.indices[slot]))] = float(plan.edge_loads[slot])
    return out


@dataclass
class FlowCheck:
    max_weight_error: float
    max_path_len: int
    length_bound_violations: int
    illegal_paths: int

    @property
    def ok(self) -> bool:
        return self.length_bound_violations == 0 and self.illegal_paths == 0


def check_flow(plan: FlowPlan) -> FlowCheck:
    """Exhaustive audit: per-pair routed weight, path legality, length bound."""
    g = plan.graph
    n = g.n
    lab = plan.part.labels()
    Delta = plan.geo.Delta
    routed = np.zeros((n, n))
    worst_len, over, illegal = 0, 0, 0
    for x in range(n):
        for y in range(n):
            if x == y:
                continue
            path = route(plan, x, y)
            if path[0] != x or path[-1] != y or len(set(path)) != len(path):
                illegal += 1
            if any(g.multiplicity(a, b) == 0 for a, b in zip(path[:-1], path[1:])):
                illegal += 1
            routed[x, y] += plan.weight(x, y)
            hops = plan.hop_count(int(lab[x]), int(lab[y]))
            length = len(path) - 1
            worst_len = max(worst_len, length)
            if length > (Delta + 1) * hops + Delta:
                over += 1
    target = np.outer(plan.stationary, plan.stationary)
    np.fill_diagonal(target, 0.0)
    return FlowCheck(float(np.abs(routed - target).max()), worst_len, over, illegal)


def congestion(plan: FlowPlan, chain: ChainView) -> float:
    """rho(f) = max_(a,b) f(a, b) / (pi(a) P(a, b)), with pi(a) P(a, b) = m / (2|E|).

    |E| counts oriented edges (the sum of degrees), as in pi(x) = deg(x) / |E|.
    """
    if plan.edge_loads is None:
        raise ValueError("edge loads have not been computed")
    g = chain.graph
    capacity = g.mult / (2.0 * g.oriented_edge_count)
    return float((plan.edge_loads / capacity).max())


@dataclass
class FlowDiagnostics:
    rho: float
    delta_max: int
    max_degree: int
    L: int
    k: int
    n_pow: float  # N^(s-1)
    gamma_prime_max_deg: int
    degraded: bool
    asymptotic_ok: bool
    max_path_len: int


def flow_mixing_bound(plan: FlowPlan, chain: ChainView, rho: float | None = None) -> FlowDiagnostics:
    """Collect what a ρ(f) ~ N^(s-1) polylog regression needs; asserts nothing."""
    rho = congestion(plan, chain) if rho is None else rho
    p = plan.graph.params
    n_pow = float(plan.graph.n ** (p.s - 1)) if p is not None else math.nan
    return FlowDiagnostics(
        rho=rho,
        delta_max=plan.geo.Delta,
        max_degree=int(plan.graph.degree.max()),
        L=plan.part.L,
        k=plan.part.k,
        n_pow=n_pow,
        gamma_prime_max_deg=plan.gamma_prime_max_deg,
        degraded=plan.degraded,
        asymptotic_ok=plan.part.asymptotic_ok,
        max_path_len=plan.max_path_len,
    )


def flow_pipeline(graph: LrpGraph, alpha: float = DEFAULT_ALPHA, rng=None) -> FlowPlan:
    """Partition, contract, couple, take geodesics and build the flow."""
    params = graph.params
    part = make_partition(params, alpha)
    gamma = contract(graph, part)
    q = crossing_probabilities(part, params)
    rng = params.seed if rng is None else rng
    coupling = couple_er(gamma, q, er_probability(alpha, part.k), rng)
    return build_flow(graph, part, gamma, coupling, geodesics(graph, part))

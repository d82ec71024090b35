"""Lazy random walk on a graph and exact total-variation mixing times.

The walk holds with probability 1/2 and otherwise crosses an incident edge
chosen with probability proportional to its multiplicity, so
``P(x, y) = m(x, y) / (2 deg x)`` and ``pi(x) = deg(x) / |E|``.

Mixing times are computed from the exact time-t laws, never from sampled
trajectories.  Two routes give the same numbers:

* ``iterate``: repeated sparse steps, cost O(tau * (N + edges)) per start;
* ``doubling``: dense powers P^(2^k) and per-start binary lifting, which
  relies on TV distance to stationarity being non-increasing in t.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import LrpGraph

DEFAULT_EPS = 0.25
ALL_STARTS_MAX_N = 1024
DOUBLING_MAX_N = 1024


@dataclass(frozen=True, eq=False)
class ChainView:
    graph: LrpGraph
    stationary: np.ndarray = field(init=False)
    adjacency: object = field(init=False, repr=False)

    def __post_init__(self):
        deg = self.graph.degree.astype(np.float64)
        if np.any(deg <= 0):
            raise ValueError("lazy walk needs every vertex to have an edge")
        object.__setattr__(self, "stationary", deg / deg.sum())
        object.__setattr__(self, "adjacency", self.graph.to_scipy())

    @property
    def n(self) -> int:
        return self.graph.n

    def dense_matrix(self) -> np.ndarray:
        """Full transition matrix; for oracles and small graphs only."""
        deg = self.graph.degree.astype(np.float64)
        P = self.adjacency.toarray() / (2.0 * deg[:, None])
        P[np.diag_indices(self.n)] += 0.5
        return P


@dataclass
class MixingEstimate:
    tau: int
    per_start: dict[int, int]
    truncated: bool
    eps: float = DEFAULT_EPS
    t_max: int = 0
    method: str = "iterate"

    @property
    def starts(self) -> list[int]:
        return sorted(self.per_start)


def transition_prob(chain: ChainView, x: int, y: int) -> float:
    g = chain.graph
    p = g.multiplicity(x, y) / (2.0 * g.degree[x])
    if x == y:
        p += 0.5
    return p


def point_mass(n: int, x: int) -> np.ndarray:
    d = np.zeros(n)
    d[x] = 1.0
    return d


def step(chain: ChainView, d: np.ndarray) -> np.ndarray:
    """Return d P.  ``d`` may also be an (N, m) array of column distributions."""
    deg = chain.graph.degree
    scaled = d / (deg if d.ndim == 1 else deg[:, None])
    return 0.5 * (d + chain.adjacency @ scaled)


def tv_distance(d: np.ndarray, chain: ChainView) -> float | np.ndarray:
    pi = chain.stationary
    if d.ndim == 1:
        return 0.5 * float(np.abs(d - pi).sum())
    return 0.5 * np.abs(d - pi[:, None]).sum(axis=0)


def default_t_max(n: int) -> int:
    return 64 * n * n


def default_starts(graph: LrpGraph) -> list[int]:
    """All vertices up to ALL_STARTS_MAX_N, else 16 evenly spaced plus the
    max- and min-degree vertices."""
    n = graph.n
    if n <= ALL_STARTS_MAX_N:
        return list(range(n))
    picks = {(i * n) // 16 for i in range(16)}
    picks.add(int(np.argmax(graph.degree)))
    picks.add(int(np.argmin(graph.degree)))
    return sorted(picks)


def tau_from(chain: ChainView, x: int, eps: float = DEFAULT_EPS, t_max: int | None = None) -> tuple[int, bool]:
    """First t with Delta_x(t) <= eps, by sparse iteration.

    Returns ``(t, truncated)``; when the cap is hit, ``(t_max, True)``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    t_max = default_t_max(chain.n) if t_max is None else t_max
    d = point_mass(chain.n, x)
    for t in range(t_max + 1):
        if tv_distance(d, chain) <= eps:
            return t, False
        if t < t_max:
            d = step(chain, d)
    return t_max, True


def _taus_iterate(chain, starts, eps, t_max):
    n = chain.n
    cols = np.asarray(starts)
    D = np.zeros((n, len(cols)))
    D[cols, np.arange(len(cols))] = 1.0
    taus = np.full(len(cols), -1, dtype=np.int64)
    active = np.arange(len(cols))
    for t in range(t_max + 1):
        done = tv_distance(D, chain) <= eps
        if done.any():
            taus[active[done]] = t
            active = active[~done]
            D = D[:, ~done]
            if not len(active):
                break
        if t < t_max:
            D = step(chain, D)
    return taus


def _tv_rows(M, pi):
    return 0.5 * np.abs(M - pi[None, :]).sum(axis=1)


def _taus_doubling(chain, starts, eps, t_max):
    pi = chain.stationary
    P = chain.dense_matrix()
    rows = np.asarray(starts)
    m = len(rows)

    cur = np.zeros((m, chain.n))
    cur[np.arange(m), rows] = 1.0
    above0 = _tv_rows(cur, pi) > eps

    # powers P^(2^k) until every start is mixed or the cap is covered
    powers = [P]
    while True:
        span = 1 << (len(powers) - 1)
        if span >= t_max or not np.any(_tv_rows(powers[-1][rows], pi) > eps):
            break
        powers.append(powers[-1] @ powers[-1])

    t = np.zeros(m, dtype=np.int64)
    alive = above0.copy()
    for k in range(len(powers) - 1, -1, -1):
        jump = 1 << k
        cand = cur @ powers[k]
        ok = alive & (t + jump <= t_max) & (_tv_rows(cand, pi) > eps)
        cur[ok] = cand[ok]
        t[ok] += jump
    # t is now the last time still above eps (where alive)
    return np.where(above0, np.where(t >= t_max, -1, t + 1), 0)


def mixing_time(
    chain: ChainView,
    starts=None,
    t_max: int | None = None,
    eps: float = DEFAULT_EPS,
    method: str = "auto",
) -> MixingEstimate:
    """max over ``starts`` of tau_x(eps); with all starts this is tau(G)."""
    starts = default_starts(chain.graph) if starts is None else sorted(set(int(x) for x in starts))
    if not starts:
        raise ValueError("starts must be non-empty")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    t_max = default_t_max(chain.n) if t_max is None else int(t_max)
    if method == "auto":
        method = "doubling" if chain.n <= DOUBLING_MAX_N and len(starts) > 32 else "iterate"
    if method == "iterate":
        taus = _taus_iterate(chain, starts, eps, t_max)
    elif method == "doubling":
        taus = _taus_doubling(chain, starts, eps, t_max)
    else:
        raise ValueError(f"unknown method {method!r}")
    truncated = bool(np.any(taus < 0))
    per_start = {x: (t_max if t < 0 else int(t)) for x, t in zip(starts, taus.tolist())}
    return MixingEstimate(
        tau=max(per_start.values()),
        per_start=per_start,
        truncated=truncated,
        eps=eps,
        t_max=t_max,
        method=method,
    )


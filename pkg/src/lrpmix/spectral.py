"""Second eigenvalue of the lazy walk and the log(4|E|)/gap mixing bound.

Everything works on the symmetric matrix ``S = D^{1/2} P D^{-1/2}``, which
has the same spectrum as P and the known top eigenvector ``sqrt(pi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainView
from .model import LrpGraph

DENSE_MAX_N = 512
DEFAULT_TOL = 1e-8


class SpectralError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class SpectralResult:
    lambda2: float
    gap: float
    ds_bound: float
    tol: float
    method: str
    iterations: int = 0
    lambda_min: float | None = None


def _sym_operator(chain: ChainView):
    r = 1.0 / np.sqrt(chain.graph.degree.astype(np.float64))
    A = chain.adjacency

    def apply(V):
        if V.ndim == 1:
            return 0.5 * V + 0.5 * r * (A @ (r * V))
        return 0.5 * V + 0.5 * r[:, None] * (A @ (r[:, None] * V))

    return apply


def symmetrized_dense(chain: ChainView) -> np.ndarray:
    r = 1.0 / np.sqrt(chain.graph.degree.astype(np.float64))
    S = 0.5 * r[:, None] * chain.adjacency.toarray() * r[None, :]
    S[np.diag_indices(chain.n)] += 0.5
    return S


def dense_spectrum(chain: ChainView) -> np.ndarray:
    """All eigenvalues of P in decreasing order."""
    return np.linalg.eigvalsh(symmetrized_dense(chain))[::-1]


def power_second_eigenvalue(chain: ChainView, tol: float = DEFAULT_TOL, max_iter: int | None = None, block: int = 8):
    """Block power iteration deflated against sqrt(pi).

    Returns ``(theta, residual, iterations)``.  ``residual`` is the norm of
    ``S v - theta v`` for the unit Ritz vector v, so some eigenvalue of P
    lies within it of ``theta``.
    """
    n = chain.n
    apply = _sym_operator(chain)
    top = np.sqrt(chain.stationary)
    b = max(1, min(block, n - 1))
    if max_iter is None:
        max_iter = max(100, int(10 * n * math.log(n)))

    rng = np.random.default_rng(0)
    V = rng.standard_normal((n, b))
    V -= np.outer(top, top @ V)
    V, _ = np.linalg.qr(V)
    theta, res = 0.0, np.inf
    for it in range(1, max_iter + 1):
        W = apply(V)
        # Rayleigh-Ritz on the current block
        H = V.T @ W
        vals, vecs = np.linalg.eigh(0.5 * (H + H.T))
        v = V @ vecs[:, -1]
        theta = float(vals[-1])
        res = float(np.linalg.norm(W @ vecs[:, -1] - theta * v))
        if res <= tol:
            return theta, res, it
        W -= np.outer(top, top @ W)
        V, _ = np.linalg.qr(W)
    raise SpectralError(f"power iteration did not converge in {max_iter} iterations", res)


def second_eigenvalue(chain: ChainView, tol: float = DEFAULT_TOL, method: str = "auto") -> SpectralResult:
    if method == "auto":
        method = "dense" if chain.n <= DENSE_MAX_N else "power"
    lam_min = None
    iters = 0
    if method == "dense":
        ev = dense_spectrum(chain)
        lam2 = float(ev[1])
        lam_min = float(ev[-1])
        achieved = max(1e-12, 1e-15 * chain.n)
    elif method == "power":
        lam2, achieved, iters = power_second_eigenvalue(chain, tol=tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    gap = 1.0 - lam2
    bound = ds_mixing_bound_raw(gap, chain.graph.oriented_edge_count) if gap > achieved else math.inf
    return SpectralResult(lam2, gap, bound, achieved, method, iters, lam_min)


def ds_mixing_bound_raw(gap: float, n_oriented_edges: int) -> float:
    return math.log(4 * n_oriented_edges) / gap


def ds_mixing_bound(result: SpectralResult, graph: LrpGraph) -> float:
    """Upper bound log(4|E|)/(1 - lambda2) on the mixing time."""
    if result.gap <= result.tol:
        raise ValueError(f"spectral gap {result.gap:.3e} is not certified above tol {result.tol:.1e}")
    return ds_mixing_bound_raw(result.gap, graph.oriented_edge_count)

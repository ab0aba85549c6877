"""Weighted-graph topology metrics over connectivity matrices.

Six per-node scores: closeness (cc), betweenness (bc), eigenvector (ec),
pagerank (pc), Burt effective size (eff), and Onnela weighted clustering
coefficient (clst).  Path-based metrics need a weight-to-length mapping:

* ``"distance"`` (default): weights already are path lengths; a zero weight
  means the edge is absent.  Morphological dissimilarity networks fit this.
* ``"inverse"``: length = 1/weight for positive weights, absent otherwise.

Eigenvector centrality also has a tape-recorded fixed-iteration variant so
training losses can differentiate through it.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from ._topology_kernels import (
    brandes_betweenness,
    burt_effective_size,
    dijkstra_all,
    onnela_clustering,
)
from .data import check_connectivity
from .errors import DegenerateError, PreconditionError

DISTANCE = "distance"
INVERSE = "inverse"

_EC_EPS = 1e-12


def _length_matrix(w: np.ndarray, interp: str) -> np.ndarray:
    lengths = np.full(w.shape, np.inf)
    positive = w > 0
    if interp == DISTANCE:
        lengths[positive] = w[positive]
    elif interp == INVERSE:
        lengths[positive] = 1.0 / w[positive]
    else:
        raise PreconditionError(f"unknown interpretation {interp!r}")
    np.fill_diagonal(lengths, 0.0)
    return lengths


def shortest_paths(weights, interp: str = DISTANCE) -> np.ndarray:
    """All-pairs shortest-path distances; np.inf marks unreachable pairs."""
    w = check_connectivity(weights)
    return dijkstra_all(_length_matrix(w, interp))


def closeness(weights, interp: str = DISTANCE) -> np.ndarray:
    """(r-1) / sum of distances; 0 whenever any pair is unreachable."""
    w = check_connectivity(weights)
    r = w.shape[0]
    if r < 2:
        raise PreconditionError("closeness needs at least 2 nodes")
    dist = dijkstra_all(_length_matrix(w, interp))
    sums = dist.sum(axis=1)
    out = np.zeros(r)
    finite = np.isfinite(sums) & (sums > 0)
    out[finite] = (r - 1) / sums[finite]
    return out


def betweenness(weights, interp: str = DISTANCE) -> np.ndarray:
    """Shortest-path betweenness normalized by 2/((r-1)(r-2))."""
    w = check_connectivity(weights)
    r = w.shape[0]
    if r < 3:
        raise PreconditionError("betweenness needs at least 3 nodes")
    raw = brandes_betweenness(_length_matrix(w, interp))
    # raw counts ordered pairs; unordered pairs x the Eq-normalization
    return raw / ((r - 1) * (r - 2))


def eigenvector(weights) -> np.ndarray:
    """Principal-eigenvector centrality, unit L2 norm, positive orientation.

    Power iteration runs on W + delta*I (same eigenvectors, spectrum shifted
    positive) so bipartite-like spectra with a -lambda_max eigenvalue still
    converge; stops when successive iterates move < 1e-9 or at 1000 steps.
    """
    w = check_connectivity(weights)
    r = w.shape[0]
    if not np.any(w > 0):
        raise DegenerateError("eigenvector centrality of an all-zero graph")
    delta = w.sum(axis=1).max()
    shifted = w + delta * np.eye(r)
    x = np.full(r, 1.0 / np.sqrt(r))
    for _ in range(1000):
        y = shifted @ x
        y /= np.linalg.norm(y)
        if np.linalg.norm(y - x) < 1e-9:
            x = y
            break
        x = y
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    return x / np.linalg.norm(x)


def pagerank(weights, damping: float = 0.85) -> np.ndarray:
    """Weighted PageRank; dangling nodes spread uniformly; sums to 1."""
    w = check_connectivity(weights)
    if not 0.0 <= damping < 1.0:
        raise PreconditionError(f"damping must be in [0, 1), got {damping}")
    r = w.shape[0]
    row_sums = w.sum(axis=1)
    transition = np.full((r, r), 1.0 / r)
    linked = row_sums > 0
    transition[linked] = w[linked] / row_sums[linked, None]
    p = np.full(r, 1.0 / r)
    teleport = (1.0 - damping) / r
    for _ in range(10_000):
        p_next = damping * (transition.T @ p) + teleport
        if np.abs(p_next - p).sum() < 1e-10:
            p = p_next
            break
        p = p_next
    return p / p.sum()


def effective_size(weights) -> np.ndarray:
    """Burt's effective size of every node's ego network."""
    return burt_effective_size(check_connectivity(weights))


def clustering_coefficient(weights) -> np.ndarray:
    """Onnela weighted clustering coefficient per node."""
    return onnela_clustering(check_connectivity(weights))


METRICS = {
    "cc": lambda w, interp: closeness(w, interp),
    "bc": lambda w, interp: betweenness(w, interp),
    "ec": lambda w, interp: eigenvector(w),
    "pc": lambda w, interp: pagerank(w),
    "eff": lambda w, interp: effective_size(w),
    "clst": lambda w, interp: clustering_coefficient(w),
}


def centrality_matrix(graphs, metric: str, interp: str = DISTANCE) -> np.ndarray:
    """Stack one centrality vector per graph into an (n, r) matrix."""
    key = metric.lower()
    if key not in METRICS:
        raise PreconditionError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    graphs = list(graphs)
    if not graphs:
        return np.zeros((0, 0))
    fn = METRICS[key]
    return np.stack([fn(g, interp) for g in graphs])


def ec_or_zero(weights) -> np.ndarray:
    """Eigenvector centrality, returning zeros for an all-zero graph."""
    w = np.asarray(weights, dtype=np.float64)
    if not np.any(w > 0):
        return np.zeros(w.shape[0])
    return eigenvector(w)


# ---------------------------------------------------------------------------
# differentiable path (tape-recorded fixed-iteration power method)

def differentiable_eigenvector(g: ad.Tensor, iters: int = 50) -> ad.Tensor:
    """Eigenvector centrality of one graph with gradients through the input.

    Clamps negatives to zero, then runs ``iters`` normalized power-iteration
    steps recorded on the active tape.  Returns an (r, 1) column tensor that
    matches :func:`eigenvector` on inputs where the plain iteration converges.
    """
    r = g.shape[0]
    if g.shape != (r, r):
        raise PreconditionError(f"expected a square tensor, got {g.shape}")
    if not np.any(g.data > 0):
        raise DegenerateError("differentiable eigenvector of a nonpositive graph")
    clamped = ad.relu(g)
    x = ad.constant(np.full((r, 1), 1.0 / np.sqrt(r)))
    eps = ad.constant([[_EC_EPS]])
    for _ in range(iters):
        y = ad.matmul(clamped, x)
        norm = ad.sqrt(ad.add(ad.sum_all(ad.mul(y, y)), eps))
        x = ad.matmul(y, ad.reciprocal(norm))
    return x


def batched_eigenvector_rows(features: ad.Tensor, r: int, iters: int = 50) -> ad.Tensor:
    """Eigenvector centralities for a batch of vectorized graphs.

    ``features`` is (n, r(r-1)/2); each row is clamped, expanded to a
    symmetric adjacency, and power-iterated in parallel.  All-zero rows
    yield all-zero centralities instead of raising, so training losses stay
    finite early on.  Returns an (n, r) tensor on the active tape.
    """
    n = features.shape[0]
    clamped = ad.relu(features)
    a_flat = ad.devectorize_rows(clamped, r)
    x = ad.constant(np.full((n, r), 1.0 / np.sqrt(r)))
    eps = ad.constant(np.full((n, 1), _EC_EPS))
    for _ in range(iters):
        y = ad.batched_matvec(a_flat, x, r)
        inv_norm = ad.reciprocal(ad.add(ad.row_l2_norms(y), eps))
        x = ad.mul(y, ad.tile_cols(inv_norm, r))
    return x

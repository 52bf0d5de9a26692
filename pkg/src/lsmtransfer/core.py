"""Numerical kernels shared by every estimator.

The log-odds model for an undirected network with ``n`` nodes is

.. math::

    \\Theta = \\alpha 1^\\top + 1 \\alpha^\\top + Z Z^\\top

and the negative log-likelihood sums over *all* ordered pairs ``(i, j)``,
diagonal included. Every likelihood accepts an optional 0/1 ``weights``
matrix selecting the observed entries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, DuplicateNode, SelfLoop

__all__ = [
    "Graph",
    "LatentState",
    "MaskedGraph",
    "sigmoid",
    "softplus",
    "log_odds",
    "nll",
    "nll_gradient",
    "center_rows",
    "prox_nuclear",
    "nuclear_norm",
    "procrustes_distance",
]


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted network without self-loops.

    Parameters
    ----------
    adj : ndarray of shape (n, n)
        Symmetric 0/1 adjacency matrix.
    labels : sequence of str, optional
        Node identifiers; defaults to ``"0" .. "n-1"``.
    name : str
        Free-form identifier (used to derive per-source random streams).
    """

    adj: np.ndarray
    labels: tuple = ()
    name: str = ""

    def __post_init__(self):
        adj = np.asarray(self.adj, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DimensionMismatch(f"adjacency must be square, got {adj.shape}")
        if adj.shape[0] < 2:
            raise ValueError("a graph needs at least 2 nodes")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if not np.isin(adj, (0.0, 1.0)).all():
            raise ValueError("adjacency must be binary")
        if np.any(np.diagonal(adj)):
            raise SelfLoop("self-loops are not allowed")
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)
        labels = tuple(str(x) for x in self.labels) if len(self.labels) else tuple(
            str(i) for i in range(adj.shape[0]))
        if len(labels) != adj.shape[0]:
            raise DimensionMismatch(f"{len(labels)} labels for {adj.shape[0]} nodes")
        if len(set(labels)) != len(labels):
            raise DuplicateNode("node labels must be unique")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def n_edges(self) -> int:
        return int(np.triu(self.adj, 1).sum())

    @property
    def density(self) -> float:
        return self.n_edges / (self.n * (self.n - 1) / 2)

    def subgraph(self, index: Sequence[int], name: Optional[str] = None) -> "Graph":
        """Induced subgraph on ``index``, in the given order."""
        index = np.asarray(index, dtype=int)
        return Graph(self.adj[np.ix_(index, index)],
                     tuple(self.labels[i] for i in index),
                     self.name if name is None else name)


@dataclass
class LatentState:
    """Degree parameters ``alpha`` (length n) and latent positions ``z`` (n x k)."""

    alpha: np.ndarray
    z: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim == 1:
            self.z = self.z[:, None]
        if self.alpha.shape != (self.z.shape[0],):
            raise DimensionMismatch(
                f"alpha has shape {self.alpha.shape}, z has {self.z.shape[0]} rows")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def k(self) -> int:
        return self.z.shape[1]

    def theta(self) -> np.ndarray:
        return log_odds(self)

    def copy(self) -> "LatentState":
        return LatentState(self.alpha.copy(), self.z.copy())


@dataclass(frozen=True, eq=False)
class MaskedGraph:
    """A graph together with a symmetric boolean mask of observed entries."""

    graph: Graph
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != self.graph.adj.shape:
            raise DimensionMismatch(f"mask {mask.shape} vs graph {self.graph.adj.shape}")
        if not np.array_equal(mask, mask.T):
            raise ValueError("mask must be symmetric")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def weights(self) -> np.ndarray:
        return self.mask.astype(float)

    def heldout_pairs(self) -> np.ndarray:
        """Unobserved off-diagonal pairs ``(i, j)`` with ``i < j``."""
        iu = np.triu_indices(self.graph.n, 1)
        hidden = ~self.mask[iu]
        return np.column_stack((iu[0][hidden], iu[1][hidden]))


def sigmoid(x):
    """Logistic function ``1 / (1 + exp(-x))``, evaluated without overflow."""
    return expit(x)


def softplus(x):
    """``log(1 + exp(x))``; note ``log(1 - sigmoid(x)) == -softplus(x)``."""
    return np.logaddexp(0.0, x)


def _theta(alpha, z):
    gram = z @ z.T
    # BLAS does not guarantee a bit-symmetric product
    theta = gram + gram.T
    theta *= 0.5
    theta += alpha[:, None] + alpha[None, :]
    return theta


def log_odds(state: LatentState) -> np.ndarray:
    """Log-odds matrix ``alpha_i + alpha_j + <z_i, z_j>`` for all pairs."""
    return _theta(state.alpha, state.z)


def _adjacency(graph):
    return graph.adj if isinstance(graph, Graph) else np.asarray(graph, dtype=float)


def _check_square(adj, theta, weights=None):
    if theta.shape != adj.shape:
        raise DimensionMismatch(f"theta {theta.shape} vs adjacency {adj.shape}")
    if weights is not None and np.shape(weights) != adj.shape:
        raise DimensionMismatch(f"weights {np.shape(weights)} vs adjacency {adj.shape}")


def _nll(adj, theta, weights=None):
    terms = softplus(theta) - adj * theta
    if weights is not None:
        terms *= weights
    return float(terms.sum())


def nll(graph, theta, weights=None) -> float:
    """Negative Bernoulli log-likelihood summed over all ordered pairs.

    Parameters
    ----------
    graph : Graph or ndarray
        Observed network (or its adjacency matrix).
    theta : ndarray of shape (n, n)
        Log-odds matrix.
    weights : ndarray of shape (n, n), optional
        0/1 observation mask; only entries with weight 1 contribute.
    """
    adj = _adjacency(graph)
    theta = np.asarray(theta, dtype=float)
    _check_square(adj, theta, weights)
    return _nll(adj, theta, weights)


def _residual(adj, theta, weights=None):
    resid = expit(theta)
    resid -= adj
    if weights is not None:
        resid *= weights
    return resid


def _loss_and_residual(adj, theta, weights=None):
    """Fused ``(nll, weights * (sigmoid(theta) - adj))`` sharing one exp."""
    e = np.exp(-np.abs(theta))
    terms = np.log1p(e)
    terms += np.maximum(theta, 0.0)
    terms -= adj * theta
    r = 1.0 / (1.0 + e)
    resid = np.where(theta >= 0, r, e * r)
    resid -= adj
    if weights is not None:
        terms *= weights
        resid *= weights
    return float(terms.sum()), resid


def bound_penalty(theta, bound: float, weight: float = 10.0):
    """Quadratic hinge ``weight/2 * sum((|theta| - bound)_+^2)`` and its derivative.

    A smooth stand-in for the box constraint ``max |theta_ij| <= bound``.
    It acts on every entry, observed or not, so it also caps the log-odds
    predicted for held-out pairs.
    """
    excess = np.abs(theta) - bound
    np.maximum(excess, 0.0, out=excess)
    value = 0.5 * weight * float(np.vdot(excess, excess))
    excess *= weight
    excess *= np.sign(theta)
    return value, excess


def _bounded_loss(adj, theta, weights, bound, weight):
    loss, resid = _loss_and_residual(adj, theta, weights)
    if bound is not None:
        pen, d = bound_penalty(theta, bound, weight)
        loss += pen
        resid += d
    return loss, resid


def nll_gradient(graph, state: LatentState, weights=None):
    """Gradient of :func:`nll` with respect to ``(alpha, z)``.

    No centering is applied; callers project as needed.
    """
    adj = _adjacency(graph)
    theta = log_odds(state)
    _check_square(adj, theta, weights)
    resid = _residual(adj, theta, weights)
    # residual is symmetric whenever weights are, so both index sums coincide
    grad_alpha = resid.sum(axis=1) + resid.sum(axis=0)
    grad_z = (resid + resid.T) @ state.z
    return grad_alpha, grad_z


def center_rows(m):
    """Apply ``I - 11^T / n``: subtract the column means."""
    m = np.asarray(m, dtype=float)
    if m.shape[0] == 0:
        return m.copy()
    return m - m.mean(axis=0, keepdims=True)


def nuclear_norm(m) -> float:
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False).sum())


def prox_nuclear(m, tau: float) -> np.ndarray:
    """Singular value soft-thresholding.

    Returns the minimizer of ``0.5 * ||X - m||_F^2 + tau * ||X||_*``.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    m = np.asarray(m, dtype=float)
    if m.size == 0 or tau == 0:
        return m.copy()
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep]


def procrustes_distance(a, b, norm: str = "frobenius"):
    """Distance between ``a`` and the best orthogonal transform of ``b``.

    The rotation ``o`` minimizes ``||a - b @ o||_F`` and is taken from the
    SVD of ``b.T @ a``. With ``norm="nuclear"`` the same rotation is used
    and the residual is measured in nuclear norm.

    Returns
    -------
    dist : float
    o : ndarray of shape (k, k)
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    u, _, vt = np.linalg.svd(b.T @ a)
    o = u @ vt
    resid = a - b @ o
    if norm == "frobenius":
        dist = float(np.linalg.norm(resid))
    elif norm == "nuclear":
        dist = nuclear_norm(resid)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return dist, o

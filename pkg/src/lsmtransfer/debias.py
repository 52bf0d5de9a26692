"""Debiasing stage: nuclear-norm penalized correction of the shared block.

The target's latent positions are modelled as ``U0 + Delta`` with ``Delta``
column-centered and shrunk toward zero by ``lam * ||Delta||_*``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logit

from ._optim import descend
from .core import (Graph, _bounded_loss, _loss_and_residual, _theta, center_rows,
                   nuclear_norm)
from .errors import DimensionMismatch, EmptyGrid
from .lsm import FitConfig, as_weights


@dataclass(frozen=True)
class DebiasConfig(FitConfig):
    lam: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if self.lam < 0:
            raise ValueError("lam must be non-negative")


@dataclass
class DebiasResult:
    alpha_t: np.ndarray
    delta: np.ndarray
    z_t: np.ndarray
    objective_trace: List[float] = field(repr=False)
    iterations: int = 0
    converged: bool = False

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    @property
    def theta(self) -> np.ndarray:
        return _theta(self.alpha_t, self.z_t)


def _check(graph, u0, alpha_t=None, delta=None):
    n = graph.n
    if u0.shape[0] != n:
        raise DimensionMismatch(f"u0 has {u0.shape[0]} rows for a {n}-node target")
    if alpha_t is not None and alpha_t.shape != (n,):
        raise DimensionMismatch("alpha_t does not match the target")
    if delta is not None and delta.shape != u0.shape:
        raise DimensionMismatch("delta must have the shape of u0")


def penalized_objective(graph: Graph, u0, alpha_t, delta, lam: float, mask=None) -> float:
    """Target negative log-likelihood at ``Z = u0 + delta`` plus ``lam * ||delta||_*``."""
    u0, alpha_t, delta = (np.asarray(x, dtype=float) for x in (u0, alpha_t, delta))
    _check(graph, u0, alpha_t, delta)
    w = as_weights(mask, graph.n)
    loss, _ = _loss_and_residual(graph.adj, _theta(alpha_t, u0 + delta), w)
    return loss + lam * nuclear_norm(delta)


def _smooth(adj, u0, alpha, delta, w, bound=None, weight=10.0):
    z = u0 + delta
    loss, resid = _bounded_loss(adj, _theta(alpha, z), w, bound, weight)
    return loss, [2.0 * resid.sum(axis=1), 2.0 * (resid @ z)]


def smooth_gradient(graph: Graph, u0, alpha_t, delta, mask=None):
    """Gradient of the likelihood part of :func:`penalized_objective`.

    Returns ``(g_alpha, g_delta)``; no centering is applied.
    """
    u0, alpha_t, delta = (np.asarray(x, dtype=float) for x in (u0, alpha_t, delta))
    _check(graph, u0, alpha_t, delta)
    return tuple(_smooth(graph.adj, u0, alpha_t, delta, as_weights(mask, graph.n))[1])


def _alpha_start(adj, w):
    n = adj.shape[0]
    if w is None:
        deg, cnt = adj.sum(axis=1), n
    else:
        deg, cnt = (adj * w).sum(axis=1), np.maximum(w.sum(axis=1), 1.0)
    return 0.5 * logit(np.clip(deg / cnt, 1.0 / n, 1.0 - 1.0 / n))


def fit_debias(graph: Graph, u0, cfg: DebiasConfig = DebiasConfig(), mask=None,
               init: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> DebiasResult:
    """Proximal gradient on ``(alpha_t, Delta)`` given a fixed shared block ``u0``.

    Each iteration takes a gradient step on both blocks, soft-thresholds the
    singular values of ``Delta`` and keeps it centered. The gradient of
    ``Delta`` is projected before the proximal map; the singular vectors of a
    centered matrix are centered, so the result stays feasible. When
    ``cfg.max_logit`` is set its bound penalty is part of the smooth term
    and of the recorded objective.

    Parameters
    ----------
    init : (alpha_t, delta), optional
        Warm start; defaults to degree-based ``alpha_t`` and ``delta = 0``.
    """
    u0 = center_rows(np.asarray(u0, dtype=float))
    _check(graph, u0)
    adj = graph.adj
    n = graph.n
    w = as_weights(mask, n)
    if init is None:
        alpha0, delta0 = _alpha_start(adj, w), np.zeros_like(u0)
    else:
        alpha0, delta0 = np.asarray(init[0], dtype=float), center_rows(init[1])
        _check(graph, u0, alpha0, delta0)

    bound = cfg.logit_bound(n)

    def value_and_grad(blocks):
        return _smooth(adj, u0, blocks[0], blocks[1], w, bound, cfg.bound_weight)

    lip = max(np.linalg.norm(u0 + delta0, 2) ** 2 + n, 1.0)
    scales = [cfg.step_alpha / n, cfg.step_z / lip]
    res = descend(value_and_grad, [alpha0, delta0], scales,
                  projections=[None, center_rows], nuclear=(1, cfg.lam),
                  max_iter=cfg.max_iter, tol=cfg.tol, shrink=cfg.shrink,
                  backtracking=cfg.backtracking)
    alpha, delta = res.blocks
    return DebiasResult(alpha, delta, u0 + delta, res.trace, res.iterations, res.converged)


def default_lambda_grid(n: int, size: int = 11) -> np.ndarray:
    """``size`` log-spaced values covering ``[1e-2, 1e2] * sqrt(n)``."""
    return np.logspace(-2, 2, size) * np.sqrt(n)


def pair_folds(n: int, folds: int, rng: np.random.Generator, mask=None) -> List[np.ndarray]:
    """Split the observed off-diagonal pairs ``(i < j)`` into ``folds`` random groups."""
    iu = np.triu_indices(n, 1)
    pairs = np.column_stack(iu)
    if mask is not None:
        pairs = pairs[np.asarray(mask, dtype=bool)[iu]]
    perm = rng.permutation(len(pairs))
    return [pairs[np.sort(idx)] for idx in np.array_split(perm, folds)]


def _pair_weights(n, base, pairs):
    w = np.ones((n, n)) - np.eye(n) if base is None else np.array(base, dtype=float)
    w[pairs[:, 0], pairs[:, 1]] = 0.0
    w[pairs[:, 1], pairs[:, 0]] = 0.0
    return w


def pair_loss(adj, theta, pairs) -> float:
    """Negative log-likelihood over unordered pairs, each counted once."""
    i, j = pairs[:, 0], pairs[:, 1]
    t = theta[i, j]
    return float(np.sum(np.logaddexp(0.0, t) - adj[i, j] * t))


def cv_lambda_losses(graph: Graph, u0, grid: Sequence[float], folds: int = 5,
                     seed=0, cfg: DebiasConfig = DebiasConfig(), mask=None) -> np.ndarray:
    """Held-out loss for each ``(fold, lam)``; columns follow ``grid`` order.

    Within a fold the grid is traversed from the largest ``lam`` down, each
    fit warm-started from the previous one.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise EmptyGrid("the lambda grid is empty")
    n = graph.n
    base = as_weights(mask, n)
    rng = np.random.default_rng(seed)
    order = np.argsort(-grid, kind="stable")
    losses = np.empty((folds, grid.size))
    for v, pairs in enumerate(pair_folds(n, folds, rng, base)):
        w = _pair_weights(n, base, pairs)
        start = None
        for gi in order:
            res = fit_debias(graph, u0, cfg.with_(lam=float(grid[gi])), mask=w, init=start)
            start = (res.alpha_t, res.delta)
            losses[v, gi] = pair_loss(graph.adj, res.theta, pairs)
    return losses


def select_lambda(graph: Graph, u0, grid: Optional[Sequence[float]] = None, folds: int = 5,
                  seed=0, cfg: DebiasConfig = DebiasConfig(), mask=None) -> float:
    """Penalty weight with the smallest mean held-out loss over ``folds`` pair folds.

    Duplicate grid values are dropped; exact ties go to the larger value.
    """
    grid = default_lambda_grid(graph.n) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise EmptyGrid("the lambda grid is empty")
    grid = np.unique(grid)
    if grid.size == 1:
        return float(grid[0])
    mean = cv_lambda_losses(graph, u0, grid, folds, seed, cfg, mask).mean(axis=0)
    best = np.flatnonzero(mean == mean.min())
    return float(grid[best.max()])

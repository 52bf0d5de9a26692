"""Single-network latent space model fitted by projected gradient descent."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Union

import numpy as np
from scipy.special import logit

from ._optim import descend
from .core import (Graph, LatentState, MaskedGraph, _bounded_loss, _loss_and_residual,
                   _theta, center_rows)
from .errors import DimensionMismatch, RankDeficient


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings shared by every fit.

    ``step_alpha`` and ``step_z`` multiply the internal Lipschitz-based
    step scales (``1/n`` for the degree parameters and
    ``1 / (||Z||_op^2 + 2 ||sigmoid(Theta) - A||_op)`` for latent positions).

    ``max_logit`` bounds the fitted log-odds in absolute value through a
    quadratic hinge of strength ``bound_weight``. ``"auto"`` uses
    ``3 log n``: probabilities below ``n**-3`` would produce less than one
    edge in ``n`` draws of the whole network, so the data cannot tell them
    apart. ``None`` fits by plain maximum likelihood, which lets the degree
    parameters of sparsely connected nodes drift toward minus infinity.
    """

    k: int = 2
    max_iter: int = 2000
    tol: float = 1e-6
    step_alpha: float = 1.0
    step_z: float = 1.0
    backtracking: bool = True
    shrink: float = 0.5
    seed: int = 0
    max_logit: Union[None, float, str] = "auto"
    bound_weight: float = 10.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.tol <= 0 or self.step_alpha <= 0 or self.step_z <= 0:
            raise ValueError("tol and step sizes must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if isinstance(self.max_logit, str):
            if self.max_logit != "auto":
                raise ValueError("max_logit must be a positive number, 'auto' or None")
        elif self.max_logit is not None and not self.max_logit > 0:
            raise ValueError("max_logit must be positive")
        if self.bound_weight <= 0:
            raise ValueError("bound_weight must be positive")

    def with_(self, **kw) -> "FitConfig":
        return replace(self, **kw)

    def logit_bound(self, n: int) -> Optional[float]:
        """Resolved ``max_logit`` for an ``n``-node network."""
        if self.max_logit == "auto":
            return 3.0 * float(np.log(max(n, 2)))
        return None if self.max_logit is None else float(self.max_logit)


@dataclass
class FitResult:
    state: LatentState
    objective_trace: List[float] = field(repr=False)
    iterations: int
    converged: bool

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def as_weights(mask, n: int) -> Optional[np.ndarray]:
    """Normalize a mask argument (MaskedGraph, boolean array or None) to float weights."""
    if mask is None:
        return None
    if isinstance(mask, MaskedGraph):
        w = mask.weights
    else:
        w = np.asarray(mask, dtype=float)
    if w.shape != (n, n):
        raise DimensionMismatch(f"mask {w.shape} vs graph ({n}, {n})")
    return w


def spectral_init(graph: Graph, k: int, mask=None) -> LatentState:
    """Deterministic starting point for gradient descent.

    Degree parameters come from clamped node densities. Latent positions
    come from the top ``k`` eigenpairs of the doubly-centered logit of a
    low-rank smoothing of the (mask-rescaled) adjacency matrix.
    """
    adj = graph.adj
    n = adj.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    w = as_weights(mask, n)
    a = adj
    if w is not None:
        frac = (w.sum() - np.trace(w)) / max(n * n - n, 1)
        a = adj * w / max(frac, 1.0 / n)
    lo, hi = 1.0 / n, 1.0 - 1.0 / n
    alpha = 0.5 * logit(np.clip(a.sum(axis=1) / n, lo, hi))

    vals, vecs = np.linalg.eigh(a)
    top = np.argsort(vals)[::-1][: k + 1]
    top = top[vals[top] > 0]
    smooth = (vecs[:, top] * vals[top]) @ vecs[:, top].T
    surrogate = logit(np.clip(smooth, lo, hi))
    surrogate = center_rows(center_rows(surrogate).T)

    vals, vecs = np.linalg.eigh((surrogate + surrogate.T) / 2)
    top = np.argsort(vals)[::-1][:k]
    mags = np.abs(vals[top])
    good = mags > 1e-8 * max(np.abs(vals).max(), 1.0)
    z = np.zeros((n, k))
    z[:, good] = vecs[:, top[good]] * np.sqrt(mags[good])
    if not good.all():
        warnings.warn(f"only {int(good.sum())} of {k} latent directions are informative; "
                      "padding with zero columns", RankDeficient, stacklevel=2)
    return LatentState(alpha, center_rows(z))


def _step_scales(adj, alpha, z, w, cfg: FitConfig):
    n = adj.shape[0]
    _, resid = _loss_and_residual(adj, _theta(alpha, z), w)
    z_op = np.linalg.norm(z, 2) ** 2 if z.size else 0.0
    lip_z = max(z_op + 2 * np.linalg.norm(resid, 2), 1.0)
    return cfg.step_alpha / n, cfg.step_z / lip_z


def fit_single(graph: Graph, cfg: FitConfig = FitConfig(), mask=None,
               init: Optional[LatentState] = None) -> FitResult:
    """Fit ``(alpha, Z)`` to one network by (bounded) maximum likelihood.

    The objective trace includes the log-odds bound penalty when
    ``cfg.max_logit`` is set.

    Parameters
    ----------
    graph : Graph
    cfg : FitConfig
    mask : MaskedGraph or boolean ndarray, optional
        Only observed entries enter the likelihood and its gradient.
    init : LatentState, optional
        Starting point; defaults to :func:`spectral_init`.

    Returns
    -------
    FitResult
        ``state.z`` is column-centered.
    """
    adj = graph.adj
    n = adj.shape[0]
    w = as_weights(mask, n)
    if init is None:
        init = spectral_init(graph, cfg.k, mask=w)
    if init.alpha.shape != (n,) or init.z.shape[0] != n:
        raise DimensionMismatch("initial state does not match the graph")
    alpha0, z0 = init.alpha, center_rows(init.z)
    bound = cfg.logit_bound(n)

    def value_and_grad(blocks):
        alpha, z = blocks
        loss, resid = _bounded_loss(adj, _theta(alpha, z), w, bound, cfg.bound_weight)
        return loss, [2.0 * resid.sum(axis=1), 2.0 * (resid @ z)]

    scales = _step_scales(adj, alpha0, z0, w, cfg)
    res = descend(value_and_grad, [alpha0, z0], scales,
                  projections=[None, center_rows], max_iter=cfg.max_iter,
                  tol=cfg.tol, shrink=cfg.shrink, backtracking=cfg.backtracking)
    alpha, z = res.blocks
    return FitResult(LatentState(alpha, z), res.trace, res.iterations, res.converged)

"""Backtracking projected / proximal gradient descent over blocks of arrays.

Every estimator in the package is a thin wrapper around :func:`descend`.
Each block carries its own step scale; one scalar step multiplier is
shared by all blocks and adapted by backtracking. A step is accepted only
when the smooth part satisfies the usual quadratic upper bound, which
makes the composite objective non-increasing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import nuclear_norm, prox_nuclear
from .errors import NonFinite

# multiplier applied to the step after an accepted iteration
_GROWTH = 1.5
_MIN_STEP = 1e-14


@dataclass
class Descent:
    blocks: List[np.ndarray]
    trace: List[float]
    iterations: int
    converged: bool


def descend(
    value_and_grad: Callable[[Sequence[np.ndarray]], tuple],
    blocks: Sequence[np.ndarray],
    scales: Sequence[float],
    projections: Optional[Sequence[Optional[Callable]]] = None,
    nuclear: Optional[tuple] = None,
    max_iter: int = 2000,
    tol: float = 1e-6,
    shrink: float = 0.5,
    backtracking: bool = True,
) -> Descent:
    """Minimize ``f(blocks) + lam * ||blocks[j]||_*``.

    Parameters
    ----------
    value_and_grad : callable
        Maps a list of blocks to ``(f, [grad_block, ...])`` for the smooth part.
    blocks : sequence of ndarray
        Starting point. Blocks with a projection must already be feasible.
    scales : sequence of float
        Per-block step scale.
    projections : sequence of callable or None
        Linear projectors onto each block's feasible subspace; applied to
        the gradient, so feasible iterates stay feasible.
    nuclear : (j, lam), optional
        Nuclear-norm penalty on block ``j`` handled by its proximal map.
    """
    x = [np.array(b, dtype=float, copy=True) for b in blocks]
    nb = len(x)
    projections = list(projections) if projections is not None else [None] * nb
    j_pen, lam = nuclear if nuclear is not None else (None, 0.0)

    def penalty(xs):
        return lam * nuclear_norm(xs[j_pen]) if j_pen is not None and lam > 0 else 0.0

    f, g = value_and_grad(x)
    obj = f + penalty(x)
    if not np.isfinite(obj):
        raise NonFinite("objective is not finite at the starting point")
    trace = [obj]
    step = 1.0
    converged = False
    it = 0
    while it < max_iter:
        g = [p(gi) if p is not None else gi for p, gi in zip(projections, g)]
        while True:
            xn = [xi - (step * s) * gi for xi, s, gi in zip(x, scales, g)]
            if j_pen is not None and lam > 0:
                xn[j_pen] = prox_nuclear(xn[j_pen], step * scales[j_pen] * lam)
            fn, gn = value_and_grad(xn)
            objn = fn + penalty(xn)
            if not backtracking:
                if not np.isfinite(objn):
                    raise NonFinite(f"objective diverged at iteration {it + 1}")
                break
            if np.isfinite(fn):
                bound = f
                for xi, xni, s, gi in zip(x, xn, scales, g):
                    d = xni - xi
                    bound += float(np.vdot(gi, d)) + float(np.vdot(d, d)) / (2 * step * s)
                if fn <= bound and objn <= obj:
                    break
            step *= shrink
            if step < _MIN_STEP:
                xn = None
                break
        if xn is None:
            # no decrease is numerically attainable: stationary to working precision
            converged = True
            break
        it += 1
        change = abs(objn - obj) / max(abs(obj), 1e-300)
        x, f, g, obj = xn, fn, gn, objn
        trace.append(obj)
        if change < tol:
            converged = True
            break
        if backtracking:
            step *= _GROWTH
    return Descent(x, trace, it, converged)

"""Transferring stage: a shared latent block estimated from pooled sources.

Each source ``l`` has log-odds

    alpha_l 1^T + 1 alpha_l^T + [U0; U_l] [U0; U_l]^T

where ``U0`` (n x k) is shared by every source and belongs to the target's
nodes, and ``U_l`` covers the source-only nodes. ``U0`` and every ``U_l``
are kept column-centered, which pins them down up to one common rotation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ._optim import descend
from .core import Graph, _loss_and_residual, _theta, center_rows, procrustes_distance
from .errors import DimensionMismatch, EmptyTransferSet, RankDeficient
from .lsm import FitConfig, spectral_init


@dataclass(eq=False)
class TransferProblem:
    """Target graph, source graphs, and target-to-source node maps.

    ``alignments[l][i]`` is the index in ``sources[l]`` of target node ``i``.
    When omitted, every source is assumed to list the target nodes first,
    in target order.
    """

    target: Graph
    sources: List[Graph]
    alignments: Optional[List[np.ndarray]] = None
    _aligned: List[Graph] = field(init=False, repr=False)

    def __post_init__(self):
        n = self.target.n
        self.sources = list(self.sources)
        if self.alignments is None:
            self.alignments = [np.arange(n) for _ in self.sources]
        if len(self.alignments) != len(self.sources):
            raise DimensionMismatch("one alignment per source is required")
        self.alignments = [np.asarray(a, dtype=int) for a in self.alignments]
        aligned = []
        for src, amap in zip(self.sources, self.alignments):
            if amap.shape != (n,):
                raise DimensionMismatch(f"alignment for {src.name!r} must map all {n} target nodes")
            if src.n < n or amap.min(initial=0) < 0 or amap.max(initial=0) >= src.n:
                raise DimensionMismatch(f"alignment for {src.name!r} points outside the source")
            if len(np.unique(amap)) != n:
                raise DimensionMismatch(f"alignment for {src.name!r} is not injective")
            rest = np.setdiff1d(np.arange(src.n), amap)
            aligned.append(src.subgraph(np.concatenate([amap, rest])))
        self._aligned = aligned

    @property
    def n(self) -> int:
        return self.target.n

    @property
    def L(self) -> int:
        return len(self.sources)

    @property
    def aligned_sources(self) -> List[Graph]:
        """Sources reindexed so their first ``n`` nodes are the target's, in order."""
        return self._aligned

    def subset(self, index: Sequence[int]) -> "TransferProblem":
        index = list(index)
        return TransferProblem(self.target, [self.sources[i] for i in index],
                               [self.alignments[i] for i in index])

    def with_target(self, target: Graph) -> "TransferProblem":
        return TransferProblem(target, self.sources, self.alignments)


@dataclass
class SourceBlock:
    alpha: np.ndarray
    u: np.ndarray


@dataclass
class TransferFit:
    u0: np.ndarray
    per_source: List[SourceBlock]
    objective_trace: List[float] = field(repr=False)
    iterations: int = 0
    converged: bool = False

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def _source_theta(u0, blk: SourceBlock):
    z = np.vstack([u0, blk.u])
    return _theta(blk.alpha, z)


def pooled_nll(problem: TransferProblem, fit: TransferFit) -> float:
    """Sum over sources of the full-matrix negative log-likelihood."""
    if len(fit.per_source) != problem.L:
        raise DimensionMismatch("one fitted block per source is required")
    total = 0.0
    for g, blk in zip(problem.aligned_sources, fit.per_source):
        if blk.alpha.shape != (g.n,) or fit.u0.shape[0] + blk.u.shape[0] != g.n:
            raise DimensionMismatch(f"fitted block does not match source {g.name!r}")
        loss, _ = _loss_and_residual(g.adj, _source_theta(fit.u0, blk))
        total += loss
    return total


def pooled_gradient(problem: TransferProblem, fit: TransferFit):
    """Unprojected gradient of :func:`pooled_nll`: ``(g_u0, [(g_alpha_l, g_u_l), ...])``."""
    n = problem.n
    g_u0 = np.zeros_like(fit.u0)
    per = []
    for g, blk in zip(problem.aligned_sources, fit.per_source):
        z = np.vstack([fit.u0, blk.u])
        _, resid = _loss_and_residual(g.adj, _theta(blk.alpha, z))
        gz = 2.0 * (resid @ z)
        g_u0 += gz[:n]
        per.append((2.0 * resid.sum(axis=1), gz[n:]))
    return g_u0, per


def initial_transfer(problem: TransferProblem, k: int) -> TransferFit:
    """Average of per-source spectral embeddings after Procrustes alignment.

    Every source is embedded on its own; the target-node blocks are rotated
    onto the first source's block before averaging, since each embedding is
    only defined up to an orthogonal transform.
    """
    n = problem.n
    inits = [spectral_init(g, k) for g in problem.aligned_sources]
    ref = inits[0].z[:n]
    rotations = [procrustes_distance(ref, st.z[:n])[1] for st in inits]
    u0 = center_rows(np.mean([st.z[:n] @ o for st, o in zip(inits, rotations)], axis=0))
    blocks = [SourceBlock(st.alpha.copy(), center_rows(st.z[n:] @ o) if st.n > n else st.z[n:] @ o)
              for st, o in zip(inits, rotations)]
    return TransferFit(u0, blocks, [])


def _check_rank(u0):
    if u0.size and np.linalg.matrix_rank(u0) < u0.shape[1]:
        warnings.warn("shared latent block is not of full column rank", RankDeficient, stacklevel=3)


def fit_transfer(problem: TransferProblem, cfg: FitConfig = FitConfig(),
                 init: Optional[TransferFit] = None) -> TransferFit:
    """Minimize the pooled likelihood over ``U0`` and every ``(alpha_l, U_l)``.

    The ``U0`` step is divided by the number of sources since its gradient
    accumulates one term per source. Source blocks are summed in source
    order, so the result does not depend on evaluation order. The log-odds
    bound of ``cfg`` is not applied: sources are usually denser and larger
    than the target, and a bound sized for the target would clip them.
    """
    if problem.L == 0:
        raise EmptyTransferSet("at least one source network is required")
    n, L = problem.n, problem.L
    init = initial_transfer(problem, cfg.k) if init is None else init
    graphs = problem.aligned_sources

    def unpack(blocks):
        return blocks[0], [SourceBlock(blocks[1 + 2 * l], blocks[2 + 2 * l]) for l in range(L)]

    def value_and_grad(blocks):
        u0, per = unpack(blocks)
        loss = 0.0
        g_u0 = np.zeros_like(u0)
        grads = [g_u0]
        for g, blk in zip(graphs, per):
            z = np.vstack([u0, blk.u])
            val, resid = _loss_and_residual(g.adj, _theta(blk.alpha, z))
            loss += val
            gz = 2.0 * (resid @ z)
            g_u0 += gz[:n]
            grads += [2.0 * resid.sum(axis=1), gz[n:]]
        return loss, grads

    blocks = [center_rows(init.u0)]
    for blk in init.per_source:
        blocks += [blk.alpha, center_rows(blk.u) if blk.u.shape[0] else blk.u]

    # Lipschitz-style scales: 1/N_l for alpha_l, 1/(||Z_l||^2 + N_l) for latent rows
    scales = [0.0]
    lip_u0 = 0.0
    for g, blk in zip(graphs, init.per_source):
        z = np.vstack([init.u0, blk.u])
        lip = max(np.linalg.norm(z, 2) ** 2 + g.n, 1.0)
        lip_u0 = max(lip_u0, lip)
        scales += [cfg.step_alpha / g.n, cfg.step_z / lip]
    scales[0] = cfg.step_z / (lip_u0 * L)
    projections = [center_rows] + [None, center_rows] * L

    res = descend(value_and_grad, blocks, scales, projections=projections,
                  max_iter=cfg.max_iter, tol=cfg.tol, shrink=cfg.shrink,
                  backtracking=cfg.backtracking)
    u0, per = unpack(res.blocks)
    _check_rank(u0)
    return TransferFit(u0, per, res.trace, res.iterations, res.converged)


def restrict_to_target(problem: TransferProblem) -> TransferProblem:
    """Replace every source by its induced subgraph on the target's nodes."""
    n = problem.n
    sources = [g.subgraph(np.arange(n)) for g in problem.aligned_sources]
    return TransferProblem(problem.target, sources, [np.arange(n)] * problem.L)

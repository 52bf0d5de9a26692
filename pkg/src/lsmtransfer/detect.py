"""Data-driven detection of transferable source networks.

For each of ``R`` replicates a random 80% of the target's node pairs is
kept for fitting. Every source is transferred on its own, the target-side
debiasing fit uses only the kept pairs, and the predictive loss on the
remaining pairs is compared with that of a target-only fit. Sources whose
mean loss exceeds the baseline's by more than ``iota`` baseline standard
deviations are rejected.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ._parallel import derive_seed, pmap
from .core import Graph
from .debias import DebiasConfig, default_lambda_grid, fit_debias, pair_loss, select_lambda
from .errors import EmptyHoldout, LSMError
from .lsm import FitConfig, fit_single
from .transfer import TransferFit, TransferProblem, fit_transfer


@dataclass(frozen=True)
class DetectConfig:
    """Settings for transferable-set detection.

    ``lambda_policy`` is one of

    * ``"scaled"`` (default): ``lambda_scale * n`` for every source;
    * ``"once"``: cross-validate the penalty per source on the first
      replicate and reuse it;
    * ``"per-replicate"``: cross-validate for every (source, replicate);
    * ``"fixed"``: use ``lambdas`` (a scalar, or one value per source).

    The likelihood counts each pair twice, so the default ``2 n`` is a
    penalty of order ``n`` per unordered pair. That is heavy enough that a
    source is judged mostly by its shared block itself. Cross-validated
    penalties instead tend to be small for sources far from the target,
    and the shrunken correction then hides the mismatch.
    """

    replicates: int = 3
    sample_fraction: float = 0.8
    iota: float = 0.5
    lambda_policy: str = "scaled"
    lambda_scale: float = 2.0
    lambdas: Union[None, float, Sequence[float]] = None
    grid: Optional[Sequence[float]] = None
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.replicates < 2:
            raise ValueError("at least 2 replicates are needed for a standard deviation")
        if not 0 < self.sample_fraction < 1:
            raise ValueError("sample_fraction must lie in (0, 1)")
        if self.iota < 0:
            raise ValueError("iota must be non-negative")
        if self.lambda_policy not in ("scaled", "once", "per-replicate", "fixed"):
            raise ValueError(f"unknown lambda_policy {self.lambda_policy!r}")
        if self.lambda_policy == "fixed" and self.lambdas is None:
            raise ValueError("lambda_policy='fixed' requires lambdas")
        if self.lambda_scale < 0:
            raise ValueError("lambda_scale must be non-negative")


@dataclass
class DetectionReport:
    per_source_loss: np.ndarray
    baseline_loss: float
    sigma_hat: float
    selected: List[int]
    iota: float
    source_names: List[str]
    baseline_replicates: np.ndarray = field(repr=False)
    source_replicates: np.ndarray = field(repr=False)
    lambdas: np.ndarray = field(repr=False)
    failed: List[int] = field(default_factory=list)

    def select(self, iota: float) -> List[int]:
        """Sources passing the threshold ``L_l - L_0 <= iota * sigma_hat``."""
        gap = self.per_source_loss - self.baseline_loss
        ok = np.isfinite(gap) & (gap <= iota * self.sigma_hat)
        return [int(l) for l in np.flatnonzero(ok) if l not in self.failed]

    def rows(self) -> List[Dict]:
        """One row per (source, replicate) plus the baseline rows."""
        out = []
        for r, loss in enumerate(self.baseline_replicates):
            out.append({"source": "baseline", "replicate": r + 1, "lambda": None,
                        "loss": float(loss)})
        for l, name in enumerate(self.source_names):
            for r, loss in enumerate(self.source_replicates[l]):
                out.append({"source": name, "replicate": r + 1,
                            "lambda": float(self.lambdas[l, r]), "loss": float(loss)})
        return out

    def to_dict(self) -> Dict:
        return {
            "iota": self.iota,
            "baseline_loss": self.baseline_loss,
            "sigma_hat": self.sigma_hat,
            "sources": [
                {"index": l, "name": name, "mean_loss": _finite(self.per_source_loss[l]),
                 "gap": _finite(self.per_source_loss[l] - self.baseline_loss),
                 "selected": l in self.selected, "failed": l in self.failed}
                for l, name in enumerate(self.source_names)],
            "selected": [self.source_names[l] for l in self.selected],
            "replicates": self.rows(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _finite(x):
    return float(x) if np.isfinite(x) else None


def sample_pairs(n: int, fraction: float, seed, within: Optional[np.ndarray] = None) -> np.ndarray:
    """Symmetric boolean mask observing ``floor(fraction * m)`` random pairs.

    ``m`` is ``n(n-1)/2``, or the number of pairs marked in ``within`` when
    sampling from an already partially observed network. The diagonal is
    never observed.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    if within is not None:
        pool = np.asarray(within, dtype=bool)[iu]
        iu = (iu[0][pool], iu[1][pool])
    m = iu[0].size
    keep = rng.choice(m, size=int(np.floor(fraction * m)), replace=False)
    mask = np.zeros((n, n), dtype=bool)
    mask[iu[0][keep], iu[1][keep]] = True
    return mask | mask.T


def heldout_pairs(mask: np.ndarray, within: Optional[np.ndarray] = None) -> np.ndarray:
    """Unordered pairs ``i < j`` absent from ``mask`` (and present in ``within``)."""
    iu = np.triu_indices(mask.shape[0], 1)
    hidden = ~np.asarray(mask, dtype=bool)[iu]
    if within is not None:
        hidden &= np.asarray(within, dtype=bool)[iu]
    return np.column_stack((iu[0][hidden], iu[1][hidden]))


def holdout_loss(graph: Graph, theta_hat, heldout) -> float:
    """Negative log-likelihood of the held-out unordered pairs."""
    heldout = np.asarray(heldout, dtype=int).reshape(-1, 2)
    if len(heldout) == 0:
        raise EmptyHoldout("no held-out pairs")
    return pair_loss(graph.adj, np.asarray(theta_hat, dtype=float), heldout)


def source_key(graph: Graph, index: int) -> int:
    """Stable integer identity of a source, used to derive its random streams."""
    return zlib.crc32(graph.name.encode()) if graph.name else index


def replicate_mask(n: int, cfg: DetectConfig, r: int, within=None) -> np.ndarray:
    return sample_pairs(n, cfg.sample_fraction, derive_seed(cfg.seed, 0, r), within)


def _baseline_cell(args):
    target, mask, heldout, fitcfg = args
    res = fit_single(target, fitcfg, mask=mask)
    return holdout_loss(target, res.state.theta(), heldout)


def _source_cell(args):
    target, u0, mask, heldout, lam, debcfg = args
    try:
        res = fit_debias(target, u0, debcfg.with_(lam=lam), mask=mask)
        return holdout_loss(target, res.theta, heldout)
    except (LSMError, FloatingPointError, np.linalg.LinAlgError):
        return np.nan


def _lambda_cell(args):
    target, u0, mask, grid, folds, seed, debcfg = args
    try:
        return select_lambda(target, u0, grid, folds, seed, debcfg, mask=mask)
    except (LSMError, FloatingPointError, np.linalg.LinAlgError):
        return np.nan


def _transfer_cell(args):
    problem, fitcfg = args
    try:
        return fit_transfer(problem, fitcfg)
    except (LSMError, FloatingPointError, np.linalg.LinAlgError):
        return None


def single_source_fits(problem: TransferProblem, fitcfg: FitConfig,
                       workers: Optional[int] = None) -> List[Optional[TransferFit]]:
    """Transferring-stage fit of every source on its own (``None`` on failure)."""
    return pmap(_transfer_cell, [(problem.subset([l]), fitcfg) for l in range(problem.L)], workers)


def detect_transferable(problem: TransferProblem, cfg: DetectConfig = DetectConfig(),
                        fitcfg: FitConfig = FitConfig(), debiascfg: DebiasConfig = DebiasConfig(),
                        workers: Optional[int] = None,
                        transfer_fits: Optional[List[Optional[TransferFit]]] = None,
                        mask: Optional[np.ndarray] = None) -> DetectionReport:
    """Estimate the transferable set.

    Parameters
    ----------
    problem : TransferProblem
    cfg : DetectConfig
    fitcfg : FitConfig
        Settings for the baseline and transferring-stage fits.
    debiascfg : DebiasConfig
        Settings for the debiasing fits; its ``lam`` is replaced per source.
    workers : int, optional
        Process count for the (source, replicate) grid.
    transfer_fits : list, optional
        Precomputed :func:`single_source_fits` output. The transferring
        stage never sees the target, so these can be shared across calls
        on the same sources.
    mask : ndarray of bool, optional
        Target pairs available at all; replicate samples are drawn from
        these and the rest is never used.
    """
    L, n, R = problem.L, problem.n, cfg.replicates
    if L < 1:
        raise ValueError("detection needs at least one source")
    target = problem.target
    if transfer_fits is None:
        transfer_fits = single_source_fits(problem, fitcfg, workers)
    keys = [source_key(g, l) for l, g in enumerate(problem.sources)]
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
    masks = [replicate_mask(n, cfg, r, mask) for r in range(R)]
    held = [heldout_pairs(m, mask) for m in masks]
    grid = default_lambda_grid(n) if cfg.grid is None else np.asarray(cfg.grid, dtype=float)

    lambdas = np.full((L, R), np.nan)
    if cfg.lambda_policy == "scaled":
        lambdas[:] = cfg.lambda_scale * n
    elif cfg.lambda_policy == "fixed":
        lambdas[:] = np.broadcast_to(np.asarray(cfg.lambdas, dtype=float).reshape(-1, 1)
                                     if np.ndim(cfg.lambdas) else cfg.lambdas, (L, R))
    else:
        reps = range(R) if cfg.lambda_policy == "per-replicate" else range(1)
        cells = [(l, r) for l in range(L) for r in reps if transfer_fits[l] is not None]
        chosen = pmap(_lambda_cell, [
            (target, transfer_fits[l].u0, masks[r], grid, cfg.folds,
             derive_seed(cfg.seed, keys[l], r + 1), debiascfg) for l, r in cells], workers)
        for (l, r), lam in zip(cells, chosen):
            if cfg.lambda_policy == "per-replicate":
                lambdas[l, r] = lam
            else:
                lambdas[l, :] = lam

    baseline = np.array(pmap(_baseline_cell, [(target, m, h, fitcfg)
                                         for m, h in zip(masks, held)], workers))
    cells = [(l, r) for l in range(L) for r in range(R)
             if transfer_fits[l] is not None and np.isfinite(lambdas[l, r])]
    losses = pmap(_source_cell, [(target, transfer_fits[l].u0, masks[r], held[r],
                                  float(lambdas[l, r]), debiascfg) for l, r in cells], workers)
    table = np.full((L, R), np.nan)
    for (l, r), loss in zip(cells, losses):
        table[l, r] = loss

    failed = [l for l in range(L) if not np.isfinite(table[l]).all()]
    per_source = np.where(np.isfinite(table).all(axis=1), table.mean(axis=1), np.nan)
    report = DetectionReport(
        per_source_loss=per_source,
        baseline_loss=float(baseline.mean()),
        sigma_hat=float(baseline.std(ddof=1)),
        selected=[],
        iota=cfg.iota,
        source_names=[g.name or f"source{l + 1}" for l, g in enumerate(problem.sources)],
        baseline_replicates=baseline,
        source_replicates=table,
        lambdas=lambdas,
        failed=failed,
    )
    report.selected = report.select(cfg.iota)
    return report

"""End-to-end estimators for the target's latent positions.

``two_stage`` runs the transferring stage on a chosen set of sources and
then debiases on the target. The named methods differ only in which
sources they hand to it:

* ``TLK``: the known informative set;
* ``TLD``: the set returned by :func:`~lsmtransfer.detect.detect_transferable`;
* ``TLE``: like ``TLD`` but every source is first cut down to the target's nodes;
* ``TLB``: every source;
* ``one-mode``: no sources, a plain single-network fit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ._parallel import derive_seed
from .core import _theta
from .debias import DebiasConfig, fit_debias, select_lambda
from .detect import DetectConfig, DetectionReport, detect_transferable, single_source_fits
from .lsm import FitConfig, fit_single
from .transfer import TransferFit, TransferProblem, fit_transfer, restrict_to_target

METHODS = ("TLK", "TLD", "TLE", "TLB", "one-mode")


@dataclass
class Estimate:
    method: str
    alpha: np.ndarray
    z: np.ndarray
    selected: Optional[List[int]] = None
    lam: Optional[float] = None
    detection: Optional[DetectionReport] = field(default=None, repr=False)

    @property
    def theta(self) -> np.ndarray:
        return _theta(self.alpha, self.z)


@dataclass
class PipelineConfig:
    """Settings for every stage plus the optional penalty override.

    With ``lam`` unset the debiasing penalty is chosen by cross-validation,
    seeded from ``seed`` alone so that two methods which end up with the
    same source set also give the same estimate.
    """

    fit: FitConfig = field(default_factory=FitConfig)
    debias: DebiasConfig = field(default_factory=DebiasConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    lam: Optional[float] = None
    grid: Optional[Sequence[float]] = None
    folds: int = 5
    seed: int = 0


class TransferCache:
    """Memo of transferring-stage fits keyed by source subset and settings.

    The transferring stage never touches the target, so fits can be
    reused across target masks and across methods that share sources.
    """

    def __init__(self):
        self._fits: Dict[tuple, TransferFit] = {}
        self._single: Dict[tuple, List[Optional[TransferFit]]] = {}

    def transfer(self, tag: str, problem: TransferProblem, index: Sequence[int],
                 cfg: FitConfig) -> TransferFit:
        key = (tag, tuple(sorted(index)), cfg)
        if key not in self._fits:
            self._fits[key] = fit_transfer(problem.subset(key[1]), cfg)
        return self._fits[key]

    def single(self, tag: str, problem: TransferProblem, cfg: FitConfig,
               workers: Optional[int] = None) -> List[Optional[TransferFit]]:
        key = (tag, cfg)
        if key not in self._single:
            self._single[key] = single_source_fits(problem, cfg, workers)
        return self._single[key]


def two_stage(problem: TransferProblem, index: Sequence[int], cfg: PipelineConfig = None,
              mask=None, cache: Optional[TransferCache] = None, tag: str = "full",
              method: str = "TL") -> Estimate:
    """Transfer from the sources in ``index``, then debias on the target.

    An empty ``index`` falls back to a single-network fit of the target.
    """
    cfg = PipelineConfig() if cfg is None else cfg
    index = sorted(int(i) for i in index)
    if not index:
        est = one_mode(problem, cfg, mask)
        est.method, est.selected = method, []
        return est
    cache = TransferCache() if cache is None else cache
    tf = cache.transfer(tag, problem, index, cfg.fit)
    lam = cfg.lam
    if lam is None:
        lam = select_lambda(problem.target, tf.u0, cfg.grid, cfg.folds,
                            derive_seed(cfg.seed, 1), cfg.debias, mask=mask)
    res = fit_debias(problem.target, tf.u0, cfg.debias.with_(lam=lam), mask=mask)
    return Estimate(method, res.alpha_t, res.z_t, index, float(lam))


def one_mode(problem_or_graph, cfg: PipelineConfig = None, mask=None) -> Estimate:
    cfg = PipelineConfig() if cfg is None else cfg
    graph = getattr(problem_or_graph, "target", problem_or_graph)
    res = fit_single(graph, cfg.fit, mask=mask)
    return Estimate("one-mode", res.state.alpha, res.state.z)


def estimate(method: str, problem: TransferProblem, cfg: PipelineConfig = None,
             informative: Optional[Sequence[bool]] = None, mask=None,
             cache: Optional[TransferCache] = None, workers: Optional[int] = None) -> Estimate:
    """Run one named method.

    Parameters
    ----------
    method : {"TLK", "TLD", "TLE", "TLB", "one-mode"}
    problem : TransferProblem
    cfg : PipelineConfig, optional
    informative : sequence of bool, optional
        Required by ``TLK``.
    mask : ndarray of bool, optional
        Observed target pairs; the target likelihood, cross-validation
        and detection only use these.
    cache : TransferCache, optional
        Shared memo of transferring-stage fits.
    workers : int, optional
        Process count for detection.
    """
    cfg = PipelineConfig() if cfg is None else cfg
    cache = TransferCache() if cache is None else cache
    if method == "one-mode":
        return one_mode(problem, cfg, mask)
    if method == "TLK":
        if informative is None:
            raise ValueError("TLK needs the informative flags")
        if len(informative) != problem.L:
            raise ValueError("one informative flag per source is required")
        return two_stage(problem, [l for l, f in enumerate(informative) if f], cfg, mask,
                         cache, method="TLK")
    if method == "TLB":
        return two_stage(problem, range(problem.L), cfg, mask, cache, method="TLB")
    if method in ("TLD", "TLE"):
        tag = "full" if method == "TLD" else "restricted"
        prob = problem if method == "TLD" else restrict_to_target(problem)
        singles = cache.single(tag, prob, cfg.fit, workers)
        report = detect_transferable(prob, cfg.detect, cfg.fit, cfg.debias, workers,
                                     transfer_fits=singles, mask=mask)
        est = two_stage(prob, report.selected, cfg, mask, cache, tag, method=method)
        est.detection = report
        return est
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")

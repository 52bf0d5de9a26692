"""Estimation error, detection accuracy and link-prediction scores."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ._parallel import derive_seed, pmap
from .core import Graph, _theta
from .detect import heldout_pairs, sample_pairs
from .errors import DimensionMismatch, EmptyHoldout, ZeroDenominator
from .pipeline import PipelineConfig, TransferCache, estimate
from .synth import ScenarioConfig, generate
from .transfer import TransferProblem


class RelativeErrors(NamedTuple):
    delta_z: float
    delta_alpha: float
    delta_theta: float


def _ratio(num, den, what):
    if den == 0:
        raise ZeroDenominator(f"true {what} has zero norm")
    return float(num / den)


def relative_errors(truth, est) -> RelativeErrors:
    """Squared relative errors of ``Z Z^T``, ``alpha`` and ``Theta``.

    Parameters
    ----------
    truth : GroundTruth or (alpha, z)
        The target's generating parameters.
    est : (alpha, z) or object with ``alpha`` and ``z``
        Estimated parameters. The latent error compares Gram matrices, so
        it ignores rotations of ``z``.
    """
    if hasattr(truth, "alpha_t_star"):
        a_star, z_star = truth.alpha_t_star, truth.z_t_star
    else:
        a_star, z_star = truth
    if hasattr(est, "alpha") and hasattr(est, "z"):
        a_hat, z_hat = est.alpha, est.z
    else:
        a_hat, z_hat = est
    a_star, z_star, a_hat, z_hat = (np.asarray(x, dtype=float)
                                    for x in (a_star, z_star, a_hat, z_hat))
    if a_hat.shape != a_star.shape or z_hat.shape[0] != z_star.shape[0]:
        raise DimensionMismatch("estimate and truth cover different node sets")
    g_star, g_hat = z_star @ z_star.T, z_hat @ z_hat.T
    t_star, t_hat = _theta(a_star, z_star), _theta(a_hat, z_hat)
    return RelativeErrors(
        _ratio(np.sum((g_hat - g_star) ** 2), np.sum(g_star ** 2), "Z Z^T"),
        _ratio(np.sum((a_hat - a_star) ** 2), np.sum(a_star ** 2), "alpha"),
        _ratio(np.sum((t_hat - t_star) ** 2), np.sum(t_star ** 2), "Theta"),
    )


def detection_rates(informative: Sequence[bool], selected) -> Tuple[Optional[float], Optional[float]]:
    """True and false positive rates of a selected source set.

    A rate is ``None`` when its denominator is empty, e.g. the false
    positive rate when every source is informative.
    """
    flags = np.asarray(informative, dtype=bool)
    if flags.size == 0:
        raise ValueError("at least one source is required")
    chosen = np.zeros(flags.size, dtype=bool)
    chosen[list(selected)] = True
    pos, neg = flags.sum(), (~flags).sum()
    tpr = float((chosen & flags).sum() / pos) if pos else None
    fpr = float((chosen & ~flags).sum() / neg) if neg else None
    return tpr, fpr


def brier(graph: Graph, p_hat, heldout) -> float:
    """Mean of ``(p_ij - A_ij)^2`` over the held-out unordered pairs."""
    heldout = np.asarray(heldout, dtype=int).reshape(-1, 2)
    if len(heldout) == 0:
        raise EmptyHoldout("no held-out pairs")
    p_hat = np.asarray(p_hat, dtype=float)
    if p_hat.shape != graph.adj.shape:
        raise DimensionMismatch("probability matrix does not match the graph")
    i, j = heldout[:, 0], heldout[:, 1]
    return float(np.mean((p_hat[i, j] - graph.adj[i, j]) ** 2))


def mean_sd(values) -> Tuple[float, float]:
    """Mean and sample standard deviation (``nan`` sd for a single value)."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else float("nan")


@dataclass
class HoldoutResult:
    method: str
    missing_ratio: float
    scores: np.ndarray
    selected: List[Optional[List[int]]] = field(default_factory=list, repr=False)

    @property
    def mean(self) -> float:
        return mean_sd(self.scores)[0]

    @property
    def sd(self) -> float:
        return mean_sd(self.scores)[1]


def holdout_mask(n: int, missing_ratio: float, seed) -> np.ndarray:
    """Observed-pair mask hiding ``missing_ratio`` of the target's pairs (rounded down)."""
    if not 0 < missing_ratio < 1:
        raise ValueError("missing_ratio must lie in (0, 1)")
    m = n * (n - 1) // 2
    hidden = max(int(np.floor(missing_ratio * m)), 1)
    return sample_pairs(n, (m - hidden + 0.5) / m, seed)


def holdout_experiment(problem: TransferProblem, method: str, missing_ratio: float,
                       repeats: int = 20, seed: int = 0, cfg: PipelineConfig = None,
                       informative: Optional[Sequence[bool]] = None,
                       cache: Optional[TransferCache] = None,
                       workers: Optional[int] = None) -> HoldoutResult:
    """Brier score of ``method`` on randomly hidden target pairs.

    Each repeat hides a fresh random ``missing_ratio`` share of the
    target's node pairs, fits on the rest and scores the hidden pairs.
    Repeat ``r`` uses the same hidden pairs for every method.
    A repeat whose fit fails scores ``nan``.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    cfg = PipelineConfig() if cfg is None else cfg
    cache = TransferCache() if cache is None else cache
    scores, chosen = [], []
    for r in range(repeats):
        mask = holdout_mask(problem.n, missing_ratio, derive_seed(seed, r))
        try:
            est = estimate(method, problem, cfg, informative, mask, cache, workers)
        except (ArithmeticError, np.linalg.LinAlgError):
            scores.append(np.nan)
            chosen.append(None)
            continue
        scores.append(brier(problem.target, expit(est.theta), heldout_pairs(mask)))
        chosen.append(est.selected)
    return HoldoutResult(method, missing_ratio, np.array(scores), chosen)


SCENARIO_CODES = {"equal": 1, "mixed": 2, "double": 3}
CSV_COLUMNS = ("method", "scenario", "case", "n", "a_size", "metric", "mean", "sd")


def replicate_seed(seed: int, r: int) -> int:
    """Integer seed of replicate ``r`` under master ``seed``."""
    return int(derive_seed(seed, r).generate_state(1)[0])


def _benchmark_cell(args):
    scenario, methods, cfg, r_seed = args
    ens = generate(scenario.with_(seed=r_seed))
    problem = TransferProblem(ens.target, ens.sources)
    cache = TransferCache()
    pcfg = replace(cfg, detect=replace(cfg.detect, seed=r_seed), seed=r_seed)
    out = {}
    for method in methods:
        est = estimate(method, problem, pcfg, ens.truth.informative, cache=cache, workers=1)
        rec = relative_errors(ens.truth, est)._asdict()
        if method in ("TLD", "TLE"):
            rec["tpr"], rec["fpr"] = detection_rates(ens.truth.informative, est.selected)
        out[method] = rec
    return out


def benchmark(scenario: ScenarioConfig, methods: Sequence[str], reps: int, seed: int = 0,
              cfg: PipelineConfig = None, workers: Optional[int] = None) -> List[dict]:
    """Per-replicate metrics of every method on freshly generated ensembles.

    Replicate ``r`` uses the ensemble seeded by ``replicate_seed(seed, r)``;
    all methods within a replicate see the same data and share
    transferring-stage fits.
    """
    cfg = PipelineConfig() if cfg is None else cfg
    cells = [(scenario, tuple(methods), cfg, replicate_seed(seed, r)) for r in range(reps)]
    return pmap(_benchmark_cell, cells, workers)


def summarize(records: List[dict], scenario: ScenarioConfig) -> List[dict]:
    """Collapse :func:`benchmark` output to one row per (method, metric)."""
    rows = []
    methods = list(records[0]) if records else []
    for method in methods:
        for metric in records[0][method]:
            values = [rec[method][metric] for rec in records]
            values = [np.nan if v is None else v for v in values]
            mean, sd = mean_sd(values)
            rows.append({"method": method, "scenario": SCENARIO_CODES[scenario.size_scenario],
                         "case": scenario.delta_case, "n": scenario.n, "a_size": scenario.a_size,
                         "metric": metric, "mean": mean, "sd": sd})
    return rows

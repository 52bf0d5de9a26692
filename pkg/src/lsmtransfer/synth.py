"""Synthetic target/source ensembles with clustered latent positions.

Size scenarios for the sources:

* ``1`` / ``"equal"``: every source has ``n`` nodes;
* ``2`` / ``"mixed"``: the first five have ``round(U(n, 2n))`` nodes, the rest ``2n``;
* ``3`` / ``"double"``: every source has ``2n`` nodes.

Shift cases for the aligned block ``U0l* = Z* + V1 (delta_l I) V2^T``:

* ``"i"``: ``delta_l = 0`` for informative sources, 15 otherwise;
* ``"ii"``: 5 / 15;
* ``"iii"``: ``U(0, 5)`` / ``U(10, 15)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np
from scipy.special import expit

from .core import Graph, _theta, center_rows

SIZE_SCENARIOS = {"1": "equal", "2": "mixed", "3": "double",
                  "equal": "equal", "mixed": "mixed", "double": "double"}
DELTA_CASES = ("i", "ii", "iii")


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 200
    L: int = 10
    a_size: int = 5
    k: int = 2
    size_scenario: str = "mixed"
    delta_case: str = "i"
    alpha_t_range: Tuple[float, float] = (-2.625, -0.875)
    alpha_s_range: Tuple[float, float] = (-1.313, -0.438)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "size_scenario", SIZE_SCENARIOS[str(self.size_scenario)])
        if self.delta_case not in DELTA_CASES:
            raise ValueError(f"delta_case must be one of {DELTA_CASES}")
        if not 0 <= self.a_size <= self.L:
            raise ValueError("need 0 <= a_size <= L")
        if self.k < 1 or self.n <= self.k:
            raise ValueError("need 1 <= k < n")
        for lo, hi in (self.alpha_t_range, self.alpha_s_range):
            if lo > hi:
                raise ValueError("alpha ranges must be ordered")

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


@dataclass
class SourceTruth:
    u0l_star: np.ndarray = field(repr=False)
    u_l_star: np.ndarray = field(repr=False)
    alpha_s_star: np.ndarray = field(repr=False)
    delta_l: float
    informative: bool

    @property
    def z_star(self) -> np.ndarray:
        return np.vstack([self.u0l_star, self.u_l_star])


@dataclass
class GroundTruth:
    z_t_star: np.ndarray = field(repr=False)
    alpha_t_star: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    sources: List[SourceTruth] = field(default_factory=list)

    @property
    def theta_t_star(self) -> np.ndarray:
        return _theta(self.alpha_t_star, self.z_t_star)

    @property
    def informative(self) -> List[bool]:
        return [s.informative for s in self.sources]


@dataclass
class Ensemble:
    target: Graph
    sources: List[Graph]
    truth: GroundTruth
    config: ScenarioConfig


def sample_graph(theta: np.ndarray, rng: np.random.Generator, labels=(), name="") -> Graph:
    """Draw an undirected graph with independent edges ``P(A_ij = 1) = sigmoid(theta_ij)``."""
    n = theta.shape[0]
    iu = np.triu_indices(n, 1)
    edges = rng.random(iu[0].size) < expit(theta[iu])
    adj = np.zeros((n, n))
    adj[iu] = edges
    adj += adj.T
    return Graph(adj, labels, name)


def _clustered_positions(m, mu, rng):
    k = mu.shape[0]
    groups = rng.integers(0, k, size=m)
    zbar = mu[groups] + rng.standard_normal((m, mu.shape[1]))
    return center_rows(zbar)


def _haar_orthogonal(k, rng):
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


def _centered_frame(n, k, rng):
    """``n x k`` orthonormal columns, Haar-distributed within the sum-zero subspace."""
    q, r = np.linalg.qr(center_rows(rng.standard_normal((n, k))))
    return q * np.sign(np.diag(r))


def source_sizes(cfg: ScenarioConfig, rng: np.random.Generator) -> List[int]:
    n, L = cfg.n, cfg.L
    if cfg.size_scenario == "equal":
        return [n] * L
    if cfg.size_scenario == "double":
        return [2 * n] * L
    return [int(np.rint(rng.uniform(n, 2 * n))) if l < 5 else 2 * n for l in range(L)]


def _deltas(cfg: ScenarioConfig, rng):
    out = []
    for l in range(cfg.L):
        informative = l < cfg.a_size
        if cfg.delta_case == "i":
            out.append(0.0 if informative else 15.0)
        elif cfg.delta_case == "ii":
            out.append(5.0 if informative else 15.0)
        else:
            out.append(rng.uniform(0, 5) if informative else rng.uniform(10, 15))
    return out


def gen_target(cfg: ScenarioConfig, rng: np.random.Generator = None):
    """Target network and its ground truth (sources left empty)."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    mu = rng.uniform(-1, 1, size=(cfg.k, cfg.k))
    z = _clustered_positions(cfg.n, mu, rng)
    alpha = rng.uniform(*cfg.alpha_t_range, size=cfg.n)
    truth = GroundTruth(z, alpha, mu)
    labels = tuple(f"v{i}" for i in range(cfg.n))
    return sample_graph(truth.theta_t_star, rng, labels, "target"), truth


def gen_sources(cfg: ScenarioConfig, truth: GroundTruth, rng: np.random.Generator):
    """Source networks whose first ``n`` nodes are the target nodes, in order."""
    n, k = cfg.n, cfg.k
    sizes = source_sizes(cfg, rng)
    deltas = _deltas(cfg, rng)
    graphs = []
    truth.sources = []
    for l, (size, delta) in enumerate(zip(sizes, deltas)):
        v1 = _centered_frame(n, k, rng)
        v2 = _haar_orthogonal(k, rng)
        u0l = v1 @ (delta * np.eye(k)) @ v2.T + truth.z_t_star
        extra = size - n
        u_l = _clustered_positions(extra, truth.mu, rng) if extra > 0 else np.zeros((0, k))
        alpha = rng.uniform(*cfg.alpha_s_range, size=size)
        src = SourceTruth(u0l, u_l, alpha, float(delta), l < cfg.a_size)
        z = src.z_star
        theta = _theta(alpha, z)
        labels = tuple(f"v{i}" for i in range(n)) + tuple(f"s{l + 1}x{i}" for i in range(extra))
        graphs.append(sample_graph(theta, rng, labels, f"s{l + 1}"))
        truth.sources.append(src)
    return graphs


def generate(cfg: ScenarioConfig) -> Ensemble:
    """Target plus ``L`` sources; identical seeds give identical ensembles."""
    rng = np.random.default_rng(cfg.seed)
    target, truth = gen_target(cfg, rng)
    sources = gen_sources(cfg, truth, rng)
    return Ensemble(target, sources, truth, cfg)

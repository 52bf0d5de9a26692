"""Likelihoods, losses and metrics against explicit double-loop versions on tiny graphs."""
import itertools

import numpy as np
from hypothesis import given, strategies as st

from lsmtransfer.core import Graph, LatentState, log_odds, nll, nuclear_norm
from lsmtransfer.debias import pair_loss, penalized_objective
from lsmtransfer.detect import holdout_loss
from lsmtransfer.metrics import brier, detection_rates, relative_errors
from lsmtransfer.transfer import SourceBlock, TransferFit, TransferProblem, pooled_nll

from oracles import (brier_loop, nll_loop, nuclear_loop, pair_nll_loop, theta_loop)

TOL = 1e-10
seeds = st.integers(0, 2**32 - 1)
sizes = st.integers(2, 6)


def instance(seed, n, k=2, scale=2.0):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < 0.5, 1)
    adj = (upper | upper.T).astype(float)
    return rng, Graph(adj), rng.standard_normal(n) * scale, rng.standard_normal((n, k)) * scale


def some_pairs(rng, n):
    pairs = list(itertools.combinations(range(n), 2))
    take = rng.choice(len(pairs), size=rng.integers(1, len(pairs) + 1), replace=False)
    return np.array([pairs[t] for t in sorted(take)])


def close(a, b):
    return abs(a - b) <= TOL * max(1.0, abs(b))


@given(seeds, sizes)
def test_log_odds(seed, n):
    _, _, alpha, z = instance(seed, n)
    assert np.max(np.abs(log_odds(LatentState(alpha, z)) - theta_loop(alpha, z))) <= TOL


@given(seeds, sizes, st.booleans())
def test_nll(seed, n, masked):
    rng, g, alpha, z = instance(seed, n)
    w = None
    if masked:
        w = np.triu(rng.random((n, n)) < 0.6, 1).astype(float)
        w = w + w.T
    theta = theta_loop(alpha, z)
    assert close(nll(g, theta, w), nll_loop(g.adj, theta, w))


@given(seeds, st.integers(2, 5), st.lists(st.integers(0, 3), min_size=1, max_size=3))
def test_pooled_nll(seed, n, extras):
    rng, g, _, u0 = instance(seed, n)
    sources, blocks = [], []
    for m in extras:
        upper = np.triu(rng.random((n + m, n + m)) < 0.5, 1)
        sources.append(Graph((upper | upper.T).astype(float)))
        blocks.append(SourceBlock(rng.standard_normal(n + m), rng.standard_normal((m, 2))))
    maps = [rng.permutation(s.n)[:n] for s in sources]
    problem = TransferProblem(g, sources, maps)
    ref = 0.0
    for s, amap, blk in zip(sources, maps, blocks):
        rest = [i for i in range(s.n) if i not in set(amap)]
        order = list(amap) + rest
        adj = np.array([[s.adj[a, b] for b in order] for a in order])
        ref += nll_loop(adj, theta_loop(blk.alpha, np.vstack([u0, blk.u])))
    assert close(pooled_nll(problem, TransferFit(u0, blocks, [])), ref)


@given(seeds, sizes, st.floats(0, 10))
def test_penalized_objective(seed, n, lam):
    rng, g, alpha, u0 = instance(seed, n)
    delta = rng.standard_normal(u0.shape)
    ref = nll_loop(g.adj, theta_loop(alpha, u0 + delta)) + lam * nuclear_loop(delta)
    assert close(penalized_objective(g, u0, alpha, delta, lam), ref)


@given(seeds, sizes)
def test_nuclear_norm(seed, n):
    m = np.random.default_rng(seed).standard_normal((n, 3))
    assert close(nuclear_norm(m), nuclear_loop(m))


@given(seeds, sizes)
def test_holdout_and_pair_loss(seed, n):
    rng, g, alpha, z = instance(seed, n)
    theta = theta_loop(alpha, z)
    pairs = some_pairs(rng, n)
    ref = pair_nll_loop(g.adj, theta, pairs)
    assert close(holdout_loss(g, theta, pairs), ref)
    assert close(pair_loss(g.adj, theta, pairs), ref)


@given(seeds, sizes)
def test_brier(seed, n):
    rng, g, _, _ = instance(seed, n)
    p = rng.random((n, n))
    p = (p + p.T) / 2
    pairs = some_pairs(rng, n)
    assert close(brier(g, p, pairs), brier_loop(g.adj, p, pairs))


@given(seeds, st.integers(2, 6))
def test_relative_errors(seed, n):
    rng, _, a_star, z_star = instance(seed, n)
    a_hat, z_hat = a_star + rng.standard_normal(n), z_star + rng.standard_normal(z_star.shape)

    def sq(a, b):
        return sum((a[i][j] - b[i][j]) ** 2 for i in range(n) for j in range(n))

    def gram(z):
        return [[sum(z[i, c] * z[j, c] for c in range(z.shape[1])) for j in range(n)]
                for i in range(n)]

    zeros = [[0.0] * n for _ in range(n)]
    g_star, g_hat = gram(z_star), gram(z_hat)
    t_star, t_hat = theta_loop(a_star, z_star), theta_loop(a_hat, z_hat)
    ref_z = sq(g_hat, g_star) / sq(g_star, zeros)
    ref_a = sum((a_hat[i] - a_star[i]) ** 2 for i in range(n)) / sum(x * x for x in a_star)
    ref_t = sq(t_hat, t_star) / sq(t_star, zeros)
    err = relative_errors((a_star, z_star), (a_hat, z_hat))
    assert close(err.delta_z, ref_z) and close(err.delta_alpha, ref_a)
    assert close(err.delta_theta, ref_t)


@given(st.lists(st.booleans(), min_size=1, max_size=6), st.data())
def test_detection_rates(flags, data):
    chosen = data.draw(st.lists(st.integers(0, len(flags) - 1), unique=True))
    tp = fp = 0
    for l in range(len(flags)):
        if l in chosen:
            if flags[l]:
                tp += 1
            else:
                fp += 1
    pos = sum(flags)
    neg = len(flags) - pos
    tpr, fpr = detection_rates(flags, chosen)
    assert tpr == (tp / pos if pos else None)
    assert fpr == (fp / neg if neg else None)

"""Randomized invariants of the likelihoods, solvers and selection rules."""
import numpy as np
from hypothesis import given, strategies as st

from lsmtransfer.core import (Graph, LatentState, center_rows, nll, nll_gradient, prox_nuclear)
from lsmtransfer.debias import DebiasConfig, fit_debias, penalized_objective, smooth_gradient
from lsmtransfer.detect import DetectConfig, DetectionReport, detect_transferable
from lsmtransfer.lsm import FitConfig, fit_single
from lsmtransfer.synth import ScenarioConfig, gen_target, generate
from lsmtransfer.transfer import (SourceBlock, TransferFit, TransferProblem, fit_transfer,
                                  pooled_gradient, pooled_nll)

from conftest import random_graph
from oracles import finite_diff, random_rotation, rel_err

seeds = st.integers(0, 2**32 - 1)


def sym_graph(rng, n, p=0.4):
    upper = np.triu(rng.random((n, n)) < p, 1)
    return Graph((upper | upper.T).astype(float))


def transfer_toy(rng, n=4, extra=(2, 2), k=2):
    target = sym_graph(rng, n)
    sources = [sym_graph(rng, n + m, 0.5) for m in extra]
    problem = TransferProblem(target, sources)
    fit = TransferFit(rng.standard_normal((n, k)),
                      [SourceBlock(rng.standard_normal(n + m) * 0.5, rng.standard_normal((m, k)))
                       for m in extra], [])
    return problem, fit


class TestGradients:
    @given(seeds, st.integers(3, 7), st.booleans())
    def test_core_nll(self, seed, n, masked):
        rng = np.random.default_rng(seed)
        g = sym_graph(rng, n)
        state = LatentState(rng.standard_normal(n), rng.standard_normal((n, 2)))
        w = None
        if masked:
            w = np.triu(rng.random((n, n)) < 0.7, 1).astype(float)
            w = w + w.T
        ga, gz = nll_gradient(g, state, w)
        fa = finite_diff(lambda a: nll(g, LatentState(a, state.z).theta(), w), state.alpha)
        fz = finite_diff(lambda z: nll(g, LatentState(state.alpha, z).theta(), w), state.z)
        assert rel_err(ga, fa) <= 1e-5
        assert rel_err(gz, fz) <= 1e-5

    @given(seeds)
    def test_pooled_nll(self, seed):
        rng = np.random.default_rng(seed)
        p, fit = transfer_toy(rng)
        g_u0, per = pooled_gradient(p, fit)
        f_u0 = finite_diff(lambda u: pooled_nll(p, TransferFit(u, fit.per_source, [])), fit.u0)
        assert rel_err(g_u0, f_u0) <= 1e-5
        for l, (g_a, g_u) in enumerate(per):
            def swap(blk, l=l):
                blocks = list(fit.per_source)
                blocks[l] = blk
                return pooled_nll(p, TransferFit(fit.u0, blocks, []))

            b = fit.per_source[l]
            assert rel_err(g_a, finite_diff(lambda a: swap(SourceBlock(a, b.u)), b.alpha)) <= 1e-5
            assert rel_err(g_u, finite_diff(lambda u: swap(SourceBlock(b.alpha, u)), b.u)) <= 1e-5

    @given(seeds, st.integers(3, 6))
    def test_penalized_smooth_part(self, seed, n):
        rng = np.random.default_rng(seed)
        g = sym_graph(rng, n)
        u0, delta = rng.standard_normal((n, 2)), rng.standard_normal((n, 2))
        alpha = rng.standard_normal(n)
        ga, gd = smooth_gradient(g, u0, alpha, delta)
        fa = finite_diff(lambda a: penalized_objective(g, u0, a, delta, 0.0), alpha)
        fd = finite_diff(lambda d: penalized_objective(g, u0, alpha, d, 0.0), delta)
        assert rel_err(ga, fa) <= 1e-5
        assert rel_err(gd, fd) <= 1e-5


class TestProx:
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=6), st.floats(0, 60))
    def test_diagonal_closed_form(self, diag, tau):
        m = np.diag(diag)
        expected = np.diag(np.sign(diag) * np.maximum(np.abs(diag) - tau, 0.0))
        assert np.allclose(prox_nuclear(m, tau), expected, rtol=0, atol=1e-12)

    def test_diagonal_exact_values(self):
        out = prox_nuclear(np.diag([3.0, 1.0, 0.5]), 1.0)
        assert np.array_equal(np.abs(out), np.diag([2.0, 0.0, 0.0]))


class TestRotationInvariance:
    @given(seeds, st.integers(3, 6), st.integers(1, 3))
    def test_target_likelihoods(self, seed, n, k):
        rng = np.random.default_rng(seed)
        g = sym_graph(rng, n)
        alpha, z = rng.standard_normal(n), rng.standard_normal((n, k))
        o = random_rotation(k, rng)
        a = nll(g, LatentState(alpha, z).theta())
        b = nll(g, LatentState(alpha, z @ o).theta())
        assert abs(a - b) <= 1e-10 * max(abs(a), 1.0)
        u0, delta = rng.standard_normal((n, k)), rng.standard_normal((n, k))
        a = penalized_objective(g, u0, alpha, delta, 0.7)
        b = penalized_objective(g, u0 @ o, alpha, delta @ o, 0.7)
        assert abs(a - b) <= 1e-10 * max(abs(a), 1.0)

    @given(seeds)
    def test_pooled_likelihood(self, seed):
        rng = np.random.default_rng(seed)
        p, fit = transfer_toy(rng, n=5, extra=(3, 0, 2))
        o = random_rotation(2, rng)
        rot = TransferFit(fit.u0 @ o, [SourceBlock(b.alpha, b.u @ o) for b in fit.per_source], [])
        a, b = pooled_nll(p, fit), pooled_nll(p, rot)
        assert abs(a - b) <= 1e-10 * abs(a)


class TestCentering:
    @given(seeds, st.integers(1, 8), st.integers(1, 4))
    def test_idempotent(self, seed, n, k):
        m = np.random.default_rng(seed).standard_normal((n, k)) * 10
        once = center_rows(m)
        assert np.allclose(center_rows(once), once, rtol=0, atol=1e-12)
        assert np.max(np.abs(once.sum(axis=0))) <= 1e-10


class TestMonotoneTraces:
    @given(seeds)
    def test_single_fit(self, seed):
        g = random_graph(15, 0.3, seed=seed % 10_000)
        res = fit_single(g, FitConfig(max_iter=60))
        assert np.all(np.diff(res.objective_trace) <= 0)

    @given(seeds)
    def test_transfer_fit(self, seed):
        rng = np.random.default_rng(seed)
        p, _ = transfer_toy(rng, n=10, extra=(4, 6))
        res = fit_transfer(p, FitConfig(max_iter=60))
        assert np.all(np.diff(res.objective_trace) <= 0)

    @given(seeds, st.floats(0, 50))
    def test_debias_fit(self, seed, lam):
        rng = np.random.default_rng(seed)
        g = random_graph(15, 0.3, seed=seed % 10_000)
        res = fit_debias(g, rng.standard_normal((15, 2)), DebiasConfig(lam=lam, max_iter=60))
        assert np.all(np.diff(res.objective_trace) <= 0)


class TestShrinkage:
    def test_correction_norm_monotone_in_lambda(self):
        g, truth = gen_target(ScenarioConfig(n=80, seed=31))
        rng = np.random.default_rng(2)
        u0 = truth.z_t_star + 0.8 * rng.standard_normal(truth.z_t_star.shape)
        norms = [np.linalg.svd(fit_debias(g, u0, DebiasConfig(lam=lam, max_iter=400)).delta,
                               compute_uv=False).sum()
                 for lam in np.geomspace(0.5, 500, 8)]
        assert all(b <= a + 1e-6 for a, b in zip(norms, norms[1:]))


class TestSelectionMonotone:
    @given(st.lists(st.floats(-20, 20), min_size=1, max_size=10), st.floats(0, 10),
           st.floats(0, 5), st.floats(0, 5))
    def test_iota(self, gaps, sigma, iota, extra):
        L = len(gaps)
        rep = DetectionReport(np.asarray(gaps) + 3.0, 3.0, sigma, [], iota, ["s"] * L,
                              np.zeros(2), np.zeros((L, 2)), np.zeros((L, 2)))
        assert set(rep.select(iota)) <= set(rep.select(iota + extra))


class TestReproducibility:
    def test_detection_across_worker_counts(self):
        ens = generate(ScenarioConfig(n=40, L=3, a_size=1, size_scenario="equal", seed=12))
        p = TransferProblem(ens.target, ens.sources)
        fit = FitConfig(max_iter=80)
        runs = [detect_transferable(p, DetectConfig(seed=4), fit, workers=w) for w in (1, 2, 3)]
        for r in runs[1:]:
            assert r.to_json() == runs[0].to_json()
            assert np.array_equal(r.source_replicates, runs[0].source_replicates)

    def test_fits_repeat_bitwise(self):
        g = random_graph(20, 0.3, seed=5)
        a, b = fit_single(g, FitConfig(max_iter=50)), fit_single(g, FitConfig(max_iter=50))
        assert np.array_equal(a.state.z, b.state.z)
        assert a.objective_trace == b.objective_trace

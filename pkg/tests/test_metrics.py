import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lsmtransfer.debias import DebiasConfig
from lsmtransfer.detect import heldout_pairs
from lsmtransfer.errors import DimensionMismatch, EmptyHoldout, ZeroDenominator
from lsmtransfer.lsm import FitConfig
from lsmtransfer.metrics import (CSV_COLUMNS, brier, benchmark, detection_rates, holdout_experiment,
                                 holdout_mask, mean_sd, relative_errors, replicate_seed, summarize)
from lsmtransfer.pipeline import PipelineConfig, TransferCache, estimate, two_stage
from lsmtransfer.synth import ScenarioConfig, generate
from lsmtransfer.transfer import TransferProblem

from conftest import random_graph
from oracles import brier_loop, random_rotation, theta_loop

QUICK = PipelineConfig(fit=FitConfig(max_iter=80), debias=DebiasConfig(max_iter=80), lam=20.0)


@pytest.fixture(scope="module")
def ensemble():
    ens = generate(ScenarioConfig(n=40, L=3, a_size=3, size_scenario="equal", seed=6))
    return ens, TransferProblem(ens.target, ens.sources)


class TestRelativeErrors:
    def test_exact_estimate(self, rng):
        a, z = rng.standard_normal(5), rng.standard_normal((5, 2))
        assert relative_errors((a, z), (a, z)) == (0.0, 0.0, 0.0)

    def test_rotation_invariance(self, rng):
        a, z = rng.standard_normal(6), rng.standard_normal((6, 3))
        est = (a + 0.1, z @ random_rotation(3, rng))
        err = relative_errors((a, z), est)
        assert err.delta_z <= 1e-10

    def test_hand_oracle(self):
        a_star, z_star = np.array([1.0, -1.0, 0.5]), np.array([[1.0], [0.0], [-1.0]])
        a_hat, z_hat = np.array([1.0, -0.5, 0.5]), np.array([[1.0], [1.0], [-1.0]])
        g_star = [[1, 0, -1], [0, 0, 0], [-1, 0, 1]]
        g_hat = [[1, 1, -1], [1, 1, -1], [-1, -1, 1]]
        dz = sum((g_hat[i][j] - g_star[i][j]) ** 2 for i in range(3) for j in range(3)) / 4
        da = 0.25 / 2.25
        t_star, t_hat = theta_loop(a_star, z_star), theta_loop(a_hat, z_hat)
        dt = ((t_hat - t_star) ** 2).sum() / (t_star ** 2).sum()
        err = relative_errors((a_star, z_star), (a_hat, z_hat))
        assert abs(err.delta_z - dz) <= 1e-12
        assert abs(err.delta_alpha - da) <= 1e-12
        assert abs(err.delta_theta - dt) <= 1e-12

    def test_zero_truth(self):
        with pytest.raises(ZeroDenominator):
            relative_errors((np.ones(3), np.zeros((3, 1))), (np.ones(3), np.ones((3, 1))))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            relative_errors((np.ones(3), np.ones((3, 1))), (np.ones(4), np.ones((4, 1))))

    def test_accepts_ground_truth(self, ensemble):
        ens, _ = ensemble
        t = ens.truth
        assert relative_errors(t, (t.alpha_t_star, t.z_t_star)) == (0.0, 0.0, 0.0)


class TestDetectionRates:
    def test_exact_selection(self):
        assert detection_rates([True, True, False], [0, 1]) == (1.0, 0.0)

    def test_all_informative_has_no_fpr(self):
        assert detection_rates([True] * 10, range(10)) == (1.0, None)
        assert detection_rates([False] * 3, [])[0] is None

    @given(st.lists(st.booleans(), min_size=1, max_size=12), st.data())
    def test_brute_force_counts(self, flags, data):
        sel = data.draw(st.sets(st.integers(0, len(flags) - 1)))
        tp = sum(1 for l in sel if flags[l])
        fp = sum(1 for l in sel if not flags[l])
        pos, neg = sum(flags), len(flags) - sum(flags)
        tpr, fpr = detection_rates(flags, sorted(sel))
        assert tpr == (tp / pos if pos else None)
        assert fpr == (fp / neg if neg else None)


class TestBrier:
    def test_trivial_cases(self):
        g = random_graph(6, seed=1)
        held = heldout_pairs(holdout_mask(6, 0.4, 0))
        assert brier(g, g.adj, held) == 0.0
        assert brier(g, np.full((6, 6), 0.5), held) == 0.25

    def test_hand_oracle(self, rng):
        g = random_graph(5, seed=2)
        p = rng.random((5, 5))
        held = [(0, 1), (1, 4), (2, 3)]
        assert abs(brier(g, p, held) - brier_loop(g.adj, p, held)) <= 1e-15

    def test_errors(self):
        g = random_graph(4)
        with pytest.raises(EmptyHoldout):
            brier(g, np.zeros((4, 4)), [])
        with pytest.raises(DimensionMismatch):
            brier(g, np.zeros((3, 3)), [(0, 1)])

    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
    def test_range_and_monotone(self, seed, step):
        rng = np.random.default_rng(seed)
        g = random_graph(6, seed=seed % 1000)
        p = rng.random((6, 6))
        held = list(itertools.combinations(range(6), 2))[:8]
        b = brier(g, p, held)
        assert 0.0 <= b <= 1.0
        i, j = held[rng.integers(len(held))]
        q = p.copy()
        q[i, j] += step * (g.adj[i, j] - q[i, j])
        assert brier(g, q, held) <= b


class TestHoldout:
    def test_mask_counts(self):
        mask = holdout_mask(20, 0.1, 3)
        assert len(heldout_pairs(mask)) == 19
        assert len(heldout_pairs(holdout_mask(20, 1e-6, 3))) == 1
        with pytest.raises(ValueError):
            holdout_mask(20, 1.0, 0)

    def test_single_pair_holdout_is_scored(self, ensemble):
        _, problem = ensemble
        res = holdout_experiment(problem, "one-mode", 1e-6, repeats=2, cfg=QUICK)
        assert res.scores.shape == (2,)
        assert np.all((res.scores >= 0) & (res.scores <= 1))

    def test_same_masks_for_all_methods(self, ensemble):
        ens, problem = ensemble
        cache = TransferCache()
        a = holdout_experiment(problem, "TLB", 0.2, 3, seed=4, cfg=QUICK, cache=cache)
        b = holdout_experiment(problem, "TLK", 0.2, 3, seed=4, cfg=QUICK, cache=cache,
                               informative=ens.truth.informative)
        # every source is informative here, so both hand over the same set
        assert np.array_equal(a.scores, b.scores)
        assert np.isfinite(a.mean) and np.isfinite(a.sd)

    def test_blind_pooling_matches_detection_when_all_informative(self, ensemble):
        ens, problem = ensemble
        cache = TransferCache()
        tlb = estimate("TLB", problem, QUICK, cache=cache)
        tld = estimate("TLD", problem, QUICK, cache=cache)
        assert tld.selected == [0, 1, 2]
        assert np.array_equal(tlb.z, tld.z)


class TestPipeline:
    def test_empty_set_falls_back(self, ensemble):
        _, problem = ensemble
        est = two_stage(problem, [], QUICK, method="TLD")
        one = estimate("one-mode", problem, QUICK)
        assert est.method == "TLD" and est.selected == []
        assert np.array_equal(est.z, one.z)

    def test_method_errors(self, ensemble):
        _, problem = ensemble
        with pytest.raises(ValueError):
            estimate("TLK", problem, QUICK)
        with pytest.raises(ValueError):
            estimate("TLK", problem, QUICK, informative=[True])
        with pytest.raises(ValueError):
            estimate("XYZ", problem, QUICK)

    def test_restricted_sources(self, ensemble):
        _, problem = ensemble
        est = estimate("TLE", problem, QUICK)
        assert est.z.shape == (problem.n, 2)
        assert est.detection is not None

    def test_cross_validated_penalty_recorded(self, ensemble):
        ens, problem = ensemble
        cfg = PipelineConfig(fit=FitConfig(max_iter=40), debias=DebiasConfig(max_iter=40),
                             grid=[1.0, 10.0], folds=2)
        est = estimate("TLK", problem, cfg, ens.truth.informative)
        assert est.lam in (1.0, 10.0)


class TestBenchmark:
    def test_summary_rows(self):
        scen = ScenarioConfig(n=30, L=2, a_size=1, size_scenario="equal")
        recs = benchmark(scen, ["TLK", "TLD", "one-mode"], reps=2, seed=1, cfg=QUICK)
        again = benchmark(scen, ["TLK", "TLD", "one-mode"], reps=2, seed=1, cfg=QUICK, workers=2)
        assert recs == again
        rows = summarize(recs, scen)
        assert all(set(r) == set(CSV_COLUMNS) for r in rows)
        tld = {r["metric"]: r for r in rows if r["method"] == "TLD"}
        assert set(tld) == {"delta_z", "delta_alpha", "delta_theta", "tpr", "fpr"}
        assert rows[0]["scenario"] == 1 and rows[0]["case"] == "i"

    def test_replicate_seed_stable(self):
        assert replicate_seed(7, 0) == replicate_seed(7, 0)
        assert replicate_seed(7, 0) != replicate_seed(7, 1)

    def test_mean_sd(self):
        assert mean_sd([1.0, 3.0]) == (2.0, pytest.approx(np.sqrt(2)))
        m, s = mean_sd([4.0])
        assert m == 4.0 and np.isnan(s)
        assert np.isnan(mean_sd([np.nan])[0])

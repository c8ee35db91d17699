"""Tests for the replication engine: sums over coupled time points, variance
calibration, neighborhood pair statistics, and normal-approximation error terms."""

from __future__ import annotations

import math

import numpy as np
import pytest

from ncclt import engine
from ncclt import observables as obs
from ncclt import processes as pr
from ncclt.errors import (
    DegenerateVariance,
    InsufficientReplications,
    PathTooShort,
)
from ncclt.neighborhoods import NeighborhoodIndex
from ncclt.rng import DOMAIN_CALIBRATION, DOMAIN_EVAL


class TestNonconventionalSum:
    def test_identity_sum_matches_numpy(self, rademacher_iid, q1):
        F = obs.make_product_observable(rademacher_iid, arity=1)
        path = pr.sample_path(rademacher_iid, 50, seed=3)
        emb = rademacher_iid.embedding[path.values[:50]]
        got = engine.nonconventional_sum(path, F, q1, 50, spec=rademacher_iid)
        assert got == pytest.approx(float(emb.sum()), abs=1e-12)

    def test_pair_product_hand_case(self, rademacher_iid, q2):
        # q = (n, 2n), N = 3 touches positions 1,2,3,4,6 (1-based).
        F = obs.make_product_observable(rademacher_iid, arity=2)
        path = pr.sample_path(rademacher_iid, 6, seed=11)
        v = rademacher_iid.embedding[path.values].ravel()
        expected = float(v[0] * v[1] + v[1] * v[3] + v[2] * v[5])
        got = engine.nonconventional_sum(path, F, q2, 3, spec=rademacher_iid)
        assert got == pytest.approx(expected, abs=1e-12)

    def test_path_too_short(self, rademacher_iid, q2):
        F = obs.make_product_observable(rademacher_iid, arity=2)
        path = pr.sample_path(rademacher_iid, 5, seed=1)
        with pytest.raises(PathTooShort):
            engine.nonconventional_sum(path, F, q2, 3, spec=rademacher_iid)

    def test_embedded_needs_spec(self, rademacher_iid, q1):
        F = obs.make_product_observable(rademacher_iid, arity=1)
        path = pr.sample_path(rademacher_iid, 10, seed=1)
        with pytest.raises(ValueError):
            engine.nonconventional_sum(path, F, q1, 10, spec=None)

    def test_state_observable_needs_no_spec(self, rademacher_iid, q1):
        F = obs.make_return_time_observable([[0]], alphabet_size=2)
        path = pr.sample_path(rademacher_iid, 30, seed=9)
        got = engine.nonconventional_sum(path, F, q1, 30)
        assert got == pytest.approx(float((path.values[:30] == 0).sum()), abs=1e-12)

    def test_invalid_N(self, rademacher_iid, q1):
        F = obs.make_product_observable(rademacher_iid, arity=1)
        path = pr.sample_path(rademacher_iid, 10, seed=1)
        with pytest.raises(ValueError):
            engine.nonconventional_sum(path, F, q1, 0, spec=rademacher_iid)


class TestCountReturnTuples:
    def test_full_alphabet_counts_everything(self, uniform3_iid, q2):
        path = pr.sample_path(uniform3_iid, 40, seed=2)
        n = 20
        assert engine.count_return_tuples(path, [[0, 1, 2], [0, 1, 2]], q2, n) == n

    def test_empty_set_counts_nothing(self, uniform3_iid, q2):
        path = pr.sample_path(uniform3_iid, 40, seed=2)
        assert engine.count_return_tuples(path, [[0, 1, 2], []], q2, 20) == 0

    def test_hand_count_twelve_symbols(self, uniform3_iid, q2):
        # Explicit 12-symbol path; q = (m, 2m), sets = ({0}, {1, 2}).
        path = pr.PathSample(
            values=np.array([0, 1, 0, 2, 1, 0, 0, 2, 1, 0, 1, 1]), seed_tag="hand"
        )
        # m runs 1..6; hits need path[m-1] == 0 and path[2m-1] in {1, 2}.
        # m=1: (0,1) hit; m=2: (1,2) no; m=3: (0,0) no; m=4: (2,2) no;
        # m=5: (1,0) no; m=6: (0,1) hit.
        assert engine.count_return_tuples(path, [[0], [1, 2]], q2, 6) == 2

    def test_matches_indicator_observable_sum(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            a = int(rng.integers(2, 5))
            marg = rng.dirichlet(np.ones(a))
            spec = pr.build_iid(marg, embedding=np.arange(a, dtype=float))
            ell = int(rng.integers(1, 4))
            q = obs.linear_index_family(ell)
            sets = []
            for _ in range(ell):
                # Proper nonempty subsets: the indicator observable rejects a
                # full-alphabet target (constant one) that the counter accepts.
                size = int(rng.integers(1, a))
                sets.append(sorted(rng.choice(a, size=size, replace=False).tolist()))
            n = int(rng.integers(1, 15))
            path = pr.sample_path(spec, ell * n, seed=int(rng.integers(2**32)))
            count = engine.count_return_tuples(path, sets, q, n)
            F = obs.make_return_time_observable(sets, alphabet_size=a)
            via_sum = engine.nonconventional_sum(path, F, q, n)
            assert count == pytest.approx(via_sum, abs=1e-12)

    def test_path_too_short(self, uniform3_iid, q2):
        path = pr.sample_path(uniform3_iid, 9, seed=2)
        with pytest.raises(PathTooShort):
            engine.count_return_tuples(path, [[0], [1]], q2, 5)


class TestReplicatedSums:
    def test_deterministic_and_worker_invariant(self, rademacher_iid, q1):
        F = obs.make_product_observable(rademacher_iid, arity=1)
        a = engine.replicated_sums(rademacher_iid, F, q1, 64, 300, master_seed=5)
        b = engine.replicated_sums(rademacher_iid, F, q1, 64, 300, master_seed=5)
        c = engine.replicated_sums(rademacher_iid, F, q1, 64, 300, master_seed=5, workers=3)
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)

    def test_domains_are_disjoint_streams(self, rademacher_iid, q1):
        F = obs.make_product_observable(rademacher_iid, arity=1)
        a = engine.replicated_sums(
            rademacher_iid, F, q1, 64, 100, master_seed=5, domain=DOMAIN_EVAL
        )
        b = engine.replicated_sums(
            rademacher_iid, F, q1, 64, 100, master_seed=5, domain=DOMAIN_CALIBRATION
        )
        assert not np.array_equal(a, b)

    def test_matches_single_path_evaluation(self, reference_chain, q2):
        # Each replication equals the plain sum over a path drawn with the
        # replication's own seed sequence.
        from ncclt.rng import replication_seed

        F = obs.make_product_observable(reference_chain, arity=2)
        N, T, seed = 17, 8, 77
        S = engine.replicated_sums(reference_chain, F, q2, N, T, master_seed=seed)
        for t in range(T):
            path = pr.sample_path(reference_chain, 2 * N, replication_seed(seed, DOMAIN_EVAL, t))
            direct = engine.nonconventional_sum(path, F, q2, N, spec=reference_chain)
            assert S[t] == pytest.approx(direct, abs=1e-10)

    def test_chunking_does_not_change_values(self, rademacher_iid, q1, monkeypatch):
        F = obs.make_product_observable(rademacher_iid, arity=1)
        whole = engine.replicated_sums(rademacher_iid, F, q1, 32, 200, master_seed=9)
        monkeypatch.setattr(engine, "_CHUNK_BYTES", 32 * 8 * 7)  # 7 rows per chunk
        assert engine._chunk_rows(32) == 16  # floor of 16 rows
        split = engine.replicated_sums(rademacher_iid, F, q1, 32, 200, master_seed=9)
        assert np.array_equal(whole, split)


class TestEstimateVariance:
    def test_zero_observable_degenerate(self, rademacher_iid, q1):
        F = obs.make_table_observable([0.0, 0.0], arity=1, spec=rademacher_iid)
        with pytest.raises(DegenerateVariance):
            engine.estimate_variance(rademacher_iid, F, q1, 64, 200, seed=1)

    def test_rademacher_second_moment_is_N(self, rademacher_iid, q1):
        # S_N is a sum of N independent signs: E S_N^2 = N exactly.
        F = obs.make_product_observable(rademacher_iid, arity=1)
        N = 256
        est = engine.estimate_variance(rademacher_iid, F, q1, N, 2000, seed=42)
        assert abs(est.s2 - N) <= 5 * est.stderr
        assert est.N == N and est.T_cal == 2000

    def test_small_T_cal_rejected(self, rademacher_iid, q1):
        F = obs.make_product_observable(rademacher_iid, arity=1)
        with pytest.raises(ValueError):
            engine.estimate_variance(rademacher_iid, F, q1, 64, 99, seed=1)


class TestEstimateD2:
    def test_two_state_chain_closed_form(self, q1):
        # Symmetric chain with flip probability 1/4 and +-1 values:
        # E X_n X_m = (1/2)^|n-m|, so E S_N^2 = sum over pairs, and the
        # per-step limit is 1 + 2 * (1/2)/(1 - 1/2) = 3.
        spec = pr.build_doeblin_chain(
            [[0.75, 0.25], [0.25, 0.75]], embedding=[-1.0, 1.0]
        )
        F = obs.make_product_observable(spec, arity=1)
        grid = [64, 128, 256, 512]
        est = engine.estimate_D2(spec, F, q1, grid, T_cal=4000, seed=7)
        # Exact oracle at the top horizon from the covariance formula.
        N = grid[-1]
        ks = np.arange(1, N)
        exact = N + 2.0 * float(((N - ks) * 0.5**ks).sum())
        last = est.rows[-1]
        assert last[0] == N
        assert abs(est.D2_hat - exact / N) <= 5 * last[3]
        assert abs(est.D2_hat - 3.0) < 0.2
        # Envelope built on the lower half dominates those rows by construction.
        for N_i, _, dev, se in est.rows[:2]:
            assert dev <= est.envelope_c / math.sqrt(N_i) + 3 * se + 1e-12

    def test_grid_validation(self, rademacher_iid, q1):
        F = obs.make_product_observable(rademacher_iid, arity=1)
        with pytest.raises(ValueError):
            engine.estimate_D2(rademacher_iid, F, q1, [64, 128], T_cal=200, seed=1)
        with pytest.raises(ValueError):
            engine.estimate_D2(rademacher_iid, F, q1, [64, 64, 128], T_cal=200, seed=1)


class TestReplicateZ:
    def test_exact_ratio_and_determinism(self, rademacher_iid, q1):
        F = obs.make_product_observable(rademacher_iid, arity=1)
        b1 = engine.replicate_Z(rademacher_iid, F, q1, 128, 500, master_seed=3, T_cal=400)
        b2 = engine.replicate_Z(rademacher_iid, F, q1, 128, 500, master_seed=3, T_cal=400)
        assert np.array_equal(b1.Z_samples, b2.Z_samples)
        assert np.array_equal(b1.Z_samples, b1.values_SN / b1.s_N_hat)
        assert b1.N == 128 and b1.T == 500 and b1.master_seed == 3

    def test_normalized_moments(self, rademacher_iid, q1):
        F = obs.make_product_observable(rademacher_iid, arity=1)
        batch = engine.replicate_Z(
            rademacher_iid, F, q1, 256, 4000, master_seed=10, T_cal=2000
        )
        Z = batch.Z_samples
        assert abs(float(Z.mean())) < 5.0 / math.sqrt(Z.size)
        assert abs(float((Z * Z).mean()) - 1.0) < 0.2
        assert batch.s_N_hat == pytest.approx(16.0, rel=0.1)


class TestNeighborhoodSums:
    def brute_force(self, X, index):
        out = np.zeros_like(X)
        for n in range(index.N):
            nbr = index.neighborhood(n + 1)
            out[:, n] = X[:, nbr - 1].sum(axis=1)
        return out

    @pytest.mark.parametrize("ell,l", [(1, 0), (1, 2), (2, 1), (2, 4), (3, 3)])
    def test_matches_brute_force(self, ell, l):
        index = NeighborhoodIndex.build(40, l, ell=ell)
        rng = np.random.default_rng(ell * 100 + l)
        X = rng.normal(size=(6, 40))
        slot_lo, slot_hi = engine._slot_arrays(index)
        fast = engine.neighborhood_sums(X, slot_lo, slot_hi)
        assert np.allclose(fast, self.brute_force(X, index), atol=1e-12)

    def test_self_only_at_l_zero_pair_family(self):
        # With l=0 and the doubling family each n is its own neighborhood.
        index = NeighborhoodIndex.build(30, 0, ell=1)
        X = np.random.default_rng(0).normal(size=(3, 30))
        slot_lo, slot_hi = engine._slot_arrays(index)
        assert np.allclose(engine.neighborhood_sums(X, slot_lo, slot_hi), X, atol=0)


class TestPairStatistics:
    def test_streaming_matches_matrix_route(self, reference_chain, q2, monkeypatch):
        F = obs.make_product_observable(reference_chain, arity=2)
        N, T, seed = 48, 130, 55
        index = NeighborhoodIndex.build(N, 2, index_family=q2)
        q_table = q2.table(N)
        L = int(q_table.max())
        Y = engine._summands(
            reference_chain, F.value_table(reference_chain), q_table, 0, T, L, seed, DOMAIN_EVAL
        )
        want = engine.pair_statistics_from_matrix(Y, index)
        monkeypatch.setattr(engine, "_CHUNK_BYTES", L * 8 * 17)  # force multiple chunks
        got = engine.pair_statistics(reference_chain, F, q2, index, T, seed)
        assert np.allclose(got.pair, want.pair, atol=1e-12)
        assert np.allclose(got.third, want.third, atol=1e-12)
        assert np.allclose(got.total, want.total, atol=1e-12)
        assert got.max_abs == pytest.approx(want.max_abs, abs=1e-15)
        assert got.N == want.N and got.T == want.T

    def test_totals_equal_replicated_sums(self, reference_chain, q2):
        F = obs.make_product_observable(reference_chain, arity=2)
        N, T, seed = 32, 64, 19
        index = NeighborhoodIndex.build(N, 1, index_family=q2)
        stats = engine.pair_statistics(reference_chain, F, q2, index, T, seed)
        S = engine.replicated_sums(reference_chain, F, q2, N, T, master_seed=seed)
        assert np.allclose(stats.total, S, atol=1e-12)


class TestSteinTerms:
    def test_zero_observable_gives_zero_terms(self):
        index = NeighborhoodIndex.build(16, 1, ell=1)
        X = np.zeros((1000, 16))
        terms = engine.stein_terms(X, index)
        assert terms.R1 == 0.0
        assert terms.R3 == 0.0
        assert terms.small_terms == 0.0
        assert terms.W_l2 == 0.0
        assert not terms.r2_available and terms.r2_bound is None

    def test_iid_three_state_oracle(self):
        # X_n iid uniform on {-1, 0, 1}: E X^2 = 2/3, E X^4 = 2/3, X^3 = X.
        # After scaling by sqrt(2N/3) the self-neighborhood (l=0) statistics
        # have closed forms: R1 -> 4*sqrt(Var(sum X~^2)) = 2*sqrt(2)/sqrt(N)
        # and E G^2 = 9/(4 N^2), so R3 ~ (3/N) (|W|_2 + 5).
        N, T = 1024, 4000
        rng = np.random.default_rng(314)
        X = rng.integers(-1, 2, size=(T, N)).astype(np.float64)
        Xs = X / math.sqrt(2.0 * N / 3.0)
        index = NeighborhoodIndex.build(N, 0, ell=1)
        terms = engine.stein_terms(Xs, index)
        assert terms.W_l2 == pytest.approx(1.0, abs=0.1)
        assert terms.R1 == pytest.approx(2.0 * math.sqrt(2.0) / math.sqrt(N), rel=0.15)
        assert terms.R3 == pytest.approx((3.0 / N) * (terms.W_l2 + 5.0), rel=0.15)
        # l = 0 kills the collar correction terms entirely.
        assert terms.small_terms == 0.0

    def test_scale_invariance(self, reference_chain, q2):
        F = obs.make_product_observable(reference_chain, arity=2)
        N, T, seed = 40, 1200, 23
        index = NeighborhoodIndex.build(N, 2, index_family=q2)
        q_table = q2.table(N)
        Y = engine._summands(
            reference_chain,
            F.value_table(reference_chain),
            q_table,
            0,
            T,
            int(q_table.max()),
            seed,
            DOMAIN_EVAL,
        )
        s_hat = float(np.sqrt(np.mean(Y.sum(axis=1) ** 2)))
        t1 = engine.stein_terms_from_stats(
            engine.pair_statistics_from_matrix(Y, index), index, s_N_hat=s_hat
        )
        alpha = 3.5
        t2 = engine.stein_terms_from_stats(
            engine.pair_statistics_from_matrix(alpha * Y, index),
            index,
            s_N_hat=alpha * s_hat,
        )
        for field in ("R1", "R3", "small_terms", "R", "W_l2", "sigma2"):
            assert getattr(t1, field) == pytest.approx(getattr(t2, field), rel=1e-10)

    def test_insufficient_replications(self):
        index = NeighborhoodIndex.build(8, 0, ell=1)
        X = np.ones((999, 8))
        with pytest.raises(InsufficientReplications):
            engine.stein_terms(X, index)

    def test_r2_bound_formula(self):
        index = NeighborhoodIndex.build(64, 3, ell=1)
        X = np.random.default_rng(1).normal(size=(1000, 64)) / 8.0
        terms = engine.stein_terms(X, index, C0_prime=2.0, d=0.5, c=0.3, D_hat=1.5)
        expected = 2.0 * math.sqrt(64) / 1.5 * math.sqrt(0.5) * 0.3 ** (3 / 4.0)
        assert terms.r2_available
        assert terms.r2_bound == pytest.approx(expected, rel=1e-12)

    def test_r2_unavailable_without_all_inputs(self):
        index = NeighborhoodIndex.build(64, 3, ell=1)
        X = np.random.default_rng(1).normal(size=(1000, 64)) / 8.0
        terms = engine.stein_terms(X, index, C0_prime=2.0, d=0.5, c=None, D_hat=1.5)
        assert not terms.r2_available and terms.r2_bound is None

    def test_shape_validation(self):
        index = NeighborhoodIndex.build(16, 1, ell=1)
        with pytest.raises(ValueError):
            engine.stein_terms(np.zeros((1000, 15)), index)

    def test_negative_covariance_mass_degenerate(self):
        # A batch whose pair statistics average to a negative number cannot
        # calibrate sigma^2.
        index = NeighborhoodIndex.build(4, 0, ell=1)
        Y = np.tile([1.0, -1.0, 1.0, -1.0], (1000, 1))
        stats = engine.PairStatistics(
            pair=np.full(1000, -1.0),
            third=np.zeros(1000),
            total=Y.sum(axis=1),
            max_abs=1.0,
            N=4,
            T=1000,
        )
        with pytest.raises(DegenerateVariance):
            engine.stein_terms_from_stats(stats, index, s_N_hat=1.0)


class TestChunking:
    def test_chunk_rows_bounds(self):
        assert engine._chunk_rows(1) == 2048
        assert engine._chunk_rows(10**9) == 16

    def test_chunks_cover_range(self):
        for T in (1, 7, 100, 2048, 5000):
            chunks = engine._chunks(T, 1000)
            assert chunks[0][0] == 0 and chunks[-1][1] == T
            for (a, b), (c, d) in zip(chunks, chunks[1:]):
                assert b == c and a < b

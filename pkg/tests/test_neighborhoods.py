"""Neighborhood geometry against brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_neighborhood, brute_force_set_distance
from ncclt import errors, neighborhoods as nb, observables as ob
from ncclt.neighborhoods import NeighborhoodIndex


class TestPairDistances:
    def test_d_ell_examples(self):
        # images of n=2, m=3 under i*n for ell=2: {2,4} vs {3,6} -> min gap 1
        assert nb.d_ell(2, 3, 2) == 1
        assert nb.d_ell(5, 5, 3) == 0
        assert nb.d_ell(1, 10, 1) == 9

    def test_d_ell_symmetry(self):
        for a in range(1, 12):
            for b in range(1, 12):
                assert nb.d_ell(a, b, 3) == nb.d_ell(b, a, 3)

    def test_set_distance_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            ell = int(rng.integers(1, 4))
            A = rng.integers(1, 60, size=rng.integers(1, 6))
            B = rng.integers(1, 60, size=rng.integers(1, 6))
            imgA = {i * int(a) for a in A for i in range(1, ell + 1)}
            imgB = {i * int(b) for b in B for i in range(1, ell + 1)}
            assert nb.set_distance(A, B, ell) == brute_force_set_distance(imgA, imgB)

    def test_set_distance_empty(self):
        with pytest.raises(errors.EmptyInput):
            nb.set_distance([], [1, 2], 2)


class TestNeighborhoods:
    def test_matches_brute_force_small(self):
        for ell in (1, 2, 3):
            fam = ob.linear_index_family(ell)
            for l in (0, 1, 3, 7):
                idx = NeighborhoodIndex.build(60, l, index_family=fam)
                qt = fam.table(60)
                for n in range(1, 61):
                    assert set(idx.neighborhood(n).tolist()) == brute_force_neighborhood(
                        qt, n, l
                    ), (ell, l, n)

    def test_symmetry(self):
        idx = NeighborhoodIndex.build(80, 5, ell=2)
        members = [set(idx.neighborhood(n).tolist()) for n in range(1, 81)]
        for n in range(1, 81):
            for m in members[n - 1]:
                assert n in members[m - 1]

    def test_contains_self(self):
        idx = NeighborhoodIndex.build(50, 0, ell=3)
        for n in range(1, 51):
            assert n in idx.neighborhood(n)

    def test_sizes_match_neighborhoods(self):
        idx = NeighborhoodIndex.build(70, 4, ell=2)
        sizes = idx.sizes()
        for n in range(1, 71):
            assert sizes[n - 1] == len(idx.neighborhood(n))

    def test_cardinality_bound(self):
        for ell in (1, 2, 3):
            for l in (1, 4, 16):
                idx = NeighborhoodIndex.build(400, l, ell=ell)
                assert idx.sizes().max() <= ell * ell * (2 * l + 1)

    def test_interval_form_is_merged_and_sorted(self):
        idx = NeighborhoodIndex.build(100, 6, ell=3)
        for n in range(1, 101):
            segs = idx.intervals(n)
            assert all(s <= e for s, e in segs)
            # strictly separated: merged means next start > prior end + 1
            assert all(b[0] > a[1] + 1 for a, b in zip(segs, segs[1:]))

    def test_polynomial_family_supported(self):
        fam = ob.polynomial_index_family([[0, 0, 1], [0, 0, 2]])  # n^2, 2n^2
        idx = NeighborhoodIndex.build(40, 3, index_family=fam)
        qt = fam.table(40)
        for n in range(1, 41):
            assert set(idx.neighborhood(n).tolist()) == brute_force_neighborhood(qt, n, 3)


class TestAnnuli:
    def test_k_zero_contains_self(self):
        idx = NeighborhoodIndex.build(30, 2, ell=2)
        for n in (1, 7, 30):
            assert n in idx.annulus(n, 0)

    def test_oversized_k_empty(self):
        idx = NeighborhoodIndex.build(20, 1, ell=1)
        assert idx.annulus(5, 2 * 20 + 1).size == 0

    def test_matches_exact_set_distance(self):
        idx = NeighborhoodIndex.build(40, 2, ell=2)
        hoods = {m: idx.neighborhood(m).tolist() for m in range(1, 41)}
        rng = np.random.default_rng(3)
        for _ in range(60):
            n = int(rng.integers(1, 41))
            k = int(rng.integers(0, 30))
            expect = {
                m for m in range(1, 41) if nb.set_distance(hoods[n], hoods[m], 2) == k
            }
            assert set(idx.annulus(n, k).tolist()) == expect

    def test_one_dim_hand_case(self):
        # ell=1, l=1, n=5, N=20: A_5={4,5,6}; distance 3 is achieved only by
        # m=10 (A_10={9,10,11}); on the left, distance from A_m=[m-1,m+1]
        # to [4,6] equals 4-(m+1), never 3 for integer m >= 1
        idx = NeighborhoodIndex.build(20, 1, ell=1)
        assert set(idx.annulus(5, 3).tolist()) == {10}

    def test_distance_rows_match_brute_force(self):
        for ell in (1, 2, 3):
            idx = NeighborhoodIndex.build(50, 3, ell=ell)
            hoods = [idx.neighborhood(m).tolist() for m in range(1, 51)]
            ns = np.arange(1, 51)
            rows = idx.distance_rows(ns)
            for n in range(1, 51):
                for m in range(1, 51):
                    assert rows[n - 1, m - 1] == nb.set_distance(
                        hoods[n - 1], hoods[m - 1], ell
                    ), (ell, n, m)

    def test_gamma_points_define_membership(self):
        idx = NeighborhoodIndex.build(30, 2, ell=2)
        gammas = [idx.gamma(m) for m in range(1, 31)]
        for n in (1, 9, 17, 30):
            expect = {
                m
                for m in range(1, 31)
                if brute_force_set_distance(gammas[n - 1], gammas[m - 1]) <= idx.l
            }
            assert set(idx.neighborhood(n).tolist()) == expect


class TestCardinalityConstants:
    def test_values(self):
        assert nb.cardinality_constants(1) == (3, 12)
        assert nb.cardinality_constants(2) == (12, 4 * 64 * 6)

    def test_annulus_bound_on_sample(self):
        for ell in (1, 2):
            K1, K2 = nb.cardinality_constants(ell)
            for l in (1, 4):
                idx = NeighborhoodIndex.build(300, l, ell=ell)
                rng = np.random.default_rng(5)
                ns = rng.integers(1, 301, size=12)
                rows = idx.distance_rows(ns)
                for b in range(len(ns)):
                    ks, counts = np.unique(rows[b], return_counts=True)
                    sel = counts[ks <= 2 * ell * 300]
                    assert sel.max() <= K2 * l


class TestBlocks:
    def test_single_set_splits_into_singletons(self):
        dec = nb.decompose_blocks({"a": [3, 6, 9]}, gap=1)
        assert dec.windows() == [(3, 3), (6, 6), (9, 9)]
        assert dec.L == 3

    def test_widely_separated_sets(self):
        dec = nb.decompose_blocks({"n": [10, 20], "m": [100, 200]}, gap=5)
        assert dec.L == 4
        assert dec.windows() == [(10, 10), (20, 20), (100, 100), (200, 200)]
        assert list(dec.labels) == ["n", "n", "m", "m"]

    def test_interleaved_sets_mix(self):
        with pytest.raises(errors.MixedBlock):
            nb.decompose_blocks({"n": [10, 20], "m": [12]}, gap=5)

    def test_contiguous_points_cluster(self):
        dec = nb.decompose_blocks({"a": [4, 5, 6, 11]}, gap=2)
        assert dec.windows() == [(4, 6), (11, 11)]

    def test_gap_respected(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            pts = np.unique(rng.integers(1, 200, size=12))
            gap = int(rng.integers(1, 6))
            dec = nb.decompose_blocks({"x": pts.tolist()}, gap=gap)
            wins = dec.windows()
            assert all(b[0] - a[1] > gap for a, b in zip(wins, wins[1:]))
            covered = sorted(p for w in wins for p in range(w[0], w[1] + 1) if p in set(pts))
            assert covered == sorted(pts.tolist())

    def test_empty_input(self):
        with pytest.raises(errors.EmptyInput):
            nb.decompose_blocks({}, gap=1)


@settings(max_examples=40, deadline=None)
@given(
    ell=st.integers(1, 3),
    l=st.integers(0, 8),
    n=st.integers(1, 40),
)
def test_neighborhood_property_vs_oracle(ell, l, n):
    fam = ob.linear_index_family(ell)
    idx = NeighborhoodIndex.build(40, l, index_family=fam)
    assert set(idx.neighborhood(n).tolist()) == brute_force_neighborhood(fam.table(40), n, l)

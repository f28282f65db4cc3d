from fractions import Fraction
from math import comb

import pytest

from codedmr import (
    CoverBudgetError,
    CoverInfeasibleError,
    IdentityCover,
    count_identity_check,
    fano_matrix,
    man_cover,
    man_matrix,
    row_regularity,
    search_cover,
    t_subset_cover,
    t_subset_matrix,
    transversal_cover,
    transversal_matrix,
    verify_cover,
)
from codedmr.covers import MatrixShapeError

from test_constructions import pg2_3_design
from codedmr import bibd_matrix


class TestManCover:
    def test_5_2(self):
        m = man_matrix(5, 2)
        cover = man_cover(m)
        assert cover.size == 10 and cover.uniform_size == 3
        assert verify_cover(m, cover).ok
        assert count_identity_check(cover, m)

    def test_3_2_single_member(self):
        m = man_matrix(3, 2)
        cover = man_cover(m)
        assert cover.size == 1
        assert set(cover.members[0].rows) == {"1", "2", "3"}
        assert set(cover.members[0].cols) == set(m.cols)

    def test_7_4(self):
        m = man_matrix(7, 4)
        cover = man_cover(m)
        assert cover.size == comb(7, 5) == 21
        assert cover.uniform_size == 5
        assert verify_cover(m, cover).ok

    def test_rejects_non_man_matrix(self):
        with pytest.raises(MatrixShapeError):
            man_cover(fano_matrix())


class TestTSubsetCover:
    def test_7_3(self):
        m = t_subset_matrix(7, 3)
        cover = t_subset_cover(m)
        assert cover.size == comb(7, 2) == 21
        assert cover.uniform_size == 5
        assert verify_cover(m, cover).ok
        assert cover.size * 5 == m.N * (m.K - m.r) == 105

    def test_t1_is_one_full_size_member(self):
        m = t_subset_matrix(5, 1)
        cover = t_subset_cover(m)
        assert cover.size == 1 and cover.uniform_size == 5

    def test_5_3_maps_to_man_cover_under_complement(self):
        tm = t_subset_matrix(5, 3)
        mm = man_matrix(5, 2)
        t_pairs = {
            frozenset(
                (k, frozenset(f.split("-")) if "-" in f else frozenset(f))
                for k, f in member.pairs()
            )
            for member in t_subset_cover(tm).members
        }
        universe = {str(i) for i in range(1, 6)}
        man_pairs = {
            frozenset(
                (k, frozenset(universe - (set(f.split("-")) if "-" in f else set(f))))
                for k, f in member.pairs()
            )
            for member in man_cover(mm).members
        }
        assert t_pairs == man_pairs


class TestTransversalCover:
    @pytest.mark.parametrize("k,n", [(2, 2), (3, 3), (2, 5), (5, 5)])
    def test_analytic_cover(self, k, n):
        m = transversal_matrix(k, n)
        cover = transversal_cover(m)
        assert cover.uniform_size == n
        assert cover.size == k * n
        assert verify_cover(m, cover).ok
        assert count_identity_check(cover, m)


class TestSearchCover:
    def test_fano_exact_finds_s7(self, fano_pair):
        m, cover = fano_pair
        assert cover.size == 7 and cover.uniform_size == 3
        assert verify_cover(m, cover).ok

    def test_fano_g4_infeasible_by_divisibility(self):
        with pytest.raises(CoverInfeasibleError, match="divisible"):
            search_cover(fano_matrix(), 4, mode="exact")

    def test_transversal_3_3_exact(self):
        m = transversal_matrix(3, 3)
        cover = search_cover(m, 3, mode="exact")
        assert cover.size == 9
        assert verify_cover(m, cover).ok
        assert count_identity_check(cover, m)

    @pytest.mark.parametrize("K", range(3, 7))
    def test_exact_matches_analytic_size_on_man(self, K):
        for r in range(1, K):
            m = man_matrix(K, r)
            cover = search_cover(m, r + 1, mode="exact")
            assert cover.size == comb(K, r + 1)
            assert verify_cover(m, cover).ok

    def test_exact_is_deterministic(self):
        m = fano_matrix()
        assert search_cover(m, 3, mode="exact") == search_cover(m, 3, mode="exact")

    def test_greedy_is_deterministic_given_seed(self):
        m = man_matrix(5, 2)
        a = search_cover(m, 3, mode="greedy", seed=7)
        b = search_cover(m, 3, mode="greedy", seed=7)
        assert a == b
        assert verify_cover(m, a).ok

    def test_greedy_finds_fano(self):
        m = fano_matrix()
        cover = search_cover(m, 3, mode="greedy", seed=0)
        assert cover.size == 7
        assert verify_cover(m, cover).ok

    def test_exact_on_ingested_bibd(self):
        m = bibd_matrix(pg2_3_design())
        cover = search_cover(m, 4, mode="exact")   # g = (13-1)/(4-1)
        assert cover.size == 13
        assert verify_cover(m, cover).ok
        assert count_identity_check(cover, m)

    def test_exact_budget_failure_is_distinct(self):
        m = bibd_matrix(pg2_3_design())
        with pytest.raises(CoverBudgetError):
            search_cover(m, 4, mode="exact", max_nodes=2)

    def test_g_below_two_infeasible(self):
        with pytest.raises(CoverInfeasibleError):
            search_cover(fano_matrix(), 1)

    def test_proven_infeasible_when_no_cover_exists(self):
        # zeros on the diagonal: each row has a single zero, so no row can
        # supply the two cross-zeros a size-3 identity submatrix needs
        import numpy as np

        from codedmr import BinaryComputingMatrix

        bits = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=np.uint8)
        m = BinaryComputingMatrix(("1", "2", "3"), ("a", "b", "c"), bits, 1)
        with pytest.raises(CoverInfeasibleError, match="no non-overlapping"):
            search_cover(m, 3, mode="exact")

    def test_sum_of_member_sizes_equals_ones(self, fano_pair):
        m, cover = fano_pair
        assert sum(s.size for s in cover.members) == m.ones_count()


class TestRowRegularity:
    def test_fano_cover_three_each(self, fano_pair):
        m, cover = fano_pair
        report = row_regularity(cover, m)
        assert report.regular
        assert all(v == 3 for v in report.counts.values())
        assert report.expected == Fraction(21, 7)

    def test_man_5_2_six_each(self):
        m = man_matrix(5, 2)
        cover = man_cover(m)
        report = row_regularity(cover, m)
        assert report.regular
        assert set(report.counts.values()) == {comb(4, 2)}

    def test_missing_member_breaks_regularity(self, fano_pair):
        m, cover = fano_pair
        report = row_regularity(IdentityCover(cover.members[:-1]), m)
        assert not report.regular

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exhaustive_hat_oracle
from rankscope.certify import (
    CLAIM_EXACT,
    CLAIM_NONE,
    CLAIM_UPPER,
    _oracle_lhs,
    _resolve,
    brute_force_B_oracle,
    certify_bound,
    check_assumption_A,
    check_assumption_B,
    g_capacity,
    in_S_omega,
    max_scalar_rank,
    required_b_size,
    sparsity_margin,
    tt_hat_membership,
)
from rankscope.constraints import (
    build_constraint_matrix,
    build_constraint_matrix_multiview,
    build_constraint_tensor_cp,
    build_constraint_tensor_tt,
    build_constraint_tensor_tucker,
    select_tucker_anchor_set,
)
from rankscope.patterns import (
    SamplingPattern,
    bernoulli_pattern,
    per_column_pattern,
    slice_counts,
)
from rankscope.ranks import RankSpec, valid_tt_ranks


def full_pattern(dims):
    cells = itertools.product(*(range(n) for n in dims))
    return SamplingPattern(dims, frozenset(cells))


def subsets_all_satisfy(constraint, columns, rank):
    # definition-level check that a column set is a valid witness body
    for size in range(1, len(columns) + 1):
        for sub in itertools.combinations(columns, size):
            if sparsity_margin(constraint, sub, rank) < 0:
                return False
    return True


class TestSizes:
    def test_matrix_size(self):
        con = build_constraint_matrix(full_pattern((5, 8)), 2)
        assert required_b_size(con) == 5 * 2 - 4

    def test_cp_size(self):
        con = build_constraint_tensor_cp(full_pattern((4, 5, 3)), 2)
        # r * (n1 + n2) - r^2 - r * (d - 2)
        assert required_b_size(con) == 2 * 9 - 4 - 2

    def test_multiview_size(self):
        con = build_constraint_matrix_multiview(
            full_pattern((6, 5)), full_pattern((6, 4)), 2, 1)
        r1, r2, r = 2, 1, 3
        expect = 6 * r - r * r - r1 * r1 - r2 * r2 + r * (r1 + r2)
        assert required_b_size(con, RankSpec.multi(r1, r2, r)) == expect

    def test_tt_size(self):
        pat = full_pattern((3, 3, 3, 3))
        con = build_constraint_tensor_tt(pat, (2, 3, 2))
        expect = (1 * 3 * 2 + 2 * 3 * 3 + 3 * 3 * 2) - (4 + 9 + 4)
        assert required_b_size(con) == expect

    def test_tucker_size(self):
        pat = full_pattern((3, 3, 2, 2))
        spec = RankSpec.tucker((2, 2), 2)
        anchor = select_tucker_anchor_set(pat, (2, 2), 2)
        con = build_constraint_tensor_tucker(pat, spec, anchor)
        # (prod leading sizes) * (prod budgets) - sum of squared budgets
        assert required_b_size(con) == 9 * 4 - (4 + 4)

    def test_multiview_requires_joint_rank(self):
        con = build_constraint_matrix_multiview(
            full_pattern((4, 3)), full_pattern((4, 3)), 1, 1)
        with pytest.raises(ValueError):
            required_b_size(con)
        assert required_b_size(con, 2) == 4 * 2 - 4 - 1 - 1 + 2 * 2


class TestCapacity:
    def test_hand_values(self):
        # capacity fills the largest budget first
        assert g_capacity((2, 2), 0) == 0
        assert g_capacity((2, 2), 1) == 2
        assert g_capacity((2, 2), 2) == 4
        assert g_capacity((2, 2), 3) == 6
        assert g_capacity((2, 2), 4) == 8
        assert g_capacity((3, 1), 2) == 6
        assert g_capacity((3, 1), 3) == 9
        assert g_capacity((3, 1), 4) == 10

    def test_order_invariant(self):
        for x in range(8):
            assert g_capacity((1, 3, 2), x) == g_capacity((3, 2, 1), x)

    @given(st.lists(st.integers(1, 4), min_size=1, max_size=4),
           st.integers(0, 20))
    @settings(max_examples=80, deadline=None)
    def test_matches_greedy_reference(self, ms, x):
        # fill rows of the sorted budgets one block at a time
        budgets = sorted(ms, reverse=True)
        remaining = x
        total = 0
        for m in budgets:
            take = min(m, max(remaining, 0))
            total += take * m
            remaining -= take
        assert g_capacity(tuple(ms), x) == total


class TestMargin:
    def test_full_square_hand_values(self):
        con = build_constraint_matrix(full_pattern((3, 3)), 2)
        # every output column covers rows {0, 1, 2}
        assert sparsity_margin(con, [0]) == 2 * 3 - 4 - 1
        assert sparsity_margin(con, [0, 1]) == 2 * 3 - 4 - 2
        assert sparsity_margin(con, [0, 1, 2]) == 2 * 3 - 4 - 3

    def test_multiview_hand_values(self):
        con = build_constraint_matrix_multiview(
            full_pattern((2, 1)), full_pattern((2, 1)), 1, 1)
        spec = RankSpec.multi(1, 1, 1)
        # single column from one view: only the shared-direction term fires
        assert sparsity_margin(con, [0], spec) == 1 * (2 - 1) - 1
        assert sparsity_margin(con, [0, 1], spec) == 1 * (2 - 1) - 2

    def test_rejects_empty_and_out_of_range(self):
        con = build_constraint_matrix(full_pattern((3, 3)), 1)
        with pytest.raises(ValueError):
            sparsity_margin(con, [])
        with pytest.raises(ValueError):
            sparsity_margin(con, [99])

    def test_mask_route_equals_dense_route(self):
        rng = np.random.default_rng(0)
        cases = []
        for seed in range(6):
            pat = bernoulli_pattern((5, 6), 0.75, seed=seed)
            if min(slice_counts(pat, 2)) >= 2:
                cases.append((build_constraint_matrix(pat, 2), 2))
        for seed in range(6):
            pat = bernoulli_pattern((3, 3, 3), 0.85, seed=seed)
            if min(slice_counts(pat, 3)) >= 1:
                cases.append((build_constraint_tensor_cp(pat, 1), 1))
            for us in [(2, 1), (2, 2)]:
                if min(slice_counts(pat, 3)) >= us[-1]:
                    cases.append((build_constraint_tensor_tt(pat, us),
                                  RankSpec.tt(us)))
        for con, rank in cases:
            _, nums = _resolve(con, rank)
            n = con.num_columns
            for _ in range(20):
                size = int(rng.integers(1, n + 1))
                cols = sorted(rng.choice(n, size=size, replace=False).tolist())
                margin = sparsity_margin(con, cols, rank)
                assert margin == _oracle_lhs(con, nums, cols) - len(cols)


class TestAssumptionA:
    def test_matrix_paths(self):
        assert check_assumption_A(full_pattern((3, 3)), RankSpec.single(3))
        thin = SamplingPattern((3, 2), frozenset({(0, 0), (0, 1), (1, 1)}))
        assert check_assumption_A(thin, RankSpec.single(1))
        assert not check_assumption_A(thin, RankSpec.single(2))

    def test_multi_checks_each_view(self):
        p1 = full_pattern((3, 2))
        p2 = SamplingPattern((3, 2), frozenset({(0, 0), (0, 1)}))
        assert check_assumption_A((p1, p2), RankSpec.multi(1, 1, 1))
        assert not check_assumption_A((p1, p2), RankSpec.multi(1, 2, 2))

    def test_tucker_is_anchor_existence(self):
        spec = RankSpec.tucker((1,), 2)
        assert check_assumption_A(full_pattern((2, 2, 2)), spec)
        cells = {c for c in itertools.product(range(2), repeat=3) if c[2] != 1}
        assert not check_assumption_A(
            SamplingPattern((2, 2, 2), frozenset(cells)), spec)

    def test_tt_uses_last_link(self):
        cells = {(0, 0, t) for t in range(3)} | {(1, 1, t) for t in range(3)}
        pat = SamplingPattern((3, 3, 3), frozenset(cells))
        assert check_assumption_A(pat, RankSpec.tt((2, 2)))
        assert not check_assumption_A(pat, RankSpec.tt((3, 3)))


class TestBSearch:
    def test_vacuous_when_no_witness_needed(self):
        # at full rank the witness size bound drops to zero
        pat = full_pattern((2, 2))
        con = build_constraint_matrix(pat, 2)
        res = check_assumption_B(con)
        assert res.holds is True and res.witness == ()

    def test_fails_when_columns_short(self):
        pat = per_column_pattern((4, 2), 2, seed=1)
        con = build_constraint_matrix(pat, 2)
        # zero output columns but a positive witness size
        assert con.num_columns == 0
        res = check_assumption_B(con)
        assert res.holds is False and res.counterexample is None

    def test_structured_fast_path_witness_is_valid(self):
        pat = bernoulli_pattern((7, 40), 0.8, seed=3)
        con = build_constraint_matrix(pat, 2)
        res = check_assumption_B(con)
        assert res.holds is True
        k = required_b_size(con)
        assert len(res.witness) == k
        assert subsets_all_satisfy(con, res.witness, None) or k > 12

    def test_counterexample_violates_margin(self):
        pat = SamplingPattern((4, 4), frozenset(
            {(0, 0), (1, 0), (3, 0), (0, 1), (1, 1), (3, 1),
             (0, 2), (1, 2), (3, 2), (0, 3), (1, 3), (2, 3), (3, 3)}))
        con = build_constraint_matrix(pat, 2)
        res = check_assumption_B(con)
        if res.holds is False and res.counterexample is not None:
            assert sparsity_margin(con, res.counterexample) < 0

    def test_budget_exhaustion_returns_unknown(self):
        pat = per_column_pattern((8, 20), 4, seed=9)
        con = build_constraint_matrix(pat, 3)
        res = check_assumption_B(con, budget=1)
        assert res.holds is None and res.exhausted
        full = check_assumption_B(con)
        assert full.holds is not None

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_brute_force_on_random_matrices(self, seed):
        pat = bernoulli_pattern((4, 4), 0.7, seed=seed)
        for r in (1, 2):
            if min(slice_counts(pat, 2)) < r:
                continue
            con = build_constraint_matrix(pat, r)
            if con.num_columns > 20:
                continue
            res = check_assumption_B(con)
            assert res.holds is brute_force_B_oracle(con)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force_on_random_cubes(self, seed):
        pat = bernoulli_pattern((3, 3, 3), 0.55, seed=seed)
        for r in (1, 2):
            if min(slice_counts(pat, 3)) < r:
                continue
            con = build_constraint_tensor_cp(pat, r)
            if con.num_columns > 20:
                continue
            res = check_assumption_B(con)
            assert res.holds is brute_force_B_oracle(con)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_brute_force_multiview(self, seed):
        p1 = bernoulli_pattern((4, 3), 0.8, seed=seed)
        p2 = bernoulli_pattern((4, 3), 0.8, seed=seed + 100)
        if min(slice_counts(p1, 2)) < 1 or min(slice_counts(p2, 2)) < 1:
            pytest.skip("a view misses a column")
        con = build_constraint_matrix_multiview(p1, p2, 1, 1)
        if con.num_columns > 20:
            pytest.skip("oracle pool too large")
        for r in (1, 2):
            spec = RankSpec.multi(1, 1, r)
            res = check_assumption_B(con, spec)
            assert res.holds is brute_force_B_oracle(con, spec)

    def test_witnesses_verify_under_oracle_margins(self):
        pat = bernoulli_pattern((3, 3, 3), 0.8, seed=31)
        con = build_constraint_tensor_cp(pat, 2)
        res = check_assumption_B(con)
        if res.holds and res.witness:
            assert subsets_all_satisfy(con, res.witness, None)


class TestMembership:
    def test_assumption_failure_short_circuits(self):
        thin = SamplingPattern((3, 2), frozenset({(0, 0), (0, 1), (1, 1)}))
        res = in_S_omega(thin, RankSpec.single(2))
        assert res.a_holds is False
        assert res.b_holds is None
        assert res.in_s is False

    def test_exact_observations_per_column_never_certify(self):
        # with exactly r observations per column there are no constraints
        # left, yet a positive witness size is demanded
        pat = per_column_pattern((6, 8), 2, seed=5)
        res = in_S_omega(pat, RankSpec.single(2))
        assert res.a_holds is True and res.in_s is False

    def test_full_pattern_certifies_up_to_cap(self):
        res = max_scalar_rank(full_pattern((3, 3)))
        assert res.rank == 3 and not res.exhausted

    def test_max_rank_cp_on_cube(self):
        res = max_scalar_rank(full_pattern((2, 2, 2)), model="cp")
        assert res.rank >= 1 and not res.exhausted

    def test_int_rank_accepted_for_scalar_models(self):
        pat = full_pattern((3, 3))
        assert in_S_omega(pat, 1).in_s is True

    def test_membership_gap_at_vacuous_witness_boundary(self):
        # Known finding: the certifiable set is not always an unbroken
        # run of ranks.  With every (3,3) slice holding exactly 5 of its
        # 9 cells, rank 5 is certified with an empty witness (required
        # size 0) while rank 4 demands 4 witness columns and only 2
        # constraint columns exist.  Certificates stay individually
        # sound; ascending scans stop at the first gap by design.
        coords = []
        for t in range(2):
            cells = list(itertools.product(range(3), range(3)))
            for i, j in cells[:5]:
                coords.append((i, j, t))
        pat = SamplingPattern((3, 3, 2), frozenset(coords))
        assert in_S_omega(pat, RankSpec.cp(5)).in_s is True
        con = build_constraint_tensor_cp(pat, 5)
        assert required_b_size(con) == 0 and con.num_columns == 0
        assert in_S_omega(pat, RankSpec.cp(4)).in_s is False
        assert in_S_omega(pat, RankSpec.cp(3)).in_s is False
        # the ascending scan therefore reports the sub-gap maximum
        assert max_scalar_rank(pat, model="cp").rank < 5

    def test_membership_gap_multiview_quota_growth(self):
        # Known finding, positive-quota class: the required witness
        # size is not monotone in the rank vector.  Dropping the second
        # view rank from (1, 2, 2) to (1, 1, 2) raises the quota from 5
        # to 6 while the attainable row coverage caps the left side at
        # 5 (view 1 never reaches row 3), so the smaller rank falls out
        # of the certifiable set.  Both verdicts agree with literal
        # enumeration.
        p1 = SamplingPattern((4, 2), frozenset(
            (i, j) for i in range(3) for j in range(2)))
        p2 = SamplingPattern((4, 4), frozenset([
            (0, 0), (0, 1), (0, 3), (1, 2), (1, 3), (2, 0), (2, 1),
            (2, 2), (2, 3), (3, 0), (3, 1), (3, 2)]))
        hi, lo = RankSpec.multi(1, 2, 2), RankSpec.multi(1, 1, 2)
        assert in_S_omega((p1, p2), hi).in_s is True
        assert in_S_omega((p1, p2), lo).in_s is False
        con_hi = build_constraint_matrix_multiview(p1, p2, 1, 2)
        con_lo = build_constraint_matrix_multiview(p1, p2, 1, 1)
        assert required_b_size(con_hi, hi) == 5
        assert required_b_size(con_lo, lo) == 6
        assert brute_force_B_oracle(con_hi, hi) is True
        assert brute_force_B_oracle(con_lo, lo) is False

    def test_membership_gap_tucker_rank_component_drop(self):
        # Same finding for the core-split model: membership at
        # multilinear rank (2, 1) with a quota of 1 does not carry down
        # to (1, 1), whose pool is larger yet has no column clearing
        # its own counting bound.  Both verdicts agree with literal
        # enumeration.
        pat = SamplingPattern((3, 2, 2), frozenset([
            (0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 0),
            (1, 0, 1), (1, 1, 0), (1, 1, 1), (2, 0, 1), (2, 1, 0)]))
        hi, lo = RankSpec.tucker((2, 1), 1), RankSpec.tucker((1, 1), 1)
        assert in_S_omega(pat, hi).in_s is True
        res_lo = in_S_omega(pat, lo)
        assert res_lo.in_s is False and res_lo.a_holds is True
        con_hi = build_constraint_tensor_tucker(
            pat, hi, select_tucker_anchor_set(pat, (2, 1), 1))
        con_lo = build_constraint_tensor_tucker(
            pat, lo, select_tucker_anchor_set(pat, (1, 1), 1))
        assert required_b_size(con_hi) == 1 and required_b_size(con_lo) == 1
        assert brute_force_B_oracle(con_hi) is True
        assert brute_force_B_oracle(con_lo) is False


class TestTTHat:
    @pytest.mark.parametrize("seed", range(4))
    def test_matches_exhaustive_oracle(self, seed):
        pat = bernoulli_pattern((2, 2, 2), 0.85, seed=seed)
        oracle = exhaustive_hat_oracle(pat)
        for us, expect in oracle.items():
            got = tt_hat_membership(pat, us)
            if not got.search_exhausted:
                assert got.member is expect, (us, got)


class TestCertificates:
    def test_upper_bound_claim(self):
        cert = certify_bound(full_pattern((4, 4)), "single", RankSpec.single(2))
        assert cert.in_s is True
        assert cert.claim == CLAIM_UPPER
        payload = cert.to_json()
        assert payload["claim"] == CLAIM_UPPER
        assert payload["rank"] == {"model": "single", "r": 2}
        assert "success_floor" not in payload

    def test_minimal_flag_upgrades_claim(self):
        cert = certify_bound(full_pattern((4, 4)), "single",
                             RankSpec.single(2), minimal=True)
        assert cert.claim == CLAIM_EXACT

    def test_failed_membership_gives_no_claim(self):
        pat = per_column_pattern((6, 8), 2, seed=5)
        cert = certify_bound(pat, "single", RankSpec.single(2), minimal=True)
        assert cert.in_s is False and cert.claim == CLAIM_NONE

    def test_model_mismatch_rejected(self):
        with pytest.raises(ValueError):
            certify_bound(full_pattern((4, 4)), "cp", RankSpec.single(2))

    def test_tt_claim_uses_refined_membership(self):
        pat = full_pattern((2, 2, 2))
        cert = certify_bound(pat, "tt", RankSpec.tt((2, 1)))
        base = in_S_omega(pat, RankSpec.tt((2, 1)))
        hat = tt_hat_membership(pat, (2, 1))
        assert cert.b_holds == base.b_holds
        assert cert.in_s == hat.member

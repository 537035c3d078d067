"""Witness search and rank certificates.

A rank belongs to the certifiable set of a pattern when two conditions
hold: a per-column (or per-slice) observation floor, and the existence
of a witness subset of constraint columns of a prescribed size ``K``
whose every sub-subset satisfies a counting inequality.  The inequality
compares the number of sub-subset columns against a capacity computed
from the distinct rows its ones touch, mode by mode.

The witness search is exact at desk scale: a structured fast path for
matrix patterns, a greedy maximin pre-pass for small ``K``, and a
budgeted lexicographic backtracking enumeration.  Past the node budget
the result is reported as unknown, never guessed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .constraints import (
    AssumptionError,
    ConstraintStructure,
    build_constraint_matrix,
    build_constraint_matrix_multiview,
    build_constraint_tensor_cp,
    build_constraint_tensor_tt,
    build_constraint_tensor_tucker,
    select_tucker_anchor_set,
)
from .patterns import SamplingPattern, slice_counts
from .ranks import RankSpec, valid_tt_ranks

__all__ = [
    "DEFAULT_BUDGET",
    "CLAIM_UPPER",
    "CLAIM_EXACT",
    "CLAIM_NONE",
    "Certificate",
    "BSearchResult",
    "SMembership",
    "MaxRankResult",
    "TTHatResult",
    "g_capacity",
    "required_b_size",
    "sparsity_margin",
    "check_assumption_A",
    "check_assumption_B",
    "in_S_omega",
    "tt_hat_membership",
    "max_scalar_rank",
    "certify_bound",
    "brute_force_B_oracle",
]

DEFAULT_BUDGET = 1 << 20
_GREEDY_MAX_K = 12
# hard ceiling on the subset bookkeeping of the exact search; reaching
# it reports exhaustion no matter how large the caller's budget is
_PROFILE_CAP = 1 << 21

CLAIM_UPPER = "upper_bound_with_prob_one"
CLAIM_EXACT = "exact_if_minimal"
CLAIM_NONE = "no_claim"


@dataclass(frozen=True)
class BSearchResult:
    """Outcome of a witness search.

    ``holds`` is True/False when settled and None when the node budget
    ran out first.  ``witness`` lists the chosen column indices on
    success; ``counterexample`` records the first sub-subset seen to
    violate the counting inequality, attached only on a definite False.
    """

    holds: bool | None
    witness: tuple[int, ...] | None
    counterexample: tuple[int, ...] | None
    nodes: int = 0
    exhausted: bool = False


@dataclass(frozen=True)
class SMembership:
    """Membership of one rank in the certifiable set of a pattern."""

    a_holds: bool
    b_holds: bool | None
    in_s: bool | None
    witness: tuple[int, ...] | None = None
    counterexample: tuple[int, ...] | None = None
    search_exhausted: bool = False


@dataclass(frozen=True)
class MaxRankResult:
    """Largest certified scalar rank; a lower bound when the search ran
    out of budget before settling the next rank."""

    rank: int
    exhausted: bool


@dataclass(frozen=True)
class TTHatResult:
    """Refined train-rank membership: the base rank is in the set and
    some componentwise-larger valid rank with a strictly larger last
    component is too."""

    member: bool | None
    base: SMembership
    dominating: tuple[int, ...] | None
    search_exhausted: bool


@dataclass(frozen=True)
class Certificate:
    """Machine-checkable statement about one (pattern, rank) pair."""

    model: str
    rank: RankSpec
    a_holds: bool | None
    b_holds: bool | None
    in_s: bool | None
    witness: tuple[int, ...] | None
    counterexample: tuple[int, ...] | None
    claim: str
    search_exhausted: bool
    success_floor: float | None = None
    p_threshold: float | None = None
    deficit: float | None = None

    def to_json(self) -> dict:
        out = {
            "model": self.model,
            "rank": self.rank.to_json(),
            "a_holds": self.a_holds,
            "b_holds": self.b_holds,
            "in_s": self.in_s,
            "witness": list(self.witness) if self.witness is not None else None,
            "counterexample": (list(self.counterexample)
                               if self.counterexample is not None else None),
            "claim": self.claim,
            "search_exhausted": self.search_exhausted,
        }
        for key in ("success_floor", "p_threshold", "deficit"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


def g_capacity(ms, x: int) -> int:
    """Capacity absorbed by ``x`` distinct positions across row budgets.

    Budgets are taken in descending order; position mass fills the
    largest budget first, each filled budget ``m`` contributing
    ``min(m, remaining) * m``.
    """
    total = 0
    acc = 0
    for m in sorted(ms, reverse=True):
        total += min(m, max(x - acc, 0)) * m
        acc += m
    return total


def _resolve(constraint: ConstraintStructure, rank):
    """Normalize the rank argument against the constraint's build rank.

    Returns the per-model number bundle the counting inequality needs.
    Multi-view constraints are built from view ranks alone, so there the
    joint rank must be supplied here.
    """
    model = constraint.model
    if model == "multi":
        if rank is None:
            raise ValueError("multi-view margins need the joint rank")
        r1, r2 = constraint.view_ranks
        if isinstance(rank, RankSpec):
            if rank.model != "multi" or rank.triple[:2] != (r1, r2):
                raise ValueError(
                    f"rank {rank} does not match build view ranks ({r1}, {r2})")
            r = rank.triple[2]
        else:
            r = int(rank)
        spec = RankSpec.multi(r1, r2, r)
        return spec, (r1, r2, r)
    built = constraint.rank
    if rank is not None:
        if isinstance(rank, RankSpec):
            if rank != built:
                raise ValueError(f"rank {rank} does not match build rank {built}")
        elif model in ("single", "cp"):
            if int(rank) != built.r:
                raise ValueError(f"rank {rank} does not match build rank {built.r}")
        else:
            raise ValueError(f"pass a full rank spec for the {model} model")
    if model == "single":
        return built, built.r
    if model == "cp":
        return built, (built.r, len(constraint.dims))
    if model == "tucker":
        return built, (built.ms, built.split)
    if model == "tt":
        return built, built.us
    raise ValueError(f"unknown model {model!r}")


def required_b_size(constraint: ConstraintStructure, rank=None) -> int:
    """Witness size ``K`` the membership condition prescribes."""
    spec, nums = _resolve(constraint, rank)
    dims = constraint.dims
    model = constraint.model
    if model == "single":
        r = nums
        return dims[0] * r - r * r
    if model == "multi":
        r1, r2, r = nums
        n = dims[0]
        return n * r - r * r - r1 * r1 - r2 * r2 + r * (r1 + r2)
    if model == "cp":
        r, d = nums
        return r * sum(dims[:-1]) - r * r - r * (d - 2)
    if model == "tucker":
        ms, split = nums
        lead = math.prod(dims[:split])
        return lead * math.prod(ms) - sum(m * m for m in ms)
    us = nums
    ext = (1, *us)
    return sum(ext[i] * dims[i] * us[i] for i in range(len(us))) - sum(
        u * u for u in us)


def _lhs_fn(constraint: ConstraintStructure, nums):
    """Counting-inequality left side as a function of OR-composed
    per-channel masks."""
    model = constraint.model
    if model == "single":
        r = nums

        def lhs(ov):
            return r * ov[0].bit_count() - r * r
    elif model == "multi":
        r1, r2, r = nums

        def lhs(ov):
            f_all = ov[0].bit_count()
            f1 = ov[1].bit_count()
            f2 = ov[2].bit_count()
            joint = r1 + r2 - r
            return ((r - r2) * max(f1 - r1, 0)
                    + (r - r1) * max(f2 - r2, 0)
                    + joint * max(f_all - joint, 0))
    elif model == "cp":
        r, d = nums

        def lhs(ov):
            fs = [m.bit_count() for m in ov]
            return r * (sum(fs) - min(max(fs), r) - (d - 2))
    elif model == "tucker":
        ms, _ = nums
        cap = math.prod(ms)

        def lhs(ov):
            f = ov[0].bit_count()
            return cap * f - g_capacity(ms, f)
    else:
        us = nums
        ext = (1, *us)

        def lhs(ov):
            total = 0
            for i, m in enumerate(ov):
                total += max(ext[i] * m.bit_count() * us[i] - us[i] * us[i], 0)
            return total
    return lhs


def sparsity_margin(constraint: ConstraintStructure, columns, rank=None) -> int:
    """Counting-inequality slack of a column selection.

    Returns left side minus the selection size; the selection passes
    exactly when the margin is non-negative.  The selection must be
    non-empty.
    """
    cols = sorted(set(int(c) for c in columns))
    if not cols:
        raise ValueError("margin is undefined for an empty selection")
    n = constraint.num_columns
    if cols[0] < 0 or cols[-1] >= n:
        raise ValueError(f"column index out of range 0..{n - 1}")
    spec, nums = _resolve(constraint, rank)
    lhs = _lhs_fn(constraint, nums)
    ov = [0] * len(constraint.masks)
    for c in cols:
        for ch, masks in enumerate(constraint.masks):
            ov[ch] |= masks[c]
    return lhs(tuple(ov)) - len(cols)


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------


def _normalize_rank(pattern, rank) -> RankSpec:
    if isinstance(rank, RankSpec):
        return rank
    if isinstance(pattern, tuple):
        r1, r2, r = rank
        return RankSpec.multi(r1, r2, r)
    if pattern.order == 2:
        return RankSpec.single(int(rank))
    return RankSpec.cp(int(rank))


def check_assumption_A(pattern, rank) -> bool:
    """Observation-floor condition of the membership test.

    Matrix: every column holds at least ``r`` observed entries.  Slice
    models: every trailing-mode slice holds at least ``r`` (or the last
    train rank).  Multi-view: per view at its own rank, with ``pattern``
    given as a pair.  Tucker: an anchor set can be assembled from the
    observed entries.
    """
    rank = _normalize_rank(pattern, rank)
    if rank.model == "multi":
        p1, p2 = pattern
        r1, r2, _ = rank.triple
        return (min(slice_counts(p1, 2)) >= r1
                and min(slice_counts(p2, 2)) >= r2)
    if rank.model == "single":
        return min(slice_counts(pattern, 2)) >= rank.r
    if rank.model == "cp":
        return min(slice_counts(pattern, pattern.order)) >= rank.r
    if rank.model == "tt":
        return min(slice_counts(pattern, pattern.order)) >= rank.us[-1]
    return select_tucker_anchor_set(pattern, rank.ms, rank.split) is not None


def _structured_single_witness(constraint: ConstraintStructure, r: int, k: int):
    """Fast path for matrix constraints: a witness whose columns share
    one base row set, with exactly ``r`` columns per remaining row.

    Any sub-subset of such a witness touches the ``r`` base rows plus
    its own extras, and contributes at most ``r`` columns per extra, so
    every counting inequality holds with no enumeration.
    """
    n1 = constraint.dims[0]
    groups = {}
    for idx, mask in enumerate(constraint.masks[0]):
        rows = []
        m = mask
        while m:
            low = m & -m
            rows.append(low.bit_length() - 1)
            m ^= low
        base, extra = tuple(rows[:r]), rows[r]
        groups.setdefault(base, {}).setdefault(extra, []).append(idx)
    for base in sorted(groups):
        per_extra = groups[base]
        extras = [x for x in range(n1) if x not in base]
        if all(len(per_extra.get(x, ())) >= r for x in extras):
            witness = []
            for x in extras:
                witness.extend(per_extra[x][:r])
            witness = tuple(sorted(witness))
            assert len(witness) == k
            return witness
    return None


def _greedy_witness(col_masks, lhs, k: int):
    """Maximin greedy assembly: repeatedly add the column keeping every
    inequality satisfied with the largest worst-case slack, smallest
    index on ties.  Returns a verified witness or None."""
    ncols = len(col_masks)
    chosen = []
    profile = [tuple(0 for _ in col_masks[0])]
    for _ in range(k):
        best = None
        best_slack = -1
        for c in range(ncols):
            if c in chosen:
                continue
            cm = col_masks[c]
            slack = None
            for s, ov in enumerate(profile):
                merged = tuple(a | b for a, b in zip(ov, cm))
                margin = lhs(merged) - (s.bit_count() + 1)
                if margin < 0:
                    slack = -1
                    break
                if slack is None or margin < slack:
                    slack = margin
            if slack is not None and slack > best_slack:
                best, best_slack = c, slack
        if best is None or best_slack < 0:
            return None
        cm = col_masks[best]
        profile += [tuple(a | b for a, b in zip(ov, cm)) for ov in list(profile)]
        chosen.append(best)
    return tuple(sorted(chosen))


def check_assumption_B(constraint: ConstraintStructure, rank=None,
                       budget: int = DEFAULT_BUDGET) -> BSearchResult:
    """Witness-subset condition of the membership test.

    Searches for ``K`` constraint columns whose every non-empty
    sub-subset has non-negative margin.  ``K <= 0`` holds vacuously with
    an empty witness; fewer than ``K`` columns settles False.  The exact
    search is lexicographic backtracking over column indices, each
    extension re-checked against all sub-subsets of the partial choice;
    ``budget`` caps the number of sub-subset margin checks, which also
    bounds the memory the subset bookkeeping can take, and running out
    yields ``holds=None``.
    """
    spec, nums = _resolve(constraint, rank)
    k = required_b_size(constraint, rank)
    if k <= 0:
        return BSearchResult(True, (), None)
    ncols = constraint.num_columns
    if ncols < k:
        return BSearchResult(False, None, None)
    lhs = _lhs_fn(constraint, nums)
    if constraint.model == "single":
        witness = _structured_single_witness(constraint, nums, k)
        if witness is not None:
            return BSearchResult(True, witness, None)
    col_masks = [tuple(ch[c] for ch in constraint.masks) for c in range(ncols)]
    if k <= _GREEDY_MAX_K:
        witness = _greedy_witness(col_masks, lhs, k)
        if witness is not None:
            return BSearchResult(True, witness, None)

    chosen = []
    profile = [tuple(0 for _ in constraint.masks)]
    stack = [0]
    nodes = 0
    counterexample = None
    while stack:
        c = stack[-1]
        m = len(chosen)
        if c >= ncols or ncols - c < k - m:
            stack.pop()
            if chosen:
                chosen.pop()
                del profile[len(profile) // 2:]
                stack[-1] += 1
            continue
        cm = col_masks[c]
        ok = True
        for s, ov in enumerate(profile):
            nodes += 1
            if nodes > budget:
                return BSearchResult(None, None, None, nodes - 1, True)
            merged = tuple(a | b for a, b in zip(ov, cm))
            if lhs(merged) < s.bit_count() + 1:
                ok = False
                if counterexample is None:
                    bad = [chosen[i] for i in range(m) if s >> i & 1]
                    bad.append(c)
                    counterexample = tuple(sorted(bad))
                break
        if ok:
            if len(chosen) + 1 == k:
                return BSearchResult(True, tuple(chosen) + (c,), None, nodes)
            if len(profile) * 2 > _PROFILE_CAP:
                return BSearchResult(None, None, None, nodes, True)
            profile += [tuple(a | b for a, b in zip(ov, cm)) for ov in list(profile)]
            chosen.append(c)
            stack.append(c + 1)
        else:
            stack[-1] += 1
    return BSearchResult(False, None, counterexample, nodes)


# ---------------------------------------------------------------------------
# membership and certificates
# ---------------------------------------------------------------------------


def _build(pattern, rank: RankSpec, anchor=None) -> ConstraintStructure:
    if rank.model == "single":
        return build_constraint_matrix(pattern, rank.r)
    if rank.model == "multi":
        p1, p2 = pattern
        r1, r2, _ = rank.triple
        return build_constraint_matrix_multiview(p1, p2, r1, r2)
    if rank.model == "cp":
        return build_constraint_tensor_cp(pattern, rank.r)
    if rank.model == "tt":
        return build_constraint_tensor_tt(pattern, rank.us)
    if anchor is None:
        anchor = select_tucker_anchor_set(pattern, rank.ms, rank.split)
        if anchor is None:
            raise AssumptionError("no anchor set exists for this pattern")
    return build_constraint_tensor_tucker(pattern, rank, anchor)


def in_S_omega(pattern, rank, budget: int = DEFAULT_BUDGET,
               anchor=None) -> SMembership:
    """Membership of a rank in the certifiable set: the observation
    floor and the witness condition together.

    ``in_s`` is None when the witness search ran out of budget; the
    floor failing settles False without building constraints.
    """
    rank = _normalize_rank(pattern, rank)
    if isinstance(pattern, tuple):
        p1, p2 = pattern
        rank.validate_for_dims((p1.dims[0], p1.dims[1], p2.dims[1]))
    else:
        rank.validate_for_dims(pattern.dims)
    if not check_assumption_A(pattern, rank):
        return SMembership(a_holds=False, b_holds=None, in_s=False)
    constraint = _build(pattern, rank, anchor)
    joint = rank.triple[2] if rank.model == "multi" else None
    res = check_assumption_B(constraint, rank=joint, budget=budget)
    in_s = res.holds if res.holds is None else bool(res.holds)
    return SMembership(a_holds=True, b_holds=res.holds, in_s=in_s,
                       witness=res.witness, counterexample=res.counterexample,
                       search_exhausted=res.exhausted)


def max_scalar_rank(pattern: SamplingPattern, model: str = "single",
                    budget: int = DEFAULT_BUDGET) -> MaxRankResult:
    """Largest scalar rank in the certifiable set, by ascending scan.

    The scan stops at the first non-member, so isolated members above a
    gap (possible only where the required witness size drops to zero)
    are not reported.  An unknown (budget-limited) rank stops the scan
    and marks the result as a lower bound.
    """
    if model == "single":
        if pattern.order != 2:
            raise ValueError("scalar matrix rank needs a 2-way pattern")
        cap = min(pattern.dims)
    elif model == "cp":
        if pattern.order < 3:
            raise ValueError("the outer-product model needs at least 3 modes")
        total = pattern.total_cells
        cap = min(total // n for n in pattern.dims)
    else:
        raise ValueError(f"scalar rank scan supports single or cp, got {model!r}")
    best = 0
    exhausted = False
    for r in range(1, cap + 1):
        spec = RankSpec.single(r) if model == "single" else RankSpec.cp(r)
        res = in_S_omega(pattern, spec, budget=budget)
        if res.in_s is True:
            best = r
            continue
        if res.in_s is None:
            exhausted = True
        break
    return MaxRankResult(rank=best, exhausted=exhausted)


def tt_hat_membership(pattern: SamplingPattern, us,
                      budget: int = DEFAULT_BUDGET) -> TTHatResult:
    """Refined train-rank membership.

    The rank must be in the certifiable set and must be dominated by
    another valid member whose last component is strictly larger.
    Candidates are scanned in lexicographic order.
    """
    rank = RankSpec.tt(us)
    rank.validate_for_dims(pattern.dims)
    base = in_S_omega(pattern, rank, budget=budget)
    if base.in_s is not True:
        member = None if base.in_s is None else False
        return TTHatResult(member=member, base=base, dominating=None,
                           search_exhausted=base.search_exhausted)
    target = rank.us
    unknown = False
    for cand in valid_tt_ranks(pattern.dims):
        if cand == target or cand[-1] <= target[-1]:
            continue
        if any(c < u for c, u in zip(cand, target)):
            continue
        res = in_S_omega(pattern, RankSpec.tt(cand), budget=budget)
        if res.in_s is True:
            return TTHatResult(member=True, base=base, dominating=cand,
                               search_exhausted=base.search_exhausted)
        if res.in_s is None:
            unknown = True
    return TTHatResult(member=None if unknown else False, base=base,
                       dominating=None,
                       search_exhausted=base.search_exhausted or unknown)


def certify_bound(pattern, model: str, rank, minimal: bool = False,
                  budget: int = DEFAULT_BUDGET, anchor=None) -> Certificate:
    """Certificate for one (pattern, rank) pair.

    Membership yields ``upper_bound_with_prob_one`` (the true rank is at
    most this one almost surely), upgraded to ``exact_if_minimal`` when
    the caller vouches the rank came from a minimal completion.  For the
    train model membership means the refined set.
    """
    spec = _normalize_rank(pattern, rank)
    if spec.model != model:
        raise ValueError(f"rank {spec} does not fit model {model!r}")
    if model == "tt":
        hat = tt_hat_membership(pattern, spec.us, budget=budget)
        base = hat.base
        in_s = hat.member
        exhausted = hat.search_exhausted
        a_holds, b_holds = base.a_holds, base.b_holds
        witness, counterexample = base.witness, base.counterexample
    else:
        res = in_S_omega(pattern, spec, budget=budget, anchor=anchor)
        in_s = res.in_s
        exhausted = res.search_exhausted
        a_holds, b_holds = res.a_holds, res.b_holds
        witness, counterexample = res.witness, res.counterexample
    if in_s is True:
        claim = CLAIM_EXACT if minimal else CLAIM_UPPER
    else:
        claim = CLAIM_NONE
    return Certificate(model=model, rank=spec, a_holds=a_holds,
                       b_holds=b_holds, in_s=in_s, witness=witness,
                       counterexample=counterexample, claim=claim,
                       search_exhausted=exhausted)


# ---------------------------------------------------------------------------
# reference oracle
# ---------------------------------------------------------------------------


def _oracle_f_values(constraint: ConstraintStructure, cols):
    """Distinct-row counts straight from the dense body, one per model
    channel, bypassing the mask machinery."""
    body = constraint.body
    sub = body[..., list(cols)]
    model = constraint.model
    if model in ("single", "multi"):
        outs = [int(np.any(sub, axis=1).sum())]
        if model == "multi":
            views = constraint.view_of_column
            for v in (1, 2):
                keep = [i for i, c in enumerate(cols) if views[c] == v]
                if keep:
                    outs.append(int(np.any(sub[:, keep], axis=1).sum()))
                else:
                    outs.append(0)
        return outs
    if model == "tucker":
        flat = sub.reshape(-1, sub.shape[-1])
        return [int(np.any(flat, axis=1).sum())]
    lead = sub.ndim - 1
    return [int(np.any(np.moveaxis(sub, i, 0).reshape(sub.shape[i], -1),
                       axis=1).sum()) for i in range(lead)]


def _oracle_lhs(constraint: ConstraintStructure, nums, cols) -> int:
    model = constraint.model
    fs = _oracle_f_values(constraint, cols)
    if model == "single":
        r = nums
        return r * fs[0] - r * r
    if model == "multi":
        r1, r2, r = nums
        joint = r1 + r2 - r
        return ((r - r2) * max(fs[1] - r1, 0) + (r - r1) * max(fs[2] - r2, 0)
                + joint * max(fs[0] - joint, 0))
    if model == "cp":
        r, d = nums
        return r * (sum(fs) - min(max(fs), r) - (d - 2))
    if model == "tucker":
        ms, _ = nums
        return math.prod(ms) * fs[0] - g_capacity(ms, fs[0])
    us = nums
    ext = (1, *us)
    return sum(max(ext[i] * fs[i] * us[i] - us[i] * us[i], 0)
               for i in range(len(us)))


def brute_force_B_oracle(constraint: ConstraintStructure, rank=None) -> bool:
    """Literal enumeration of the witness condition, for cross-checking.

    Tries every ``K``-subset of columns and, inside each, every
    non-empty sub-subset, computing capacities from the dense body.
    Refuses constraints wider than 20 columns.
    """
    ncols = constraint.num_columns
    if ncols > 20:
        raise ValueError(f"oracle refuses {ncols} columns (limit 20)")
    spec, nums = _resolve(constraint, rank)
    k = required_b_size(constraint, rank)
    if k <= 0:
        return True
    if ncols < k:
        return False
    for cand in itertools.combinations(range(ncols), k):
        good = True
        for size in range(1, k + 1):
            for sub in itertools.combinations(cand, size):
                if _oracle_lhs(constraint, nums, sub) < size:
                    good = False
                    break
            if not good:
                break
        if good:
            return True
    return False

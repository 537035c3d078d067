"""Constraint structures derived from sampling patterns.

Observed entries beyond a small base set each contribute one column (or
slice) of a binary constraint structure.  For a matrix pattern and rank
``r``, every column of the pattern with ``l >= r`` observed rows yields
``l - r`` constraint columns: each takes the ``r`` lexicographically
smallest observed rows as the base and adds one of the remaining rows,
so every constraint column carries exactly ``r + 1`` ones.  The tensor
constructions work the same way on trailing-mode slices, and the Tucker
construction replaces the per-slice base with a globally chosen anchor
set.

Column counts obey exact identities: ``K = N_obs - n2*r`` for matrices,
``K = N_obs - r*n_d`` slicewise, and ``K = N_obs - |anchor|`` for the
Tucker build.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .patterns import SamplingPattern, coords_by_slice, write_pattern, _ravel
from .ranks import RankSpec, tt_rank_is_valid

__all__ = [
    "AssumptionError",
    "ConstraintStructure",
    "AnchorSet",
    "build_constraint_matrix",
    "build_constraint_matrix_multiview",
    "build_constraint_tensor_cp",
    "build_constraint_tensor_tt",
    "build_constraint_tensor_tucker",
    "select_tucker_anchor_set",
    "anchor_condition_holds",
    "write_constraint",
    "write_anchor_set",
]


class AssumptionError(ValueError):
    """Raised when a pattern lacks the per-column or per-slice observation
    counts the construction needs."""


@dataclass(frozen=True, eq=False)
class ConstraintStructure:
    """Binary constraint structure with build provenance.

    ``body`` has the pattern's leading mode sizes plus a final axis
    indexing the constraint columns/slices.  ``base_choices`` records,
    per source column / slice / fiber, the observed entries used as the
    base.  ``masks`` holds per-channel row bitmasks per column; they feed
    the counting inequalities and are derived from ``body``.
    """

    model: str
    dims: tuple[int, ...]
    body: np.ndarray
    rank: RankSpec | None
    view_ranks: tuple[int, int] | None = None
    base_choices: dict = field(default_factory=dict)
    view_of_column: tuple[int, ...] | None = None
    anchor: "AnchorSet | None" = None
    masks: tuple = ()

    def __post_init__(self):
        self.body.flags.writeable = False

    @property
    def num_columns(self) -> int:
        return int(self.body.shape[-1])


def _single_columns(pattern: SamplingPattern, r: int, label: str):
    """Per-column base/extra decomposition shared by the matrix builders."""
    n1, n2 = pattern.dims
    groups = coords_by_slice(pattern, 2)
    specs = []
    base_choices = {}
    for j in range(n2):
        rows = [c[0] for c in groups[j]]
        if len(rows) < r:
            raise AssumptionError(
                f"{label} {j} has {len(rows)} observed entries, fewer than rank {r}")
        base = tuple(rows[:r])
        base_choices[j] = tuple((x, j) for x in base)
        for extra in rows[r:]:
            specs.append((j, base, extra))
    return specs, base_choices


def _single_body(n1: int, specs):
    body = np.zeros((n1, len(specs)), dtype=np.uint8)
    row_masks = []
    for k, (_, base, extra) in enumerate(specs):
        mask = 0
        for x in (*base, extra):
            body[x, k] = 1
            mask |= 1 << x
        row_masks.append(mask)
    return body, tuple(row_masks)


def build_constraint_matrix(pattern: SamplingPattern, r: int) -> ConstraintStructure:
    """Constraint matrix of a matrix pattern at rank ``r``.

    Requires every pattern column to hold at least ``r`` observed rows.
    Columns are emitted source-column by source-column, extras in
    ascending row order, so the build is a deterministic function of the
    pattern.
    """
    if pattern.order != 2:
        raise ValueError("matrix construction needs a 2-way pattern")
    r = int(r)
    if r < 1:
        raise ValueError(f"rank must be at least 1, got {r}")
    rank = RankSpec.single(r)
    rank.validate_for_dims(pattern.dims)
    specs, base_choices = _single_columns(pattern, r, "column")
    body, row_masks = _single_body(pattern.dims[0], specs)
    return ConstraintStructure(
        model="single", dims=pattern.dims, body=body, rank=rank,
        base_choices=base_choices, masks=(row_masks,))


def build_constraint_matrix_multiview(pattern1: SamplingPattern,
                                      pattern2: SamplingPattern,
                                      r1: int, r2: int) -> ConstraintStructure:
    """Side-by-side constraint matrix for two views sharing their rows.

    Each view is processed exactly like the single-view construction at
    its own rank; the results are concatenated view 1 first, and the
    originating view of every column is recorded.  A degenerate view
    rank of 0 keeps every observed entry of that view as a one-point
    column.
    """
    if pattern1.order != 2 or pattern2.order != 2:
        raise ValueError("multi-view construction needs two 2-way patterns")
    if pattern1.dims[0] != pattern2.dims[0]:
        raise ValueError(
            f"views share rows, got {pattern1.dims[0]} and {pattern2.dims[0]}")
    r1, r2 = int(r1), int(r2)
    if r1 < 0 or r2 < 0:
        raise ValueError(f"view ranks must be non-negative, got ({r1}, {r2})")
    n = pattern1.dims[0]
    try:
        specs1, base1 = _single_columns(pattern1, r1, "column")
    except AssumptionError as e:
        raise AssumptionError(f"view 1: {e}") from None
    try:
        specs2, base2 = _single_columns(pattern2, r2, "column")
    except AssumptionError as e:
        raise AssumptionError(f"view 2: {e}") from None
    body1, masks1 = _single_body(n, specs1)
    body2, masks2 = _single_body(n, specs2)
    body = np.concatenate([body1, body2], axis=1)
    base_choices = {(1, j): v for j, v in base1.items()}
    base_choices.update({(2, j): v for j, v in base2.items()})
    all_masks = masks1 + masks2
    view1_masks = masks1 + (0,) * len(masks2)
    view2_masks = (0,) * len(masks1) + masks2
    return ConstraintStructure(
        model="multi",
        dims=(n, pattern1.dims[1], pattern2.dims[1]),
        body=body, rank=None, view_ranks=(r1, r2),
        base_choices=base_choices,
        view_of_column=(1,) * len(specs1) + (2,) * len(specs2),
        masks=(all_masks, view1_masks, view2_masks))


def _slicewise(pattern: SamplingPattern, r: int):
    """Trailing-mode slice construction shared by the CP and train builds."""
    d = pattern.order
    dims = pattern.dims
    groups = coords_by_slice(pattern, d)
    specs = []
    base_choices = {}
    for t in range(dims[-1]):
        prefixes = [c[:-1] for c in groups[t]]
        if len(prefixes) < r:
            raise AssumptionError(
                f"slice {t} has {len(prefixes)} observed entries, fewer than {r}")
        base = tuple(prefixes[:r])
        base_choices[t] = tuple(p + (t,) for p in base)
        for extra in prefixes[r:]:
            specs.append((base, extra))
    body = np.zeros(dims[:-1] + (len(specs),), dtype=np.uint8)
    masks = [[] for _ in range(d - 1)]
    for k, (base, extra) in enumerate(specs):
        acc = [0] * (d - 1)
        for p in (*base, extra):
            body[p + (k,)] = 1
            for m in range(d - 1):
                acc[m] |= 1 << p[m]
        for m in range(d - 1):
            masks[m].append(acc[m])
    return body, base_choices, tuple(tuple(ms) for ms in masks)


def build_constraint_tensor_cp(pattern: SamplingPattern, r: int) -> ConstraintStructure:
    """Slicewise constraint tensor for the sum-of-outer-products model.

    Every trailing-mode slice needs at least ``r`` observed entries; it
    contributes one output slice per observed entry beyond the ``r``
    lexicographically smallest, carrying those ``r`` base positions plus
    the one extra.  Slices with exactly ``r`` observations contribute
    nothing.
    """
    if pattern.order < 3:
        raise ValueError("the outer-product model needs at least 3 modes")
    r = int(r)
    if r < 1:
        raise ValueError(f"rank must be at least 1, got {r}")
    rank = RankSpec.cp(r)
    rank.validate_for_dims(pattern.dims)
    body, base_choices, masks = _slicewise(pattern, r)
    return ConstraintStructure(
        model="cp", dims=pattern.dims, body=body, rank=rank,
        base_choices=base_choices, masks=masks)


def build_constraint_tensor_tt(pattern: SamplingPattern, us) -> ConstraintStructure:
    """Slicewise constraint tensor for the train model.

    Structurally identical to the outer-product construction with the
    last train rank ``u_{d-1}`` playing the role of ``r``.
    """
    if pattern.order < 3:
        raise ValueError("the train model needs at least 3 modes")
    rank = RankSpec.tt(us)
    rank.validate_for_dims(pattern.dims)
    body, base_choices, masks = _slicewise(pattern, rank.us[-1])
    return ConstraintStructure(
        model="tt", dims=pattern.dims, body=body, rank=rank,
        base_choices=base_choices, masks=masks)


# ---------------------------------------------------------------------------
# anchor sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnchorSet:
    """A set of ``sum(n_i * m_i)`` observed entries over the trailing
    modes' row budgets.

    The set must admit, for every family of row subsets ``S_i`` of the
    trailing modes, at most ``sum(|S_i| * m_i)`` entries whose trailing
    coordinates fall inside every chosen ``S_i``.  Feasibility is
    equivalent to assigning each entry to one of its trailing (mode,
    row) slots with each row of mode ``i`` hosting at most ``m_i``
    entries.
    """

    dims: tuple[int, ...]
    ms: tuple[int, ...]
    split: int
    entries: frozenset

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        ms = tuple(int(m) for m in self.ms)
        split = int(self.split)
        d = len(dims)
        if not 1 <= split <= d - 1:
            raise ValueError(f"split {split} out of range for order {d}")
        if len(ms) != d - split or any(m < 1 for m in ms):
            raise ValueError(f"expected {d - split} positive budgets, got {ms}")
        entries = frozenset(tuple(int(x) for x in c) for c in self.entries)
        for c in entries:
            if len(c) != d or any(not 0 <= x < n for x, n in zip(c, dims)):
                raise ValueError(f"anchor entry {c} out of range for dims {dims}")
        want = sum(n * m for n, m in zip(dims[split:], ms))
        if len(entries) != want:
            raise ValueError(f"anchor set has {len(entries)} entries, expected {want}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "ms", ms)
        object.__setattr__(self, "split", split)
        object.__setattr__(self, "entries", entries)

    def sorted_entries(self) -> list:
        return sorted(self.entries)


def select_tucker_anchor_set(pattern: SamplingPattern, ms, split: int):
    """Choose an anchor set from the observed entries, or return None.

    Builds a bipartite matching between slot units ((mode, row) repeated
    ``m_i`` times) and observed entries, an entry being eligible for the
    slots its own trailing coordinates name.  Saturating every slot unit
    is equivalent to the subset condition, so the matched entries form a
    valid anchor set and failure to saturate proves none exists.
    Greedy assignment with augmenting-path repair; deterministic.
    """
    dims = pattern.dims
    d = len(dims)
    split = int(split)
    if not 1 <= split <= d - 1:
        raise ValueError(f"split {split} out of range for order {d}")
    ms = tuple(int(m) for m in ms)
    if len(ms) != d - split or any(m < 1 for m in ms):
        raise ValueError(f"expected {d - split} positive budgets, got {ms}")
    entries = pattern.sorted_coords()
    want = sum(n * m for n, m in zip(dims[split:], ms))
    if len(entries) < want:
        return None

    by_slot = {}
    for idx, c in enumerate(entries):
        for i in range(split, d):
            by_slot.setdefault((i, c[i]), []).append(idx)

    owner = {}  # entry index -> slot unit currently holding it

    def assign(unit, slot, seen):
        for idx in by_slot.get(slot, ()):
            if idx in seen:
                continue
            seen.add(idx)
            held = owner.get(idx)
            if held is None or assign(held, held[0], seen):
                owner[idx] = (unit, slot)
                return True
        return False

    for i in range(split, d):
        for t in range(dims[i]):
            for copy in range(ms[i - split]):
                unit = ((i, t), copy)
                if not assign(unit, (i, t), set()):
                    return None
    chosen = frozenset(entries[idx] for idx in owner)
    return AnchorSet(dims=dims, ms=ms, split=split, entries=chosen)


def anchor_condition_holds(anchor: AnchorSet) -> bool:
    """Exhaustively verify the subset condition of an anchor set.

    Enumerates every family of row subsets over the trailing modes and
    checks the entry count against the capacity ``sum(|S_i| * m_i)``.
    Intended for small mode sizes; refuses past 2^22 subset families.
    """
    dims = anchor.dims
    split = anchor.split
    trailing = dims[split:]
    count = math.prod(2 ** n for n in trailing)
    if count > 1 << 22:
        raise ValueError(f"refusing exhaustive verification over {count} subset families")
    entries = anchor.sorted_entries()
    mode_subsets = []
    for n in trailing:
        subs = []
        for size in range(n + 1):
            subs.extend(frozenset(c) for c in itertools.combinations(range(n), size))
        mode_subsets.append(subs)
    for family in itertools.product(*mode_subsets):
        cap = sum(len(s) * m for s, m in zip(family, anchor.ms))
        hits = 0
        for c in entries:
            if all(c[split + i] in s for i, s in enumerate(family)):
                hits += 1
        if hits > cap:
            return False
    return True


def build_constraint_tensor_tucker(pattern: SamplingPattern, rank: RankSpec,
                                   anchor: AnchorSet) -> ConstraintStructure:
    """Fiberwise constraint tensor relative to a fixed anchor set.

    Observed entries are grouped by their trailing coordinates (one
    fiber per combination); every observed non-anchor entry of a fiber
    yields one output slice carrying the fiber's anchor entries plus
    that entry, all placed at their leading-coordinate positions.
    """
    if rank.model != "tucker":
        raise ValueError(f"expected a tucker rank, got model {rank.model!r}")
    if pattern.order < 3:
        raise ValueError("the tucker model needs at least 3 modes")
    rank.validate_for_dims(pattern.dims)
    j = rank.split
    if anchor.dims != pattern.dims or anchor.split != j or anchor.ms != rank.ms:
        raise ValueError("anchor set does not match the pattern and rank")
    if not anchor.entries <= pattern.observed:
        missing = min(anchor.entries - pattern.observed)
        raise ValueError(f"anchor entry {missing} is not observed")
    dims = pattern.dims
    groups = {}
    for c in pattern.sorted_coords():
        groups.setdefault(c[j:], []).append(c)
    specs = []
    base_choices = {}
    for suffix in sorted(groups):
        pts = groups[suffix]
        anchors_in = tuple(c for c in pts if c in anchor.entries)
        base_choices[suffix] = anchors_in
        for extra in (c for c in pts if c not in anchor.entries):
            specs.append((anchors_in, extra))
    body = np.zeros(dims[:j] + (len(specs),), dtype=np.uint8)
    prefix_masks = []
    for k, (anchors_in, extra) in enumerate(specs):
        mask = 0
        for c in (*anchors_in, extra):
            body[c[:j] + (k,)] = 1
            mask |= 1 << _ravel(c[:j], dims[:j])
        prefix_masks.append(mask)
    return ConstraintStructure(
        model="tucker", dims=dims, body=body, rank=rank,
        base_choices=base_choices, anchor=anchor, masks=(tuple(prefix_masks),))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _rank_header(constraint: ConstraintStructure) -> list[str]:
    lines = []
    if constraint.model == "multi":
        r1, r2 = constraint.view_ranks
        lines.append(f"rank: {r1} {r2}")
        split_at = sum(1 for v in constraint.view_of_column if v == 1)
        lines.append(f"view-split: {split_at}")
    elif constraint.model == "tucker":
        lines.append("rank: " + " ".join(str(m) for m in constraint.rank.ms))
        lines.append(f"split: {constraint.rank.split}")
    elif constraint.model == "tt":
        lines.append("rank: " + " ".join(str(u) for u in constraint.rank.us))
    else:
        lines.append(f"rank: {constraint.rank.r}")
    return lines


def write_constraint(constraint: ConstraintStructure, path, comments=()) -> None:
    """Write a constraint structure as a coordinate list.

    The format extends the pattern file with ``model:``, ``rank:`` and
    ``K:`` headers (plus ``split:`` or ``view-split:`` where the model
    needs them); the body's nonzero positions follow, last axis being
    the constraint column index.  ``comments`` lines are written first,
    '#'-prefixed.
    """
    body = constraint.body
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(f"model: {constraint.model}\n")
        for line in _rank_header(constraint):
            fh.write(line + "\n")
        fh.write(f"K: {constraint.num_columns}\n")
        fh.write("dims: " + " ".join(str(n) for n in body.shape) + "\n")
        for coord in sorted(map(tuple, np.argwhere(body))):
            fh.write(" ".join(str(int(x)) for x in coord) + "\n")


def write_anchor_set(anchor: AnchorSet, path, comments=()) -> None:
    """Write an anchor set as an ordinary pattern file of its entries."""
    write_pattern(SamplingPattern(anchor.dims, anchor.entries), path,
                  comments=comments)

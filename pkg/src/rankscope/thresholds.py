"""Closed-form sampling-probability thresholds and success floors.

Each model has a threshold: sampling above it makes the membership
conditions hold with probability at least a floor of the form
``(1-eps)*(1-exp(-sqrt(x)/2))**exponent``.  Logarithms are natural, the
threshold comparison is strict, and floors are computed in log space so
large exponents do not underflow.  Structural preconditions are
evaluated and reported by name, never raised.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .ranks import RankSpec

__all__ = [
    "ThresholdReport",
    "MinEpsilonResult",
    "HeatmapTable",
    "success_floor",
    "required_prob_single",
    "required_prob_cp",
    "required_prob_multiview",
    "required_prob_tucker",
    "required_prob_tt",
    "min_epsilon_single",
    "heatmap_single",
]


@dataclass(frozen=True)
class ThresholdReport:
    """One threshold evaluation: the probability bound, the floor it
    buys, and the named structural preconditions."""

    model: str
    dims: tuple[int, ...]
    rank: RankSpec
    epsilon: float
    p_threshold: float
    preconditions: tuple[tuple[str, bool], ...]
    success_floor: float

    @property
    def preconditions_ok(self) -> bool:
        return all(ok for _, ok in self.preconditions)

    @property
    def failed_preconditions(self) -> tuple[str, ...]:
        return tuple(name for name, ok in self.preconditions if not ok)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "dims": list(self.dims),
            "rank": self.rank.to_json(),
            "epsilon": self.epsilon,
            "p_threshold": self.p_threshold,
            "preconditions": {name: ok for name, ok in self.preconditions},
            "preconditions_ok": self.preconditions_ok,
            "success_floor": self.success_floor,
        }


@dataclass(frozen=True)
class MinEpsilonResult:
    """Smallest failure level making the matrix threshold hold, or the
    named reason none exists."""

    feasible: bool
    epsilon: float | None
    reason: str | None

    def to_json(self) -> dict:
        return {"feasible": self.feasible, "epsilon": self.epsilon,
                "reason": self.reason}


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0,1), got {epsilon}")
    return epsilon


def success_floor(epsilon: float, x: float, exponent: float) -> float:
    """``(1-eps)*(1-exp(-sqrt(x)/2))**exponent`` in log space.

    Accepts ``epsilon`` in [0,1); callers evaluating at a boundary
    failure level get exact zero at 1.
    """
    if epsilon >= 1:
        return 0.0
    if not epsilon >= 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    log_val = exponent * math.log1p(-math.exp(-math.sqrt(x) / 2))
    log_val += math.log1p(-epsilon)
    return math.exp(log_val)


def required_prob_single(n1: int, n2: int, r: int, epsilon: float) -> ThresholdReport:
    """Matrix sampling threshold and floor.

    Threshold: (1/n1) * max{12 ln(n1/eps) + 12, 2r} + n1^(-1/4).
    Floor exponent is the column count.
    """
    epsilon = _check_epsilon(epsilon)
    n1, n2, r = int(n1), int(n2), int(r)
    if n1 < 1 or n2 < 1 or r < 1:
        raise ValueError("sizes and rank must be positive")
    pre = (
        ("rank_at_most_sixth_of_rows", r <= n1 / 6),
        ("enough_columns_for_witness", r * (n1 - r) <= n2),
    )
    p = (max(12 * math.log(n1 / epsilon) + 12, 2 * r) / n1) + n1 ** -0.25
    return ThresholdReport(model="single", dims=(n1, n2),
                           rank=RankSpec.single(r), epsilon=epsilon,
                           p_threshold=p, preconditions=pre,
                           success_floor=success_floor(epsilon, n1, n2))


def required_prob_cp(n: int, d: int, r: int, epsilon: float) -> ThresholdReport:
    """Outer-product threshold for equal mode sizes.

    Threshold: (1/n^(d-2)) * max{27 ln(n/eps) + 9 ln(2r(d-2)/eps) + 18,
    6r} + (n^(d-2))^(-1/4).  Floor exponent n^2.
    """
    epsilon = _check_epsilon(epsilon)
    n, d, r = int(n), int(d), int(r)
    if d <= 2:
        raise ValueError(f"the outer-product bound needs d > 2, got {d}")
    if n < 1 or r < 1:
        raise ValueError("size and rank must be positive")
    pre = (
        ("size_over_200", n > 200),
        ("size_over_rank_spread", n > r * (d - 2)),
        ("rank_at_most_sixth", r <= n / 6),
    )
    bulk = n ** (d - 2)
    log_term = (27 * math.log(n / epsilon)
                + 9 * math.log(2 * r * (d - 2) / epsilon) + 18)
    p = max(log_term, 6 * r) / bulk + bulk ** -0.25
    return ThresholdReport(model="cp", dims=(n,) * d, rank=RankSpec.cp(r),
                           epsilon=epsilon, p_threshold=p, preconditions=pre,
                           success_floor=success_floor(epsilon, bulk, n * n))


def required_prob_multiview(n: int, n1: int, n2: int, r1: int, r2: int,
                            r: int, epsilon: float) -> ThresholdReport:
    """Two-view threshold over the shared row count.

    Threshold: (1/n) * max{9 ln(n/eps) + 3 ln(3 max{r-r2, r-r1,
    r1+r2-r}/eps) + 6, 2 r1, 2 r2} + n^(-1/4).  Floor exponent is the
    total column count of both views.
    """
    epsilon = _check_epsilon(epsilon)
    n, n1, n2 = int(n), int(n1), int(n2)
    rank = RankSpec.multi(r1, r2, r)
    r1, r2, r = rank.triple
    joint = r1 + r2 - r
    pre = (
        ("ranks_at_most_sixth_of_rows", n / 6 >= max(r1, r2, joint)),
        ("view1_wide_enough", n1 >= (r - r2) * (n - r1)),
        ("view2_wide_enough", n2 >= (r - r1) * (n - r2)),
        ("total_width_enough",
         n1 + n2 >= (r - r2) * (n - r1) + (r - r1) * (n - r2)
         + joint * (n - joint)),
    )
    spread = max(r - r2, r - r1, joint)
    log_term = (9 * math.log(n / epsilon)
                + 3 * math.log(3 * spread / epsilon) + 6)
    p = max(log_term, 2 * r1, 2 * r2) / n + n ** -0.25
    return ThresholdReport(model="multi", dims=(n, n1, n2), rank=rank,
                           epsilon=epsilon, p_threshold=p, preconditions=pre,
                           success_floor=success_floor(epsilon, n, n1 + n2))


def required_prob_tucker(dims, j: int, rank, epsilon: float) -> ThresholdReport:
    """Split-tensor threshold over the leading-block size.

    With N the leading mode-size product and the trailing budgets m_i:
    (1/N)(6 ln N + 2 ln(max{2 sum m_i^2, 2 prod m_i - 2 sum m_i^2}/eps)
    + 4) + N^(-1/4).  Floor exponent is the trailing mode-size product.
    """
    epsilon = _check_epsilon(epsilon)
    dims = tuple(int(x) for x in dims)
    d = len(dims)
    j = int(j)
    if not 1 <= j <= d - 1:
        raise ValueError(f"split {j} out of range for order {d}")
    spec = rank if isinstance(rank, RankSpec) else RankSpec.tucker(rank, j)
    if spec.model != "tucker" or spec.split != j or len(spec.ms) != d - j:
        raise ValueError(f"rank {spec} does not fit split {j} of order {d}")
    ms = spec.ms
    lead = math.prod(dims[:j])
    trail = math.prod(dims[j:])
    sum_sq = sum(m * m for m in ms)
    prod_m = math.prod(ms)
    pre = (
        ("budget_squares_within_product", sum_sq <= prod_m),
        ("trailing_space_enough", trail >= lead * prod_m - sum_sq),
        ("budget_product_within_leading", prod_m <= lead),
    )
    log_arg = max(2 * sum_sq, 2 * prod_m - 2 * sum_sq) / epsilon
    p = (6 * math.log(lead) + 2 * math.log(log_arg) + 4) / lead + lead ** -0.25
    return ThresholdReport(model="tucker", dims=dims, rank=spec,
                           epsilon=epsilon, p_threshold=p, preconditions=pre,
                           success_floor=success_floor(epsilon, lead, trail))


def required_prob_tt(n: int, d: int, us, epsilon: float) -> ThresholdReport:
    """Train threshold for equal mode sizes.

    With m the adjacent-link mass, M its size-weighted form, and u' the
    largest link growth ratio: (1/n^(d-2)) * max{27 ln(n/eps) +
    9 ln(2M/eps) + 18, 6 u_{d-2}} + (n^(d-2))^(-1/4).  Floor exponent
    n^2.
    """
    epsilon = _check_epsilon(epsilon)
    n, d = int(n), int(d)
    if d <= 2:
        raise ValueError(f"the train bound needs d > 2, got {d}")
    spec = us if isinstance(us, RankSpec) else RankSpec.tt(us)
    if spec.model != "tt" or len(spec.us) != d - 1:
        raise ValueError(f"rank {spec} does not fit order {d}")
    spec.validate_for_dims((n,) * d)
    ext = (1, *spec.us)
    mass = sum(ext[k - 1] * ext[k] for k in range(1, d - 1))
    weighted = n * mass - sum(ext[k] * ext[k] for k in range(1, d - 1))
    if weighted <= 0:
        raise ValueError("degenerate link mass for this rank vector")
    ratio = max(ext[k] / ext[k - 1] for k in range(1, d - 1))
    pre = (
        ("size_over_200", n > 200),
        ("size_over_link_mass", n > mass),
        ("growth_ratio_small_enough", ratio <= min(n / 6, ext[d - 2])),
    )
    bulk = n ** (d - 2)
    log_term = (27 * math.log(n / epsilon)
                + 9 * math.log(2 * weighted / epsilon) + 18)
    p = max(log_term, 6 * ext[d - 2]) / bulk + bulk ** -0.25
    return ThresholdReport(model="tt", dims=(n,) * d, rank=spec,
                           epsilon=epsilon, p_threshold=p, preconditions=pre,
                           success_floor=success_floor(epsilon, bulk, n * n))


def min_epsilon_single(n1: int, p: float, r: int) -> MinEpsilonResult:
    """Invert the matrix threshold in the failure level.

    The log branch is the only part that moves with epsilon, so the
    infimum solves 12 ln(n1/eps) + 12 = n1 (p - n1^(-1/4)) in closed
    form.  Infeasible when the rank branch already blocks the strict
    comparison, or when the solution would reach 1.
    """
    n1, r = int(n1), int(r)
    p = float(p)
    if not 0 < p <= 1:
        raise ValueError(f"sampling probability must lie in (0,1], got {p}")
    if n1 < 1 or r < 1:
        raise ValueError("size and rank must be positive")
    target = n1 * (p - n1 ** -0.25)
    if 2 * r >= target:
        return MinEpsilonResult(False, None, "rank_branch_blocks")
    eps = n1 * math.exp(-(target - 12) / 12)
    if eps >= 1:
        return MinEpsilonResult(False, None, "no_epsilon_below_one")
    return MinEpsilonResult(True, eps, None)


@dataclass(frozen=True)
class HeatmapTable:
    """Success floors over a (probability, rank) grid, row per
    probability in grid order."""

    n1: int
    n2: int
    ps: tuple[float, ...]
    rs: tuple[int, ...]
    floors: tuple[tuple[float, ...], ...]

    def iter_cells(self):
        for p, row in zip(self.ps, self.floors):
            for r, val in zip(self.rs, row):
                yield p, r, val

    def to_json(self) -> dict:
        return {"n1": self.n1, "n2": self.n2, "p_grid": list(self.ps),
                "r_grid": list(self.rs),
                "floors": [list(row) for row in self.floors]}


def heatmap_single(n1: int, n2: int, p_grid, r_grid,
                   workers: int | None = None) -> HeatmapTable:
    """Floor at the smallest feasible failure level per grid cell.

    Infeasible cells are exact zero.  Rows are computed independently
    (optionally across threads) and assembled in grid order.
    """
    ps = tuple(float(p) for p in p_grid)
    rs = tuple(int(r) for r in r_grid)
    if not ps or not rs:
        raise ValueError("grids must be non-empty")
    for p in ps:
        if not 0 < p <= 1:
            raise ValueError(f"sampling probability must lie in (0,1], got {p}")

    def row(p):
        out = []
        for r in rs:
            res = min_epsilon_single(n1, p, r)
            if res.feasible:
                out.append(success_floor(res.epsilon, n1, n2))
            else:
                out.append(0.0)
        return tuple(out)

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            floors = tuple(pool.map(row, ps))
    else:
        floors = tuple(row(p) for p in ps)
    return HeatmapTable(n1=int(n1), n2=int(n2), ps=ps, rs=rs, floors=floors)

"""Synthetic data, a nuclear-norm completion solver, and the
rank-estimation pipeline.

Generators draw factor entries uniformly from [0, 1) and store both the
dense array and the factors.  The solver is iterative singular-value
shrinkage for the matrix case; tensor completions are ingested rather
than solved, and their ranks are read off matricizations or unfoldings.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .certify import (
    CLAIM_NONE,
    CLAIM_UPPER,
    DEFAULT_BUDGET,
    Certificate,
    certify_bound,
)
from .patterns import (
    ObservedData,
    SamplingPattern,
    bernoulli_pattern,
    derive_seed,
    matricize_array,
    observed_from_array,
    unfold_array,
)
from .ranks import RankSpec
from .thresholds import required_prob_single

__all__ = [
    "GroundTruth",
    "SolverParams",
    "CompletionResult",
    "GapRun",
    "GapResult",
    "random_low_rank_matrix",
    "random_cp_tensor",
    "random_tucker_tensor",
    "random_tt_tensor",
    "svt_complete",
    "numerical_rank",
    "tucker_rank_from_array",
    "tt_rank_from_array",
    "estimate_rank_pipeline",
    "gap_experiment",
]


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """A generated low-rank array with its factors and rank tag."""

    model: str
    dims: tuple[int, ...]
    rank: RankSpec
    array: np.ndarray
    factors: tuple


@dataclass(frozen=True)
class SolverParams:
    """Shrinkage-solver knobs.  ``tau`` and ``delta`` default per
    instance: 5*sqrt(n1*n2) and 1.2 over the observed fraction."""

    tau: float | None = None
    delta: float | None = None
    max_iterations: int = 500
    fit_tolerance: float = 1e-4
    rank_tolerance: float = 1e-6

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.delta is not None and not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if not self.fit_tolerance > 0:
            raise ValueError(f"fit_tolerance must be positive, got {self.fit_tolerance}")
        if not 0 < self.rank_tolerance < 1:
            raise ValueError(f"rank_tolerance must lie in (0,1), got {self.rank_tolerance}")


@dataclass(frozen=True, eq=False)
class CompletionResult:
    """Solver output: the completed array plus honest diagnostics.

    ``residual`` is the max-abs misfit on observed entries; ``monotone``
    records whether it decreased throughout the iteration.
    """

    completed: np.ndarray
    residual: float
    iterations: int
    converged: bool
    numerical_rank: int
    singular_values: tuple[float, ...]
    rank_tolerance: float
    monotone: bool


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def random_low_rank_matrix(n1: int, n2: int, r: int, seed: int) -> GroundTruth:
    """Product of uniform [0,1) factors of shapes (n1, r) and (r, n2)."""
    n1, n2, r = int(n1), int(n2), int(r)
    if not 1 <= r <= min(n1, n2):
        raise ValueError(f"rank {r} out of range for {n1}x{n2}")
    rng = np.random.default_rng(seed)
    a = rng.random((n1, r))
    b = rng.random((r, n2))
    return GroundTruth(model="single", dims=(n1, n2), rank=RankSpec.single(r),
                       array=a @ b, factors=(a, b))


def random_cp_tensor(dims, r: int, seed: int) -> GroundTruth:
    """Sum of ``r`` outer products of uniform [0,1) mode vectors.

    Factors are drawn in mode order, one (n_i, r) matrix per mode.
    """
    dims = tuple(int(n) for n in dims)
    rank = RankSpec.cp(r)
    rank.validate_for_dims(dims)
    rng = np.random.default_rng(seed)
    factors = tuple(rng.random((n, rank.r)) for n in dims)
    acc = factors[0]
    for f in factors[1:]:
        acc = acc[..., None, :] * f
    return GroundTruth(model="cp", dims=dims, rank=rank,
                       array=acc.sum(axis=-1), factors=factors)


def random_tucker_tensor(dims, ms, j: int, seed: int) -> GroundTruth:
    """Core-times-factors construction with orthonormal factor matrices.

    ``ms`` carries one budget per mode; the core is drawn uniform and
    each factor is the Q of a QR decomposition of a uniform draw (core
    first, then factors in mode order).  ``j`` picks which trailing
    budgets the rank tag keeps.  Each budget must stay within its mode
    size and within the product of the other budgets, otherwise the
    matricization ranks would fall below the tag.
    """
    dims = tuple(int(n) for n in dims)
    d = len(dims)
    ms = tuple(int(m) for m in ms)
    j = int(j)
    if len(ms) != d:
        raise ValueError(f"expected {d} budgets, got {len(ms)}")
    if not 1 <= j <= d - 1:
        raise ValueError(f"split {j} out of range for order {d}")
    total = math.prod(ms)
    for m, n in zip(ms, dims):
        if not 1 <= m <= n:
            raise ValueError(f"budget {m} out of range for mode size {n}")
        if m > total // m:
            raise ValueError(f"budget {m} exceeds the other budgets' product")
    rank = RankSpec.tucker(ms[j:], j)
    rank.validate_for_dims(dims)
    rng = np.random.default_rng(seed)
    core = rng.random(ms)
    mats = []
    for n, m in zip(dims, ms):
        q, _ = np.linalg.qr(rng.random((n, m)))
        mats.append(q)
    acc = core
    for i, t in enumerate(mats):
        acc = np.moveaxis(np.tensordot(t, acc, axes=(1, i)), 0, i)
    return GroundTruth(model="tucker", dims=dims, rank=rank,
                       array=acc, factors=(core, tuple(mats)))


def random_tt_tensor(dims, us, seed: int) -> GroundTruth:
    """Left-to-right contraction of uniform [0,1) train cores.

    Core ``i`` has shape (u_{i-1}, n_i, u_i) with end links of size one;
    cores are drawn in mode order.
    """
    dims = tuple(int(n) for n in dims)
    rank = RankSpec.tt(us)
    rank.validate_for_dims(dims)
    ext = (1, *rank.us, 1)
    rng = np.random.default_rng(seed)
    cores = tuple(rng.random((ext[i], dims[i], ext[i + 1]))
                  for i in range(len(dims)))
    acc = cores[0][0]
    for core in cores[1:]:
        acc = np.tensordot(acc, core, axes=(acc.ndim - 1, 0))
    return GroundTruth(model="tt", dims=dims, rank=rank,
                       array=acc[..., 0], factors=cores)


# ---------------------------------------------------------------------------
# solver and rank extraction
# ---------------------------------------------------------------------------


def numerical_rank(matrix, rank_tolerance: float = 1e-6) -> int:
    """Count of singular values above ``rank_tolerance`` times the
    largest; zero for the zero matrix."""
    if not 0 < rank_tolerance < 1:
        raise ValueError(f"rank_tolerance must lie in (0,1), got {rank_tolerance}")
    s = np.linalg.svd(np.asarray(matrix, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rank_tolerance * s[0]))


def svt_complete(observed: ObservedData, params: SolverParams | None = None) -> CompletionResult:
    """Iterative singular-value shrinkage fit to the observed entries.

    Maintains a dual matrix ``Y``; each round soft-thresholds its
    singular values by ``tau`` to get the candidate ``X`` and nudges
    ``Y`` on the observed entries by ``delta`` times the misfit.  Stops
    when the max-abs observed misfit drops below the fit tolerance
    relative to the largest observed magnitude.  The candidate of the
    final round is returned either way, with ``converged`` set honestly.
    """
    params = params or SolverParams()
    pattern = observed.pattern
    if pattern.order != 2:
        raise ValueError("the shrinkage solver handles 2-way patterns only")
    if pattern.n_observed == 0:
        raise ValueError("need at least one observed entry")
    n1, n2 = pattern.dims
    coords = pattern.sorted_coords()
    rows = np.array([c[0] for c in coords])
    cols = np.array([c[1] for c in coords])
    vals = np.array([observed.values[c] for c in coords], dtype=float)
    scale = float(np.max(np.abs(vals)))
    if scale == 0.0:
        profile = tuple(0.0 for _ in range(min(n1, n2)))
        return CompletionResult(completed=np.zeros((n1, n2)), residual=0.0,
                                iterations=0, converged=True, numerical_rank=0,
                                singular_values=profile,
                                rank_tolerance=params.rank_tolerance,
                                monotone=True)
    tau = params.tau if params.tau is not None else 5.0 * math.sqrt(n1 * n2)
    p_hat = pattern.n_observed / pattern.total_cells
    delta = params.delta if params.delta is not None else 1.2 / p_hat
    y = np.zeros((n1, n2))
    monotone = True
    prev = math.inf
    converged = False
    x = np.zeros((n1, n2))
    shrunk = np.zeros(min(n1, n2))
    iterations = 0
    for it in range(1, params.max_iterations + 1):
        iterations = it
        u, s, vt = np.linalg.svd(y, full_matrices=False)
        shrunk = np.maximum(s - tau, 0.0)
        x = (u * shrunk) @ vt
        residual = float(np.max(np.abs(x[rows, cols] - vals)))
        if residual > prev:
            monotone = False
        prev = residual
        if residual <= params.fit_tolerance * scale:
            converged = True
            break
        if it == params.max_iterations:
            break
        y[rows, cols] += delta * (vals - x[rows, cols])
    top = float(shrunk[0]) if shrunk.size else 0.0
    if top == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(shrunk > params.rank_tolerance * top))
    return CompletionResult(completed=x, residual=prev, iterations=iterations,
                            converged=converged, numerical_rank=rank,
                            singular_values=tuple(float(v) for v in shrunk),
                            rank_tolerance=params.rank_tolerance,
                            monotone=monotone)


def tucker_rank_from_array(array, split: int, rank_tolerance: float = 1e-6) -> RankSpec:
    """Trailing matricization ranks of a dense array, tagged at ``split``."""
    array = np.asarray(array, dtype=float)
    d = array.ndim
    split = int(split)
    if not 1 <= split <= d - 1:
        raise ValueError(f"split {split} out of range for order {d}")
    ms = tuple(numerical_rank(matricize_array(array, i), rank_tolerance)
               for i in range(split + 1, d + 1))
    return RankSpec.tucker(ms, split)


def tt_rank_from_array(array, rank_tolerance: float = 1e-6) -> RankSpec:
    """Unfolding ranks of a dense array as a train rank vector."""
    array = np.asarray(array, dtype=float)
    d = array.ndim
    us = tuple(numerical_rank(unfold_array(array, i), rank_tolerance)
               for i in range(1, d))
    return RankSpec.tt(us)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def _no_claim_certificate(model: str, rank: RankSpec) -> Certificate:
    return Certificate(model=model, rank=rank, a_holds=None, b_holds=None,
                       in_s=None, witness=None, counterexample=None,
                       claim=CLAIM_NONE, search_exhausted=False)


def _ingest(observed: ObservedData, completion,
            fit_tolerance: float) -> CompletionResult:
    """Wrap an externally supplied completion array in solver clothing.

    The array must reproduce every observed entry to ``fit_tolerance``
    relative to the largest observed magnitude; anything further off is
    not a completion of the data and is rejected.
    """
    arr = np.asarray(completion, dtype=float)
    if arr.shape != observed.pattern.dims:
        raise ValueError(
            f"completion shape {arr.shape} does not match pattern dims "
            f"{observed.pattern.dims}")
    misfit = 0.0
    for coord, val in observed.values.items():
        misfit = max(misfit, abs(float(arr[coord]) - val))
    scale = max((abs(v) for v in observed.values.values()), default=0.0)
    if misfit > fit_tolerance * scale:
        raise ValueError(
            f"supplied array misfits the observations by {misfit:.3e} "
            f"(tolerance {fit_tolerance * scale:.3e})")
    return CompletionResult(completed=arr, residual=misfit, iterations=0,
                            converged=True, numerical_rank=0,
                            singular_values=(), rank_tolerance=0.0,
                            monotone=True)


def estimate_rank_pipeline(observed: ObservedData, mode: str = "deterministic",
                           p: float | None = None, epsilon: float | None = None,
                           params: SolverParams | None = None,
                           budget: int = DEFAULT_BUDGET,
                           model: str = "single", completion=None,
                           claimed_rank=None, split: int | None = None,
                           minimal: bool = False):
    """Complete (or ingest), read off a rank, and certify it.

    Matrix data runs through the shrinkage solver; tensor data must come
    with an externally supplied ``completion`` array, whose rank is read
    from matricizations (tucker, at ``split``) or unfoldings (tt).  The
    outer-product rank is not readable from a dense array, so the cp
    path needs ``claimed_rank``.

    Deterministic mode runs the membership test on the pattern at the
    extracted rank.  Probabilistic mode compares the supplied sampling
    probability ``p`` against the threshold at the extracted rank and
    failure level ``epsilon``; the certificate then carries the success
    floor, or the probability deficit when no claim is possible.

    Returns the pair (certificate, completion result).
    """
    if mode not in ("deterministic", "probabilistic"):
        raise ValueError(f"unknown mode {mode!r}")
    params = params or SolverParams()
    pattern = observed.pattern
    if model == "single":
        if pattern.order != 2:
            raise ValueError("matrix pipeline needs a 2-way pattern")
        if completion is not None:
            base = _ingest(observed, completion, params.fit_tolerance)
            svals = np.linalg.svd(base.completed, compute_uv=False)
            result = CompletionResult(
                completed=base.completed, residual=base.residual,
                iterations=0, converged=True,
                numerical_rank=numerical_rank(base.completed,
                                              params.rank_tolerance),
                singular_values=tuple(float(v) for v in svals),
                rank_tolerance=params.rank_tolerance, monotone=True)
        else:
            result = svt_complete(observed, params)
        r_hat = result.numerical_rank
        spec = RankSpec.single(r_hat) if r_hat >= 1 else None
    elif model == "cp":
        if completion is None or claimed_rank is None:
            raise ValueError("cp pipeline needs a completion and claimed_rank")
        result = _ingest(observed, completion, params.fit_tolerance)
        spec = RankSpec.cp(int(claimed_rank))
    elif model == "tucker":
        if completion is None or split is None:
            raise ValueError("tucker pipeline needs a completion and split")
        result = _ingest(observed, completion, params.fit_tolerance)
        spec = tucker_rank_from_array(result.completed, split,
                                      params.rank_tolerance)
    elif model == "tt":
        if completion is None:
            raise ValueError("tt pipeline needs a completion")
        result = _ingest(observed, completion, params.fit_tolerance)
        spec = tt_rank_from_array(result.completed, params.rank_tolerance)
    else:
        raise ValueError(f"pipeline does not handle model {model!r}")

    if model == "single" and (not result.converged or spec is None):
        fallback = spec if spec is not None else RankSpec.single(1)
        return _no_claim_certificate(model, fallback), result

    if mode == "deterministic":
        cert = certify_bound(pattern, model, spec, minimal=minimal,
                             budget=budget)
        return cert, result

    if p is None or epsilon is None:
        raise ValueError("probabilistic mode needs p and epsilon")
    if model != "single":
        raise ValueError("probabilistic pipeline handles the matrix model only")
    n1, n2 = pattern.dims
    report = required_prob_single(n1, n2, spec.r, epsilon)
    ok = report.preconditions_ok and p > report.p_threshold
    deficit = report.p_threshold - p if p <= report.p_threshold else None
    cert = Certificate(model=model, rank=spec, a_holds=None, b_holds=None,
                       in_s=None, witness=None, counterexample=None,
                       claim=CLAIM_UPPER if ok else CLAIM_NONE,
                       search_exhausted=False,
                       success_floor=report.success_floor,
                       p_threshold=report.p_threshold, deficit=deficit)
    return cert, result


# ---------------------------------------------------------------------------
# gap experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GapRun:
    run: int
    seed: int
    r: int
    r_hat: int
    gap: int
    converged: bool


@dataclass(frozen=True)
class GapResult:
    """Per-run rank gaps of the completion pipeline on synthetic data."""

    n1: int
    n2: int
    r: int
    p: float
    runs: tuple[GapRun, ...]
    d_min: int
    d_max: int

    @property
    def gaps(self) -> tuple[int, ...]:
        return tuple(row.gap for row in self.runs)


def _gap_run(n1, n2, r, p, run, run_seed, params) -> GapRun:
    truth = random_low_rank_matrix(n1, n2, r, derive_seed(run_seed, 0))
    pattern = bernoulli_pattern((n1, n2), p, derive_seed(run_seed, 1))
    if pattern.n_observed == 0:
        return GapRun(run=run, seed=run_seed, r=r, r_hat=0, gap=-r,
                      converged=True)
    observed = observed_from_array(truth.array, pattern)
    result = svt_complete(observed, params)
    return GapRun(run=run, seed=run_seed, r=r, r_hat=result.numerical_rank,
                  gap=result.numerical_rank - r, converged=result.converged)


def gap_experiment(n1: int, n2: int, r: int, p: float, runs: int, seed: int,
                   params: SolverParams | None = None,
                   workers: int | None = None) -> GapResult:
    """Generate, sample, complete, and report rank gaps over seeded runs.

    Each run derives its own seed from the base seed and run index, so
    runs are independent and the whole experiment replays exactly.  An
    empty sampled pattern short-circuits to the zero completion.
    """
    if runs < 1:
        raise ValueError(f"need at least one run, got {runs}")
    if not 0 < p <= 1:
        raise ValueError(f"sampling probability must lie in (0,1], got {p}")
    params = params or SolverParams()
    run_seeds = [derive_seed(seed, i) for i in range(runs)]

    def job(i):
        return _gap_run(n1, n2, r, p, i, run_seeds[i], params)

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(job, range(runs)))
    else:
        rows = tuple(job(i) for i in range(runs))
    gaps = [row.gap for row in rows]
    return GapResult(n1=n1, n2=n2, r=r, p=p, runs=rows,
                     d_min=min(gaps), d_max=max(gaps))

"""Command-line surface.

Every output file begins with a config echo ('#' comment lines in text
formats, a leading "config" object in JSON) sufficient to reproduce it,
and identical configs produce identical bytes.  Exit codes: 0 success,
1 validation error, 2 witness search ran out of budget.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .certify import (
    DEFAULT_BUDGET,
    certify_bound,
    max_scalar_rank,
)
from .completion import (
    SolverParams,
    estimate_rank_pipeline,
    gap_experiment,
    svt_complete,
)
from .constraints import (
    AssumptionError,
    build_constraint_matrix,
    build_constraint_matrix_multiview,
    build_constraint_tensor_cp,
    build_constraint_tensor_tt,
    build_constraint_tensor_tucker,
    select_tucker_anchor_set,
    write_anchor_set,
    write_constraint,
)
from .patterns import (
    PatternFormatError,
    array_from_observed,
    bernoulli_pattern,
    derive_seed,
    observed_from_array,
    per_column_pattern,
    read_pattern,
    read_values,
    write_pattern,
    write_values,
)
from .ranks import RankSpec
from .thresholds import (
    heatmap_single,
    min_epsilon_single,
    required_prob_cp,
    required_prob_multiview,
    required_prob_single,
    required_prob_tt,
    required_prob_tucker,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BUDGET = 2


class CliError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _workers() -> int:
    raw = os.environ.get("RANKSCOPE_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise CliError(f"RANKSCOPE_THREADS must be an integer, got {raw!r}") from None


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_render(v) for v in value)
    if value is None:
        return "-"
    return str(value)


def _config_pairs(command: str, pairs) -> list:
    return [("command", command)] + [(k, v) for k, v in pairs if v is not None]


def _comment_header(pairs) -> list:
    head = " ".join(f"{k}={_render(v)}" for k, v in pairs)
    return [head]


def _json_config(pairs) -> dict:
    out = {}
    for k, v in pairs:
        if isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def _emit_json(obj: dict, out) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _parse_rank_vec(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise CliError(f"malformed rank vector {text!r}") from None


def _parse_float_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise CliError(f"grid {text!r} must be value or start:stop:step")
    start, stop, step = (float(p) for p in parts)
    if step <= 0:
        raise CliError(f"grid step must be positive, got {step}")
    vals = []
    k = 0
    while True:
        v = start + k * step
        if v > stop + 1e-12:
            break
        vals.append(round(v, 12))
        k += 1
    if not vals:
        raise CliError(f"grid {text!r} is empty")
    return vals


def _parse_int_grid(text: str) -> list[int]:
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise CliError(f"malformed integer grid {text!r}") from None
    if len(parts) == 1:
        return parts
    if len(parts) == 2:
        lo, hi = parts
        step = 1
    elif len(parts) == 3:
        lo, hi, step = parts
    else:
        raise CliError(f"grid {text!r} must be value, lo:hi, or lo:hi:step")
    if step <= 0:
        raise CliError(f"grid step must be positive, got {step}")
    vals = list(range(lo, hi + 1, step))
    if not vals:
        raise CliError(f"grid {text!r} is empty")
    return vals


def _rank_spec(args, model: str) -> RankSpec:
    if model in ("single", "cp"):
        if args.rank is None:
            raise CliError(f"--rank is required for model {model}")
        return RankSpec.single(args.rank) if model == "single" else RankSpec.cp(args.rank)
    if args.rank_vec is None:
        raise CliError(f"--rank-vec is required for model {model}")
    vec = _parse_rank_vec(args.rank_vec)
    if model == "multi":
        if len(vec) != 3:
            raise CliError("multi-view rank vector is r1,r2,r")
        return RankSpec.multi(*vec)
    if model == "tucker":
        if args.split is None:
            raise CliError("--split is required for model tucker")
        return RankSpec.tucker(vec, args.split)
    if model == "tt":
        return RankSpec.tt(vec)
    raise CliError(f"unknown model {model!r}")


def _load_solver_params(args) -> SolverParams:
    kwargs = {}
    if getattr(args, "tau", None) is not None:
        kwargs["tau"] = args.tau
    if getattr(args, "delta", None) is not None:
        kwargs["delta"] = args.delta
    if getattr(args, "max_iterations", None) is not None:
        kwargs["max_iterations"] = args.max_iterations
    if getattr(args, "fit_tol", None) is not None:
        kwargs["fit_tolerance"] = args.fit_tol
    if getattr(args, "rank_tol", None) is not None:
        kwargs["rank_tolerance"] = args.rank_tol
    return SolverParams(**kwargs)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_gen_pattern(args) -> int:
    dims = tuple(args.dims)
    if (args.p is None) == (args.per_column is None):
        raise CliError("pass exactly one of --p or --per-column")
    if args.p is not None:
        pattern = bernoulli_pattern(dims, args.p, args.seed)
        pairs = _config_pairs("gen-pattern", [("dims", dims), ("p", args.p),
                                              ("seed", args.seed),
                                              ("out", args.out)])
    else:
        pattern = per_column_pattern(dims, args.per_column, args.seed)
        pairs = _config_pairs("gen-pattern", [("dims", dims),
                                              ("per_column", args.per_column),
                                              ("seed", args.seed),
                                              ("out", args.out)])
    write_pattern(pattern, args.out, comments=_comment_header(pairs))
    return EXIT_OK


def _build_from_args(args, pattern, model):
    if model == "single":
        if args.rank is None:
            raise CliError("--rank is required for model single")
        return build_constraint_matrix(pattern, args.rank), None
    if model == "cp":
        if args.rank is None:
            raise CliError("--rank is required for model cp")
        return build_constraint_tensor_cp(pattern, args.rank), None
    if model == "tt":
        if args.rank_vec is None:
            raise CliError("--rank-vec is required for model tt")
        return build_constraint_tensor_tt(pattern, _parse_rank_vec(args.rank_vec)), None
    if model == "tucker":
        spec = _rank_spec(args, "tucker")
        anchor = select_tucker_anchor_set(pattern, spec.ms, spec.split)
        if anchor is None:
            raise CliError("no anchor set exists for this pattern and rank")
        return build_constraint_tensor_tucker(pattern, spec, anchor), anchor
    raise CliError(f"unknown model {model!r}")


def _cmd_build_constraints(args) -> int:
    pattern = read_pattern(args.pattern)
    model = args.model
    pairs = _config_pairs("build-constraints", [
        ("pattern", args.pattern), ("pattern2", args.pattern2),
        ("model", model), ("rank", args.rank), ("rank_vec", args.rank_vec),
        ("split", args.split), ("out", args.out)])
    if model == "multi":
        if args.pattern2 is None:
            raise CliError("--pattern2 is required for model multi")
        if args.rank_vec is None:
            raise CliError("--rank-vec r1,r2 is required for model multi")
        vec = _parse_rank_vec(args.rank_vec)
        if len(vec) != 2:
            raise CliError("multi-view build takes --rank-vec r1,r2")
        pattern2 = read_pattern(args.pattern2)
        constraint = build_constraint_matrix_multiview(pattern, pattern2, *vec)
        anchor = None
    else:
        constraint, anchor = _build_from_args(args, pattern, model)
    write_constraint(constraint, args.out, comments=_comment_header(pairs))
    if anchor is not None:
        side = Path(args.out).with_suffix(".anchor" + Path(args.out).suffix)
        write_anchor_set(anchor, side, comments=_comment_header(pairs))
    return EXIT_OK


def _cmd_certify(args) -> int:
    model = args.model
    spec = _rank_spec(args, model)
    if model == "multi":
        if args.pattern2 is None:
            raise CliError("--pattern2 is required for model multi")
        pattern = (read_pattern(args.pattern), read_pattern(args.pattern2))
    else:
        pattern = read_pattern(args.pattern)
    cert = certify_bound(pattern, model, spec, minimal=args.minimal,
                         budget=args.budget)
    pairs = _config_pairs("certify", [
        ("pattern", args.pattern), ("pattern2", args.pattern2),
        ("model", model), ("rank", args.rank), ("rank_vec", args.rank_vec),
        ("split", args.split), ("minimal", args.minimal),
        ("budget", args.budget), ("out", args.out)])
    _emit_json({"config": _json_config(pairs),
                "certificate": cert.to_json()}, args.out)
    return EXIT_BUDGET if cert.in_s is None else EXIT_OK


def _cmd_max_rank(args) -> int:
    pattern = read_pattern(args.pattern)
    res = max_scalar_rank(pattern, model=args.model, budget=args.budget)
    pairs = _config_pairs("max-rank", [
        ("pattern", args.pattern), ("model", args.model),
        ("budget", args.budget), ("out", args.out)])
    _emit_json({"config": _json_config(pairs), "rank": res.rank,
                "exhausted": res.exhausted}, args.out)
    return EXIT_BUDGET if res.exhausted else EXIT_OK


def _cmd_threshold(args) -> int:
    model = args.model
    dims = tuple(args.dims)
    if model == "single":
        if len(dims) != 2:
            raise CliError("single model takes --dims n1 n2")
        if args.rank is None:
            raise CliError("--rank is required for model single")
        report = required_prob_single(dims[0], dims[1], args.rank, args.epsilon)
    elif model == "cp":
        if len(dims) < 3 or len(set(dims)) != 1:
            raise CliError("cp model takes --dims n n n ... with equal sizes")
        if args.rank is None:
            raise CliError("--rank is required for model cp")
        report = required_prob_cp(dims[0], len(dims), args.rank, args.epsilon)
    elif model == "multi":
        if len(dims) != 3:
            raise CliError("multi model takes --dims n n1 n2")
        spec = _rank_spec(args, "multi")
        r1, r2, r = spec.triple
        report = required_prob_multiview(dims[0], dims[1], dims[2],
                                         r1, r2, r, args.epsilon)
    elif model == "tucker":
        spec = _rank_spec(args, "tucker")
        report = required_prob_tucker(dims, spec.split, spec, args.epsilon)
    elif model == "tt":
        if len(dims) < 3 or len(set(dims)) != 1:
            raise CliError("tt model takes --dims n n n ... with equal sizes")
        spec = _rank_spec(args, "tt")
        report = required_prob_tt(dims[0], len(dims), spec, args.epsilon)
    else:
        raise CliError(f"unknown model {model!r}")
    pairs = _config_pairs("threshold", [
        ("model", model), ("dims", dims), ("rank", args.rank),
        ("rank_vec", args.rank_vec), ("split", args.split),
        ("epsilon", args.epsilon), ("out", args.out)])
    _emit_json({"config": _json_config(pairs), **report.to_json()}, args.out)
    return EXIT_OK


def _cmd_min_epsilon(args) -> int:
    res = min_epsilon_single(args.n1, args.p, args.rank)
    pairs = _config_pairs("min-epsilon", [
        ("n1", args.n1), ("p", args.p), ("rank", args.rank),
        ("out", args.out)])
    _emit_json({"config": _json_config(pairs), **res.to_json()}, args.out)
    return EXIT_OK


def _cmd_heatmap(args) -> int:
    ps = _parse_float_grid(args.p_grid)
    rs = _parse_int_grid(args.r_grid)
    table = heatmap_single(args.n1, args.n2, ps, rs, workers=_workers())
    pairs = _config_pairs("heatmap", [
        ("n1", args.n1), ("n2", args.n2), ("p_grid", args.p_grid),
        ("r_grid", args.r_grid), ("format", args.format),
        ("out", args.out), ("plot", not args.no_plot)])
    if args.format == "json":
        _emit_json({"config": _json_config(pairs), **table.to_json()}, args.out)
    else:
        lines = [f"# {line}" for line in _comment_header(pairs)]
        lines.append("p,r,floor")
        for p, r, val in table.iter_cells():
            lines.append(f"{p!r},{r},{val!r}")
        Path(args.out).write_text("\n".join(lines) + "\n")
    if not args.no_plot:
        from .figures import render_heatmap
        render_heatmap(table, Path(args.out).with_suffix(".png"))
    return EXIT_OK


def _cmd_complete(args) -> int:
    observed = read_values(args.values)
    params = _load_solver_params(args)
    result = svt_complete(observed, params)
    pairs = _config_pairs("complete", [
        ("values", args.values), ("tau", args.tau), ("delta", args.delta),
        ("max_iterations", args.max_iterations), ("fit_tol", args.fit_tol),
        ("rank_tol", args.rank_tol), ("out", args.out)])
    completed = observed_from_array(result.completed)
    diag = [
        f"residual={result.residual!r}",
        f"iterations={result.iterations}",
        f"converged={_render(result.converged)}",
        f"numerical_rank={result.numerical_rank}",
        f"monotone={_render(result.monotone)}",
    ]
    write_values(completed, args.out,
                 comments=_comment_header(pairs) + diag)
    _emit_json({"config": _json_config(pairs),
                "residual": result.residual,
                "iterations": result.iterations,
                "converged": result.converged,
                "numerical_rank": result.numerical_rank,
                "monotone": result.monotone,
                "top_singular_values": list(result.singular_values[:10])},
               None)
    return EXIT_OK


def _cmd_estimate(args) -> int:
    observed = read_values(args.values)
    params = _load_solver_params(args)
    completion = None
    if args.completion is not None:
        data = read_values(args.completion)
        if data.pattern.n_observed != data.pattern.total_cells:
            raise CliError("completion file must cover every cell")
        completion = array_from_observed(data)
    cert, result = estimate_rank_pipeline(
        observed, mode=args.mode, p=args.p, epsilon=args.epsilon,
        params=params, budget=args.budget, model=args.model,
        completion=completion, claimed_rank=args.claimed_rank,
        split=args.split, minimal=args.minimal)
    pairs = _config_pairs("estimate", [
        ("values", args.values), ("mode", args.mode), ("model", args.model),
        ("p", args.p), ("epsilon", args.epsilon),
        ("completion", args.completion), ("claimed_rank", args.claimed_rank),
        ("split", args.split), ("minimal", args.minimal),
        ("budget", args.budget), ("out", args.out)])
    _emit_json({"config": _json_config(pairs),
                "certificate": cert.to_json(),
                "completion": {
                    "residual": result.residual,
                    "iterations": result.iterations,
                    "converged": result.converged,
                    "numerical_rank": result.numerical_rank,
                    "monotone": result.monotone,
                }}, args.out)
    exhausted = cert.search_exhausted and cert.in_s is None
    return EXIT_BUDGET if exhausted else EXIT_OK


def _cmd_gap(args) -> int:
    rs = _parse_int_grid(args.r_grid)
    params = _load_solver_params(args)
    workers = _workers()
    results = []
    for r in rs:
        results.append(gap_experiment(args.n1, args.n2, r, args.p, args.runs,
                                      derive_seed(args.seed, r),
                                      params=params, workers=workers))
    pairs = _config_pairs("gap", [
        ("n1", args.n1), ("n2", args.n2), ("r_grid", args.r_grid),
        ("p", args.p), ("runs", args.runs), ("seed", args.seed),
        ("out", args.out), ("plot", not args.no_plot)])
    lines = [f"# {line}" for line in _comment_header(pairs)]
    lines.append("run,seed,r,r_hat,gap,converged")
    for res in results:
        for row in res.runs:
            lines.append(f"{row.run},{row.seed},{row.r},{row.r_hat},"
                         f"{row.gap},{_render(row.converged)}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    summary = {"config": _json_config(pairs),
               "rows": [{"r": res.r, "d_min": res.d_min, "d_max": res.d_max}
                        for res in results]}
    _emit_json(summary, Path(args.out).with_suffix(".summary.json"))
    if not args.no_plot:
        from .figures import render_gap
        render_gap([res.r for res in results],
                   [res.d_min for res in results],
                   [res.d_max for res in results],
                   Path(args.out).with_suffix(".png"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_rank_flags(p) -> None:
    p.add_argument("--rank", type=int, default=None,
                   help="scalar rank (single, cp)")
    p.add_argument("--rank-vec", default=None,
                   help="comma-separated rank vector (multi, tucker, tt)")
    p.add_argument("--split", type=int, default=None,
                   help="leading-mode count for the tucker model")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rankscope",
                     description="Rank certification for partially observed "
                                 "matrices and tensors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-pattern", help="sample an observation pattern")
    p.add_argument("--dims", type=int, nargs="+", required=True)
    p.add_argument("--p", type=float, default=None,
                   help="independent per-entry observation probability")
    p.add_argument("--per-column", type=int, default=None,
                   help="exact observations per last-mode slice")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_gen_pattern)

    p = sub.add_parser("build-constraints", help="build the constraint structure")
    p.add_argument("--pattern", required=True)
    p.add_argument("--pattern2", default=None)
    p.add_argument("--model", default="single",
                   choices=["single", "multi", "cp", "tucker", "tt"])
    _add_rank_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_build_constraints)

    p = sub.add_parser("certify", help="decide membership and emit a certificate")
    p.add_argument("--pattern", required=True)
    p.add_argument("--pattern2", default=None)
    p.add_argument("--model", default="single",
                   choices=["single", "multi", "cp", "tucker", "tt"])
    _add_rank_flags(p)
    p.add_argument("--minimal", action="store_true",
                   help="caller vouches the rank is from a minimal completion")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_certify)

    p = sub.add_parser("max-rank", help="largest certifiable scalar rank")
    p.add_argument("--pattern", required=True)
    p.add_argument("--model", default="single", choices=["single", "cp"])
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_max_rank)

    p = sub.add_parser("threshold", help="sampling-probability threshold report")
    p.add_argument("--model", default="single",
                   choices=["single", "multi", "cp", "tucker", "tt"])
    p.add_argument("--dims", type=int, nargs="+", required=True)
    _add_rank_flags(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_threshold)

    p = sub.add_parser("min-epsilon", help="invert the matrix threshold in epsilon")
    p.add_argument("--n1", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_min_epsilon)

    p = sub.add_parser("heatmap", help="success-floor table over a grid")
    p.add_argument("--n1", type=int, required=True)
    p.add_argument("--n2", type=int, required=True)
    p.add_argument("--p-grid", required=True)
    p.add_argument("--r-grid", required=True)
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=_cmd_heatmap)

    p = sub.add_parser("complete", help="run the shrinkage completion solver")
    p.add_argument("--values", required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--fit-tol", type=float, default=None)
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_complete)

    p = sub.add_parser("estimate", help="complete, read a rank, certify it")
    p.add_argument("--values", required=True)
    p.add_argument("--mode", default="deterministic",
                   choices=["deterministic", "probabilistic"])
    p.add_argument("--model", default="single",
                   choices=["single", "cp", "tucker", "tt"])
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--completion", default=None,
                   help="values file covering every cell")
    p.add_argument("--claimed-rank", type=int, default=None)
    p.add_argument("--split", type=int, default=None)
    p.add_argument("--minimal", action="store_true")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--fit-tol", type=float, default=None)
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_estimate)

    p = sub.add_parser("gap", help="rank-gap experiment over a rank grid")
    p.add_argument("--n1", type=int, required=True)
    p.add_argument("--n2", type=int, required=True)
    p.add_argument("--r-grid", required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--fit-tol", type=float, default=None)
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=_cmd_gap)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PatternFormatError, AssumptionError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as e:
        code = e.code
        return int(code) if isinstance(code, int) else EXIT_OK


def entry(argv=None) -> None:
    sys.exit(main(argv))

"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data or format
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import io as tio
from .errors import (
    ConfigError,
    DimensionError,
    FormatError,
    InputError,
    NumericalError,
)
from .kruskal import reconstruct, residual_report
from .solver import SolverConfig, refit, solve, solve_als_baseline
from .synth import SynthSpec, make_ground_truth

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("cprank")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        text = action.help or ""
        if "default:" in text or action.required:
            return text
        return super()._get_help_string(action)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _add_solver_flags(p, refit_default=0, rank_bound=True):
    g = p.add_argument_group("solver")
    if rank_bound:
        g.add_argument("--rank-bound", type=_positive_int, default=None,
                       help="upper bound R on the rank (default: min(IJ, JK, IK))")
    g.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="Tikhonov weight on the factors (default: 1e-2 * ||X||_F^(2/3))")
    g.add_argument("--gamma", type=float, default=None,
                   help="l1 weight on alpha (default: 5e-2 * ||X||_F)")
    g.add_argument("--eta", type=float, default=0.99,
                   help="step = eta / Q_alpha, must lie in (0, 1)")
    g.add_argument("--beta-fixed", type=float, default=None,
                   help="use this constant step instead of eta / Q_alpha "
                        "(default: off; fails if beta * Q_alpha >= 1)")
    g.add_argument("--max-iters", type=_positive_int, default=5000, help="outer iteration cap")
    g.add_argument("--tol-psi", type=float, default=1e-8, help="relative objective change stop")
    g.add_argument("--tol-residual", type=float, default=1e-10, help="relative residual stop")
    g.add_argument("--power-iters", type=_positive_int, default=100,
                   help="power iteration cap for Q_alpha")
    g.add_argument("--power-tol", type=float, default=1e-6,
                   help="power iteration relative tolerance")
    g.add_argument("--seed", type=int, default=0, help="seed for the initial factors")
    g.add_argument("--refit-iters", type=int, default=refit_default,
                   help="unregularized ALS sweeps on the found support (0 disables)")


def _config(args, rank_bound=None) -> SolverConfig:
    return SolverConfig(
        rank_bound=rank_bound if rank_bound is not None else getattr(args, "rank_bound", None),
        lam=args.lam,
        gamma=args.gamma,
        eta=args.eta,
        beta_fixed=args.beta_fixed,
        max_iters=args.max_iters,
        tol_psi=args.tol_psi,
        tol_residual=args.tol_residual,
        seed=args.seed,
        power_iters=args.power_iters,
        power_tol=args.power_tol,
    ).validate()


def _output_dir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _estimate(x, args, out: Path):
    """Solve, optionally refit, and write factors/trace/summary under ``out``."""
    cfg = _config(args)
    t0 = time.perf_counter()
    result = solve(x, cfg)
    model = result.model
    if args.refit_iters > 0 and model.R > 0:
        polished = refit(x, model, max_iters=args.refit_iters)
        model = polished.model
        if polished.trace:
            tio.write_trace_csv(polished.trace, out / "refit_trace.csv")
    elapsed = time.perf_counter() - t0
    rep = residual_report(x, model)
    tio.write_factors(model, out / "factors")
    tio.write_trace_csv(result.trace, out / "trace.csv")
    summary = {
        "estimated_rank": result.estimated_rank,
        "rank_bound": result.config.rank_bound,
        "lambda": result.config.lam,
        "gamma": result.config.gamma,
        "iterations": result.iterations,
        "termination": result.termination,
        "residual": rep["residual"],
        "residual_sq": rep["residual_sq"],
        "relative": rep["relative"],
        "near_zero": result.rank.near_zero,
        "refit_iters": args.refit_iters,
    }
    _write_json(summary, out / "summary.json")
    print(f"estimated rank : {result.estimated_rank} (bound {result.config.rank_bound})")
    print(f"residual       : {rep['residual']:.6e}")
    print(f"relative error : {rep['relative']:.6e}")
    print(f"iterations     : {result.iterations} ({result.termination})")
    print(f"wall time      : {elapsed:.3f} s")
    print(f"RANK_ESTIMATE {result.estimated_rank} RELERR {rep['relative']:.6e} "
          f"ITERS {result.iterations}")
    return result, model, rep


def cmd_synth(args):
    if len(args.dims) != 3 or min(args.dims) < 1:
        raise UsageError("--dims needs three positive integers")
    if args.rank < 1:
        raise UsageError("--rank must be >= 1")
    if args.noise < 0:
        raise UsageError("--noise must be >= 0")
    spec = SynthSpec(tuple(args.dims), args.rank, seed=args.seed,
                     factor_dist=args.factor_dist, weight_dist=args.weight_dist,
                     noise_sigma=args.noise)
    x, truth = make_ground_truth(spec)
    out = _output_dir(args)
    tio.save_tensor(x, out / "tensor.t3")
    tio.write_factors(truth, out / "truth")
    print(f"wrote {out / 'tensor.t3'} ({'x'.join(map(str, x.dims))}, rank {args.rank})")
    return EXIT_OK


def cmd_estimate_rank(args):
    x = tio.load_tensor(args.input)
    _estimate(x, args, _output_dir(args))
    return EXIT_OK


def cmd_decompose(args):
    x = tio.load_tensor(args.input)
    out = _output_dir(args)
    cfg = _config(args, rank_bound=args.rank)
    result = solve_als_baseline(x, cfg)
    rep = residual_report(x, result.model)
    tio.write_factors(result.model, out / "factors")
    tio.write_trace_csv(result.trace, out / "trace.csv")
    tio.save_tensor(reconstruct(result.model), out / "reconstruction.t3")
    print(f"DECOMPOSE RANK {result.model.R} RELERR {rep['relative']:.6e} "
          f"ITERS {result.iterations}")
    return EXIT_OK


def cmd_compare(args):
    x = tio.load_tensor(args.input)
    out = _output_dir(args)
    cfg = _config(args)
    arms = {"bcd": solve(x, cfg), "als": solve_als_baseline(x, cfg)}
    rows = []
    for name, res in arms.items():
        tio.write_trace_csv(res.trace, out / f"trace_{name}.csv")
        rep = residual_report(x, res.model)
        rows.append((name, rep["relative"], res.final.nnz_alpha, res.iterations))
    with open(out / "summary.csv", "w", newline="") as fh:
        fh.write("method,relative,nnz,iterations\n")
        for name, rel, nnz, its in rows:
            fh.write(f"{name},{rel!r},{nnz},{its}\n")
    print(f"{'method':<8}{'relative':>14}{'nnz':>6}{'iters':>8}")
    for name, rel, nnz, its in rows:
        print(f"{name:<8}{rel:>14.6e}{nnz:>6}{its:>8}")
    return EXIT_OK


def compression_ratio(dims, rank) -> float:
    i, j, k = dims
    return float("inf") if rank == 0 else (i * j * k) / (rank * (i + j + k + 1))


def cmd_image(args):
    x = tio.image_to_tensor(args.input)
    out = _output_dir(args)
    result, model, rep = _estimate(x, args, out)
    tio.tensor_to_image(reconstruct(model), out / "reconstruction.png")
    ratio = compression_ratio(x.dims, result.estimated_rank)
    print(f"compression    : {ratio:.4g}")
    return EXIT_OK


def cmd_video_bg(args):
    x = tio.frames_to_tensor(args.input)
    out = _output_dir(args)
    result, model, rep = _estimate(x, args, out)
    background, foreground = tio.split_background_foreground(x, model)
    tio.tensor_to_frames(background, out / "background", prefix="bg")
    tio.tensor_to_frames(tio.foreground_display(foreground), out / "foreground", prefix="fg")
    print(f"frames         : {x.dims[2]} ({x.dims[0]}x{x.dims[1]})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = _Parser(prog="cprank", description="CP rank estimation by block coordinate descent",
                     formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a random low-rank tensor", formatter_class=fmt)
    p.add_argument("--dims", type=int, nargs=3, required=True, metavar=("I", "J", "K"))
    p.add_argument("--rank", type=int, required=True, help="true CP rank")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--factor-dist", choices=["standard_normal", "uniform01"],
                   default="standard_normal")
    p.add_argument("--weight-dist", choices=["ones", "uniform"], default="uniform",
                   help="component weights: ones or uniform(0.5, 1.5)")
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate-rank", help="estimate the CP rank of a .t3 tensor",
                       formatter_class=fmt)
    p.add_argument("--input", required=True, help=".t3 tensor file")
    p.add_argument("--output", required=True, help="output directory")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_estimate_rank)

    p = sub.add_parser("decompose", help="fixed-rank CP decomposition by ALS",
                       formatter_class=fmt)
    p.add_argument("--input", required=True, help=".t3 tensor file")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--rank", type=_positive_int, required=True, help="number of components")
    _add_solver_flags(p, rank_bound=False)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("compare", help="BCD rank estimation against plain ALS",
                       formatter_class=fmt)
    p.add_argument("--input", required=True, help=".t3 tensor file")
    p.add_argument("--output", required=True, help="output directory")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("image", help="low-rank approximation of an RGB image",
                       formatter_class=fmt)
    p.add_argument("--input", required=True, help="8-bit RGB image")
    p.add_argument("--output", required=True, help="output directory")
    _add_solver_flags(p, refit_default=100)
    p.set_defaults(func=cmd_image)

    p = sub.add_parser("video-bg", help="background/foreground split of a frame sequence",
                       formatter_class=fmt)
    p.add_argument("--input", required=True, help="directory of frames (sorted by name)")
    p.add_argument("--output", required=True, help="output directory")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_video_bg)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"cprank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"cprank: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, InputError, DimensionError, OSError) as exc:
        print(f"cprank: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

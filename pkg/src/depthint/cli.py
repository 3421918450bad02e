"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings

import numpy as np

from .camera import CameraIntrinsics
from .errors import DepthIntError, DidNotConverge
from .evaluation import METRIC_FIELDS, align_scale_shift, compute_metrics, filter_gt_neighbors
from .fileio import read_depth, read_image, read_sparse, write_depth, write_sparse
from .grid import DepthGrid, SparseObservation
from .integrator import SolverConfig, complete
from .patterns import PatternSpec, generate
from .predictor import OraclePredictor, ZeroPredictor
from .render import render
from .sim import simulate_1d, simulate_solver_2d, two_point_pattern, write_2d_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOCONV = 0, 1, 2, 3

log = logging.getLogger("depthint")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _pad_amount(n: int, multiple: int) -> int:
    return (-n) % multiple


def _pad_edge(a: np.ndarray, ph: int, pw: int) -> np.ndarray:
    widths = ((0, ph), (0, pw)) + ((0, 0),) * (a.ndim - 2)
    return np.pad(a, widths, mode="edge")


def cmd_complete(args) -> int:
    obs = read_sparse(args.sparse)
    h, w = obs.shape
    mult = 2 ** (args.resolutions - 1)
    ph, pw = _pad_amount(h, mult), _pad_amount(w, mult)
    # padded rows/cols carry no observations; dense inputs are edge-replicated
    padded = SparseObservation(np.pad(obs.values, ((0, ph), (0, pw))),
                               np.pad(obs.mask, ((0, ph), (0, pw))))
    image = None
    if args.image:
        image = _pad_edge(read_image(args.image), ph, pw)
    if args.predictor == "oracle":
        if not args.gt:
            raise _UsageError("--predictor oracle needs --gt")
        gt = read_depth(args.gt)
        if not gt.is_dense:
            raise DepthIntError("oracle ground truth must be dense")
        predictor = OraclePredictor(DepthGrid(_pad_edge(gt.values, ph, pw)))
    else:
        predictor = ZeroPredictor()
    config = SolverConfig(alpha=args.alpha, num_resolutions=args.resolutions,
                          cg_rel_tol=args.cg_tol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DidNotConverge)
        depth, report = complete(image, padded, predictor, config, return_report=True)
    out = DepthGrid(depth.values[:h, :w])
    write_depth(out, args.out)
    log.info("cg iterations=%d rel_residual=%.3e", report.iterations, report.final_rel_residual)
    return EXIT_OK if report.converged else EXIT_NOCONV


def cmd_synth(args) -> int:
    gt = read_depth(args.gt)
    if args.config:
        with open(args.config) as fh:
            spec = PatternSpec.from_text(fh.read())
    else:
        spec = PatternSpec(kind=args.pattern, density=args.density, num_points=args.points,
                           num_lines=args.lines, outlier_fraction=args.outlier_frac,
                           boundary_noise=args.boundary_noise, seed=args.seed)
    intr = CameraIntrinsics.parse(args.intrinsics) if args.intrinsics else None
    image = read_image(args.image) if args.image else None
    obs, _ = generate(gt, spec, image=image, intr=intr)
    write_sparse(obs, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = read_depth(args.pred)
    gt = read_depth(args.gt)
    if pred.shape != gt.shape:
        raise DepthIntError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if args.gt_neighbor_filter:
        gt = filter_gt_neighbors(gt, args.gt_neighbor_filter)
    values = pred.values
    if args.align != "none":
        if not args.sparse:
            raise _UsageError("--align needs --sparse")
        values = align_scale_shift(values, read_sparse(args.sparse), args.align).aligned
    mask = gt.valid & pred.valid
    report = compute_metrics(values, gt.values, mask, rmse_scale_divisor=args.rmse_divisor)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_FIELDS)
        writer.writerow([repr(v) if isinstance(v, float) else v for v in report.as_row()])
    return EXIT_OK


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.mode == "1d":
        simulate_1d(args.sigma, args.length, args.trials, rng).write_csv(args.out)
        return EXIT_OK
    try:
        levels = [int(r) for r in args.resolutions.split(",")]
    except ValueError:
        raise _UsageError(f"bad --resolutions {args.resolutions!r}") from None
    shape = (args.height, args.length)
    pattern = two_point_pattern(shape)
    profiles = {r: simulate_solver_2d(shape, pattern, args.sigma, r, args.trials, seed=args.seed)
                for r in levels}
    write_2d_csv(args.out, profiles)
    return EXIT_OK


def cmd_render(args) -> int:
    render(args.input, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="depthint", description="Gradient-domain sparse depth completion.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("complete", help="densify a sparse depth map")
    c.add_argument("--sparse", required=True)
    c.add_argument("--image")
    c.add_argument("--out", required=True)
    c.add_argument("--resolutions", type=int, default=3)
    c.add_argument("--alpha", type=float, default=1.0)
    c.add_argument("--predictor", choices=["zero", "oracle"], default="zero")
    c.add_argument("--gt", help="dense depth for the oracle predictor")
    c.add_argument("--cg-tol", type=float, default=SolverConfig.cg_rel_tol)
    c.add_argument("--seed", type=int, default=0, help="accepted for symmetry; the shipped "
                   "predictors are deterministic")
    c.set_defaults(func=cmd_complete)

    s = sub.add_parser("synth", help="sample a synthetic sparse pattern from dense depth")
    s.add_argument("--gt", required=True)
    s.add_argument("--pattern", choices=["random", "keypoint", "lidar"], default="random")
    s.add_argument("--density", type=float, default=0.001)
    s.add_argument("--points", type=int, default=500)
    s.add_argument("--lines", type=int, default=64)
    s.add_argument("--outlier-frac", type=float, default=0.0)
    s.add_argument("--boundary-noise", action="store_true")
    s.add_argument("--intrinsics", help="fx,fy,cx,cy (default: f=max(H,W), centred)")
    s.add_argument("--image", help="texture for keypoints (default: the depth map itself)")
    s.add_argument("--config", help="key=value pattern file overriding the flags")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    eval_help = "score a prediction; CSV columns: " + ",".join(METRIC_FIELDS)
    e = sub.add_parser("eval", help=eval_help, description=eval_help)
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--align", choices=["none", "depth", "disparity"], default="none")
    e.add_argument("--sparse")
    e.add_argument("--rmse-divisor", type=float, default=1.0)
    e.add_argument("--gt-neighbor-filter", type=float, default=None)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    sim_help = ("error-accumulation study; 1d CSV columns: distance,analytic_var,empirical_var,"
                "ci95; 2d: resolutions,column,max_std,mean_std")
    m = sub.add_parser("simulate", help=sim_help, description=sim_help)
    m.add_argument("--mode", choices=["1d", "2d"], required=True)
    m.add_argument("--sigma", type=float, default=0.05)
    m.add_argument("--length", type=int, default=128)
    m.add_argument("--height", type=int, default=4, help="2d grid height")
    m.add_argument("--resolutions", default="1,2,3")
    m.add_argument("--trials", type=int, default=2000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("render", help="colour-map a depth file or plot a simulate CSV")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DepthIntError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

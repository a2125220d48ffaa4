"""Command line entry point: ``mlentropy <subcommand> ...``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime failures.
Every subcommand accepts ``--config FILE`` with ``key = value`` lines that
replace flag defaults (keys are flag names, dashes or underscores).
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io as fio
from .core import EntropyConfig, EntropyError, LogNNetConfig
from .kernel2d import KernelSpec, entropy_map, radius_for_length
from .metrics import masked_pair, r2, summarize, R2Summary
from .regress import GbrtParams, gbrt_fit, kfold_r2, knn_fit, ml_entropy_map, build_dataset

log = logging.getLogger("mlentropy")

ENTROPIES = ("svd", "perm", "samp", "nnet")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global")
    g.add_argument("--threads", type=_positive_int, default=1, help="worker threads for maps")
    g.add_argument("--seed", type=int, default=0, help="seed for training and shuffles")
    g.add_argument("--config", metavar="FILE", help="key=value file overriding defaults")
    g.add_argument("-v", "--verbose", action="store_true", help="log each stage")
    return p


def _entropy_flags(p):
    p.add_argument("--entropy", choices=ENTROPIES, default="svd")
    p.add_argument("--radius", type=_positive_int, default=4, help="kernel radius R")
    p.add_argument("--d", type=int, help="embedding dimension (svd, perm)")
    p.add_argument("--delay", type=int, help="embedding delay (svd, perm)")
    p.add_argument("--m", type=int, help="template length (samp)")
    p.add_argument("--rcoef", type=float, help="tolerance as a multiple of std (samp)")
    p.add_argument("--mnist-dir", help="directory with MNIST IDX files (nnet)")
    p.add_argument("--train-count", type=_positive_int, default=10_000, help="MNIST training images (nnet)")
    p.add_argument("--test-count", type=_positive_int, default=1_000, help="MNIST test images (nnet)")
    p.add_argument("--epochs", type=_positive_int, default=4, help="LogNNet epochs (nnet)")


def _gbrt_flags(p):
    d = GbrtParams()
    p.add_argument("--n-trees", type=_positive_int, default=d.n_trees)
    p.add_argument("--max-depth", type=_positive_int, default=d.max_depth)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--min-samples-leaf", type=_positive_int, default=d.min_samples_leaf)
    p.add_argument("--subsample", type=float, default=d.subsample)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="mlentropy",
        description="Entropy maps of rasters and their regression approximations.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("entropy-map", parents=[common], help="exact entropy map of a raster")
    p.add_argument("--in", dest="input", required=True, help="PGM or EGRD raster")
    p.add_argument("--out", required=True, help="output EGRD map")
    _entropy_flags(p)
    p.add_argument("--en", type=float, default=1.0, help="normalisation parameter EN")
    p.add_argument("--step", type=_positive_int, default=1)
    p.add_argument("--dl", type=int, default=0, help="initial offset")
    p.add_argument("--heatmap", help="also write an 8-bit PGM rendering")
    p.add_argument("--figure", help="also write a PNG rendering")
    p.set_defaults(func=cmd_entropy_map)

    p = sub.add_parser("build-dataset", parents=[common], help="training rows from rasters")
    p.add_argument("--in", dest="input", nargs="+", required=True, help="PGM or EGRD rasters")
    p.add_argument("--out", required=True, help="output EDST dataset")
    _entropy_flags(p)
    p.add_argument("--en", type=float, nargs="+", default=[1.0], help="one or more EN values")
    p.add_argument("--stride", type=_positive_int, default=1, help="pixel lattice stride")
    p.add_argument("--csv", help="also export the rows as CSV")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", parents=[common], help="fit a regression model")
    p.add_argument("--data", required=True, help="EDST dataset")
    p.add_argument("--out", required=True, help="output model (EGBM, or EKNN with --knn)")
    p.add_argument("--kfold", type=int, default=0, help="report K-fold R^2 before the final fit")
    p.add_argument("--knn", type=_positive_int, help="fit a k-nearest-neighbour model instead")
    _gbrt_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict-map", parents=[common], help="ML entropy map of a raster")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--en", type=float, default=1.0)
    p.add_argument("--step", type=_positive_int, default=1)
    p.add_argument("--dl", type=int, default=0)
    p.add_argument("--heatmap")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_predict_map)

    p = sub.add_parser("eval", parents=[common], help="R^2 of ML maps against exact maps")
    p.add_argument("--exact", action="append", required=True, help="exact EGRD map (repeatable)")
    p.add_argument("--ml", action="append", required=True, help="ML EGRD map, paired in order")
    p.add_argument("--csv", help="write per-pair R^2 as CSV")
    p.add_argument("--figure", help="PNG plot of per-pair R^2")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth-approx", parents=[common],
                       help="train on Planck-map series, test on logistic-map series")
    p.add_argument("--train-count", type=_positive_int, default=20_000)
    p.add_argument("--test-count", type=_positive_int, default=3_000)
    p.add_argument("--full-scale", action="store_true", help="use 100000 training series")
    p.add_argument("--out", default="synth_approx.csv", help="CSV of r, SvdEn, ML_SvdEn")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG next to the CSV")
    _gbrt_flags(p)
    p.set_defaults(func=cmd_synth_approx)

    p = sub.add_parser("bifurcation", parents=[common], help="bifurcation diagram data")
    p.add_argument("--map", choices=("planck", "logistic"), default="logistic")
    p.add_argument("--r-count", type=_positive_int, default=1000)
    p.add_argument("--last-k", type=_positive_int, default=100)
    p.add_argument("--out", default="bifurcation.csv")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_bifurcation)

    p = sub.add_parser("texture", parents=[common], help="write a procedural test raster")
    p.add_argument("--kind", choices=("smooth", "speckle", "logistic2d", "fractal"), default="fractal")
    p.add_argument("--size", type=_positive_int, nargs=2, default=[256, 256], metavar=("ROWS", "COLS"))
    p.add_argument("--out", required=True, help="output EGRD raster (PGM when the name ends in .pgm)")
    p.set_defaults(func=cmd_texture)

    p = sub.add_parser("nneten-selftest", parents=[common],
                       help="NNetEn of a constant and a chaotic series")
    p.add_argument("--mnist-dir", required=True)
    p.add_argument("--train-count", type=_positive_int, default=10_000)
    p.add_argument("--test-count", type=_positive_int, default=1_000)
    p.add_argument("--epochs", type=_positive_int, default=4)
    p.add_argument("--length", type=_positive_int, default=49)
    p.add_argument("--en", type=float, default=1.0)
    p.set_defaults(func=cmd_nneten_selftest)
    return parser


# --- config file -------------------------------------------------------------

def read_config(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser, sub_parser, config: dict):
    actions = {a.dest: a for a in sub_parser._actions}
    defaults = {}
    for key, raw in config.items():
        action = actions.get(key)
        if action is None or key in ("help", "config", "func"):
            sub_parser.error(f"unknown config key: {key}")
        if action.nargs == 0:
            value = raw.lower() in ("1", "true", "yes", "on")
        else:
            conv = action.type or str
            try:
                if action.nargs in ("+", "*"):
                    value = [conv(v) for v in raw.replace(",", " ").split()]
                else:
                    value = conv(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                sub_parser.error(f"config key {key}: {exc}")
            if action.choices is not None and value not in action.choices:
                sub_parser.error(f"config key {key}: {value!r} not in {list(action.choices)}")
        defaults[key] = value
        # a config value satisfies a required flag
        action.required = False
    sub_parser.set_defaults(**defaults)


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


# --- helpers -------------------------------------------------------------------

def _entropy_config(args) -> EntropyConfig:
    lognnet = None
    if args.entropy == "nnet":
        lognnet = LogNNetConfig(epochs=args.epochs, train_count=args.train_count,
                                test_count=args.test_count, seed=args.seed)
    # build-dataset passes its EN list separately
    en = args.en if isinstance(args.en, float) else 1.0
    return EntropyConfig.default(args.entropy, d=args.d, delay=args.delay, m=args.m,
                                 r_coef=args.rcoef, en=en, lognnet=lognnet)


def _mnist(args):
    if args.entropy != "nnet":
        return None
    if not args.mnist_dir:
        raise EntropyError("--mnist-dir is required for nnet")
    from .nneten import load_mnist_dir

    return load_mnist_dir(args.mnist_dir, args.train_count, args.test_count)


def _gbrt_params(args) -> GbrtParams:
    return GbrtParams(n_trees=args.n_trees, max_depth=args.max_depth,
                      learning_rate=args.learning_rate,
                      min_samples_leaf=args.min_samples_leaf,
                      subsample=args.subsample, seed=args.seed)


def _report_map(grid, started, out):
    finite = np.isfinite(grid)
    lo = float(grid[finite].min()) if finite.any() else float("nan")
    hi = float(grid[finite].max()) if finite.any() else float("nan")
    print(f"{out}: {grid.shape[0]}x{grid.shape[1]} min={lo:.6g} max={hi:.6g} "
          f"undefined={int((~finite).sum())} time={time.perf_counter() - started:.2f}s")


def _render(grid, args, title):
    if args.heatmap:
        fio.write_heatmap_pgm(grid, args.heatmap)
    if args.figure:
        from .plotting import plot_map

        plot_map(grid, args.figure, title)


# --- subcommands ---------------------------------------------------------------

def cmd_entropy_map(args):
    started = time.perf_counter()
    grid = fio.read_raster(args.input)
    spec = KernelSpec(args.radius, args.step, args.dl)
    cfg = _entropy_config(args)
    emap = entropy_map(grid, spec, cfg, args.en, threads=args.threads, mnist=_mnist(args))
    fio.write_grid(emap, args.out)
    _render(emap, args, f"{args.entropy} EN={args.en} R={args.radius}")
    _report_map(emap, started, args.out)


def cmd_build_dataset(args):
    started = time.perf_counter()
    images = [fio.read_raster(p) for p in args.input]
    spec = KernelSpec(args.radius)
    data = build_dataset(images, spec, _entropy_config(args), args.en, args.stride,
                         mnist=_mnist(args))
    data.meta["sources"] = [str(p) for p in args.input]
    fio.write_dataset(data, args.out)
    if args.csv:
        fio.write_dataset_csv(data, args.csv)
    print(f"{args.out}: {len(data)} rows x {data.feature_len} features "
          f"(dropped {data.meta['dropped']}) time={time.perf_counter() - started:.2f}s")


def cmd_train(args):
    started = time.perf_counter()
    data = fio.read_dataset(args.data)
    if args.knn:
        model = knn_fit(data, args.knn)
        fio.write_model(model, args.out)
        print(f"{args.out}: knn k={args.knn} rows={len(data)}")
        return
    params = _gbrt_params(args)
    if args.kfold:
        mean, folds = kfold_r2(data, args.kfold, params)
        print("kfold R2: " + " ".join(f"{s:.5f}" for s in folds) + f" mean={mean:.5f}")
    model = gbrt_fit(data, params)
    fio.write_model(model, args.out)
    print(f"{args.out}: {len(model.trees)} trees, feature_len={model.feature_len} "
          f"time={time.perf_counter() - started:.2f}s")


def cmd_predict_map(args):
    started = time.perf_counter()
    model = fio.read_model(args.model)
    grid = fio.read_raster(args.input)
    spec = KernelSpec(radius_for_length(model.feature_len), args.step, args.dl)
    emap = ml_entropy_map(grid, spec, model, args.en, threads=args.threads)
    fio.write_grid(emap, args.out)
    _render(emap, args, f"ML EN={args.en} R={spec.radius}")
    _report_map(emap, started, args.out)


def cmd_eval(args):
    if len(args.exact) != len(args.ml):
        raise EntropyError("--exact and --ml must be given the same number of times")
    scores = []
    for exact, ml in zip(args.exact, args.ml):
        score = r2(*masked_pair(fio.read_grid(exact), fio.read_grid(ml)))
        scores.append(score)
        print(f"{ml}\tR2={score:.6f}")
    summary = summarize(scores)
    print(R2Summary.HEADER)
    print(summary.row())
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["exact", "ml", "r2"])
            w.writerows(zip(args.exact, args.ml, scores))
    if args.figure:
        from .plotting import plot_r2_scores

        plot_r2_scores([Path(p).stem for p in args.ml], scores, args.figure)


def cmd_synth_approx(args):
    from .synth import cross_map_experiment, window_dip

    started = time.perf_counter()
    train_count = 100_000 if args.full_scale else args.train_count
    res = cross_map_experiment(train_count, args.test_count, _gbrt_params(args))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "SvdEn", "ML_SvdEn"])
        for row in zip(res.r, res.svden, res.ml_svden):
            w.writerow([repr(float(v)) for v in row])
    print(f"pearson={res.pearson:.4f} train={train_count} test={args.test_count} "
          f"time={time.perf_counter() - started:.1f}s")
    for centre in (3.628, 3.742, 3.838):
        at, around = window_dip(res.r, res.svden, centre)
        ml_at, ml_around = window_dip(res.r, res.ml_svden, centre)
        print(f"r={centre}: SvdEn {at:.4f} (window mean {around:.4f}) "
              f"ML_SvdEn {ml_at:.4f} (window mean {ml_around:.4f})")
    if not args.no_plot:
        from .plotting import plot_entropy_vs_r

        png = Path(args.out).with_suffix(".png")
        plot_entropy_vs_r(res.r, res.svden, res.ml_svden, png,
                          title="logistic map, model trained on Planck map",
                          pearson=res.pearson)
        print(f"figure: {png}")


def cmd_bifurcation(args):
    from .synth import bifurcation_points

    r, iterates = bifurcation_points(args.map, args.r_count, args.last_k)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r"] + [f"x{i + 1}" for i in range(args.last_k)])
        for rv, row in zip(r, iterates):
            w.writerow([repr(float(rv))] + [repr(float(v)) for v in row])
    print(f"{args.out}: {len(r)} rows")
    if not args.no_plot:
        from .plotting import plot_bifurcation

        png = Path(args.out).with_suffix(".png")
        plot_bifurcation(r, iterates, png, title=f"{args.map} map")
        print(f"figure: {png}")


def cmd_texture(args):
    from .synth import gen_texture

    grid = gen_texture(args.seed, args.kind, *args.size)
    if str(args.out).lower().endswith(".pgm"):
        if args.kind != "fractal":
            grid = grid * 65535
        fio.write_pgm(grid, args.out, maxval=65535)
    else:
        fio.write_grid(grid, args.out)
    print(f"{args.out}: {args.kind} {grid.shape[0]}x{grid.shape[1]} seed={args.seed}")


def cmd_nneten_selftest(args):
    from .nneten import load_mnist_dir, nneten
    from .normalize import normalize
    from .synth import MapConfig, generate_series

    mnist = load_mnist_dir(args.mnist_dir, args.train_count, args.test_count)
    cfg = LogNNetConfig(epochs=args.epochs, train_count=args.train_count,
                        test_count=args.test_count, seed=args.seed)
    constant = normalize(np.ones(args.length), args.en)
    chaotic = normalize(generate_series(MapConfig("logistic", 4.0, args.length)), args.en)
    v_const = nneten(constant, mnist, cfg)
    v_chaos = nneten(chaotic, mnist, cfg)
    print(f"NNetEn constant={v_const:.4f}")
    print(f"NNetEn logistic_r4={v_chaos:.4f}")
    if not v_chaos > v_const:
        raise EntropyError("expected the chaotic series to score above the constant one")
    print("ordering ok")


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        subs = _subparsers(parser)
        command = next((a for a in argv if a in subs), None)
        try:
            config = read_config(known.config)
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
        if command is not None:
            _apply_config(parser, subs[command], config)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (EntropyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: align, train, predict, synth and bench.

Data and reports go to files (or stdout with ``-``); diagnostics go to
stderr. Exit codes: 0 ok, 2 input/config, 3 numerical, 4 protocol.
"""
import argparse
import sys
from pathlib import Path

import numpy as np

import bench
from bench_config import build_bench_config, default_jobs, default_seed, load_shift_spec
from classifier import DEFAULT_C_GRID, DEFAULT_FOLDS, cross_validate_C, predict, train_linear_svm
from console import log, set_quiet
from coral import (
    DEFAULT_LAMBDA,
    CoralTransform,
    aligned_target_covariance,
    apply_transform,
    coral_analytical,
    coral_regularized,
    estimate_covariance,
    pull_back_weights,
)
from data import (
    FORMATS,
    generate_shift,
    load_features,
    load_labeled,
    load_model,
    save_features,
    save_labels,
    save_model,
)
from errors import ConfigError, CoralError, ShapeError, SingularCovarianceError
from linalg import spectrum_summary


def _seed(args):
    return args.seed if args.seed is not None else default_seed()


def _grid(raw):
    try:
        return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot read C grid {raw!r}") from None


def cmd_align(args):
    source = load_features(args.source)
    target = load_features(args.target)
    log(f"[align] source {source.shape[0]}x{source.shape[1]}, target {target.shape[0]}x{target.shape[1]}")
    if args.stats:
        for name, F in (("source", source), ("target", target)):
            s = spectrum_summary(estimate_covariance(F))
            log(f"[align] {name} covariance: top eigenvalue {s['top_eigenvalue']:.4g}, "
                f"rank {s['rank']}, condition {s['condition']:.3g}")

    if args.mode == "analytical":
        transform = coral_analytical(source, target)
        aligned = apply_transform(source, transform)
        log(f"[align] analytical transform, rank {transform.rank}")
        if args.stats:
            truncated = aligned_target_covariance(target, transform)
            residual = np.linalg.norm(estimate_covariance(aligned) - truncated)
            log(f"[align] residual against rank-{transform.rank} target covariance: {residual:.4g}")
    else:
        aligned, transform = coral_regularized(source, target, args.lam)
        log(f"[align] regularized transform, lambda {transform.lam:g}")

    save_features(args.out, aligned, args.format)
    if args.emit_transform:
        save_features(args.emit_transform, transform.matrix, args.format)
        log(f"[align] transform written to {args.emit_transform}")
    log(f"[align] aligned source written to {args.out}")
    return 0


def cmd_train(args):
    data = load_labeled(args.features, args.labels)
    seed = _seed(args)
    if args.cv:
        C = cross_validate_C(data, args.grid, args.folds, seed)
        log(f"[train] cross-validated C = {C:g} over {len(args.grid)} values, {args.folds} folds")
    else:
        C = args.C
    model = train_linear_svm(data, C, seed=seed)
    save_model(args.out_model, model)
    log(f"[train] {model.n_classes}-class model on {data.n} rows written to {args.out_model}")
    return 0


def _load_transform(path):
    A = load_features(path)
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"{path}: transform must be square, got {A.shape[0]}x{A.shape[1]}")
    return CoralTransform(matrix=A, lam=float("nan"), mode="loaded", rank=A.shape[0])


def cmd_predict(args):
    model = load_model(args.model)
    if args.transform:
        # scores on raw rows now equal the trained model's scores on aligned rows
        model = pull_back_weights(model, _load_transform(args.transform))
        log(f"[predict] transform {args.transform} folded into the model weights")
    labels = predict(model, load_features(args.features))
    if args.out == "-":
        sys.stdout.write("".join(f"{int(label)}\n" for label in labels))
    else:
        save_labels(args.out, labels)
        log(f"[predict] {labels.shape[0]} labels written to {args.out}")
    return 0


def cmd_synth(args):
    spec = load_shift_spec(args.spec, seed=args.seed)
    source, target = generate_shift(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = "bin" if args.format == "bin" else "txt"
    for name, dataset in (("source", source), ("target", target)):
        save_features(out_dir / f"{name}_features.{ext}", dataset.features, args.format)
        save_labels(out_dir / f"{name}_labels.txt", dataset.labels)
    log(f"[synth] {spec.n_classes} classes x {spec.per_class} per domain, dim {spec.dim}, "
        f"map condition {spec.condition_number:.3g}, seed {spec.seed} -> {out_dir}")
    return 0


def cmd_bench(args):
    config = build_bench_config(args.config, seed=args.seed)
    out = args.out or config.output_path
    if not out:
        raise ConfigError("output path: give --out or set [output] path")
    fmt = args.format or config.output_format
    report = bench.run_matrix(config, jobs=args.jobs)
    bench.emit_report(report, out, fmt)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="coral", description="Correlation alignment for domain adaptation")
    parser.add_argument("--seed", type=int, default=None, help="default seed (falls back to CORAL_SEED, then 0)")
    # also accepted after the subcommand; absent there, the global value stands
    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="overrides the global --seed")
    parser.add_argument("--quiet", action="store_true", help="only report errors on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    align = sub.add_parser("align", parents=[seeded], help="align source features to the target covariance")
    align.add_argument("--source", required=True)
    align.add_argument("--target", required=True)
    align.add_argument("--out", required=True)
    align.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    align.add_argument("--mode", choices=("reg", "analytical"), default="reg")
    align.add_argument("--emit-transform", default=None)
    align.add_argument("--format", choices=FORMATS, default="text")
    align.add_argument("--stats", action="store_true", help="log covariance spectrum summaries")
    align.set_defaults(handler=cmd_align)

    train = sub.add_parser("train", parents=[seeded], help="train the linear SVM base classifier")
    train.add_argument("--features", required=True)
    train.add_argument("--labels", required=True)
    train.add_argument("--out-model", required=True)
    choice = train.add_mutually_exclusive_group()
    choice.add_argument("--C", type=float, default=1.0)
    choice.add_argument("--cv", action="store_true", help="select C by stratified cross-validation")
    train.add_argument("--grid", type=_grid, default=DEFAULT_C_GRID)
    train.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
    train.set_defaults(handler=cmd_train)

    pred = sub.add_parser("predict", parents=[seeded], help="predict one label per feature row")
    pred.add_argument("--model", required=True)
    pred.add_argument("--features", required=True)
    pred.add_argument("--out", required=True, help="labels file, or - for stdout")
    pred.add_argument("--transform", default=None, help="alignment matrix the model was trained behind")
    pred.set_defaults(handler=cmd_predict)

    synth = sub.add_parser("synth", parents=[seeded], help="write a synthetic source/target domain pair")
    synth.add_argument("--spec", required=True)
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--format", choices=FORMATS, default="text")
    synth.set_defaults(handler=cmd_synth)

    run = sub.add_parser("bench", parents=[seeded], help="run the evaluation protocol from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None)
    run.add_argument("--format", choices=bench.REPORT_FORMATS, default=None)
    run.add_argument("--jobs", type=int, default=None)
    run.set_defaults(handler=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    set_quiet(args.quiet)
    try:
        if getattr(args, "jobs", 0) is None:
            args.jobs = default_jobs()
        return args.handler(args)
    except SingularCovarianceError as ex:
        print(f"[error] {ex}", file=sys.stderr)
        print("[error] hint: rerun with --mode analytical or a positive --lambda", file=sys.stderr)
        return ex.exit_code
    except CoralError as ex:
        print(f"[error] {ex}", file=sys.stderr)
        return ex.exit_code
    except OSError as ex:
        print(f"[error] {ex}", file=sys.stderr)
        return 2

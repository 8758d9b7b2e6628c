"""Experiment harness.

Runs seeded trials per (shift, method), aggregates them into ShiftResults and
writes csv/markdown reports. Every trial is an independent job keyed by its
own seed, so running jobs in parallel never changes a reported value.
"""
import csv
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from classifier import accuracy, cross_validate_C, predict, train_linear_svm
from console import is_quiet, log, set_quiet
from coral import (
    DEFAULT_LAMBDA,
    apply_normalization,
    apply_transform,
    coral_analytical,
    coral_regularized,
    normalize_features,
    whiten,
)
from data import subsample
from errors import ConfigError, CoralError, InputError, ReportWriteError, ShapeError, annotate


NA = "NA"
CORAL_REG = "CORAL_REG"
CORAL_ANALYTICAL = "CORAL_ANALYTICAL"
WHITEN_BOTH = "WHITEN_BOTH"
ORACLE = "ORACLE"
METHOD_KINDS = (NA, CORAL_REG, CORAL_ANALYTICAL, WHITEN_BOTH, ORACLE)
REPORT_FORMATS = ("csv", "markdown")
CSV_HEADER = ("shift", "method", "mean", "std", "trials")

_METHOD_PATTERN = re.compile(r"^\s*([A-Z_]+)\s*(?:\(\s*([^)]*?)\s*\))?\s*$")


@dataclass(frozen=True)
class MethodId:
    kind: str
    lam: float = None

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ConfigError(f"unknown method {self.kind!r}; expected one of {METHOD_KINDS}")
        if self.kind == CORAL_REG and self.lam is None:
            raise ConfigError("CORAL_REG needs a lambda, e.g. CORAL_REG(1)")
        if self.lam is not None and self.kind not in (CORAL_REG, WHITEN_BOTH):
            raise ConfigError(f"method {self.kind} takes no lambda")
        if self.lam is not None and self.lam < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")

    @property
    def label(self):
        if self.lam is None:
            return self.kind
        return f"{self.kind}({self.lam:g})"


def parse_method(text):
    match = _METHOD_PATTERN.match(text)
    if not match:
        raise ConfigError(f"cannot parse method {text!r}")
    kind, arg = match.groups()
    if arg is None or arg == "":
        lam = DEFAULT_LAMBDA if kind == CORAL_REG else None
    else:
        try:
            lam = float(arg)
        except ValueError:
            raise ConfigError(f"method {text!r} has a non-numeric lambda") from None
    return MethodId(kind, lam)


def lambda_sweep_methods(lambdas):
    """lambda = 0 means no regularization, which is the analytical transform."""
    return [MethodId(CORAL_ANALYTICAL) if lam == 0 else MethodId(CORAL_REG, float(lam)) for lam in lambdas]


@dataclass(frozen=True)
class ShiftResult:
    shift: str
    method: MethodId
    accuracies: tuple
    seconds: tuple

    @property
    def trials(self):
        return len(self.accuracies)

    @property
    def mean(self):
        return float(np.mean(self.accuracies))

    @property
    def std(self):
        return float(np.std(self.accuracies))


@dataclass(frozen=True)
class ExperimentReport:
    results: tuple
    shifts: tuple
    methods: tuple

    def result(self, shift, method):
        for r in self.results:
            if r.shift == shift and r.method == method:
                return r
        raise KeyError((shift, method.label))

    def average(self, method):
        return float(np.mean([r.mean for r in self.results if r.method == method]))


def shift_name(source, target):
    return f"{source}->{target}"


def _prepare_trial(source, target, method, protocol, trial, per_class):
    seed = protocol.trial_seed(trial)
    pool = target if method.kind == ORACLE else source
    train = subsample(pool, per_class, seed) if protocol.mode == "subsampled" else pool

    # target statistics come from all (unlabeled) target rows
    target_features, target_stats = normalize_features(target.features)
    if method.kind == ORACLE:
        train_features = apply_normalization(train.features, target_stats)
    else:
        train_features, _ = normalize_features(train.features)

    if method.kind == CORAL_REG:
        train_features, _ = coral_regularized(train_features, target_features, method.lam)
    elif method.kind == CORAL_ANALYTICAL:
        train_features = apply_transform(train_features, coral_analytical(train_features, target_features))
    elif method.kind == WHITEN_BOTH:
        lam = protocol.lam if method.lam is None else method.lam
        train_features = whiten(train_features, lam)
        target_features = whiten(target_features, lam)
    return train.with_features(train_features), target_features


def run_trial(source, target, method, protocol, trial, per_class=None):
    """One seeded trial; returns (target accuracy, wall-clock seconds)."""
    start = time.perf_counter()
    if per_class is None:
        per_class = protocol.per_class
    seed = protocol.trial_seed(trial)
    train, target_features = _prepare_trial(source, target, method, protocol, trial, per_class)

    grid = protocol.c_grid
    C = grid[0] if len(grid) == 1 else cross_validate_C(train, grid, protocol.folds, seed)
    model = train_linear_svm(train, C, seed=seed)
    score = accuracy(predict(model, target_features), target.labels)
    return score, time.perf_counter() - start


def _trial_job(job):
    name, source, target, method, protocol, trial, per_class = job
    try:
        return run_trial(source, target, method, protocol, trial, per_class)
    except CoralError as ex:
        raise annotate(ex, f"shift {name}, method {method.label}, trial {trial}") from ex


def _run_jobs(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_trial_job(job) for job in jobs]
    # map keeps submission order
    with ProcessPoolExecutor(max_workers=workers, initializer=set_quiet, initargs=(is_quiet(),)) as pool:
        return list(pool.map(_trial_job, jobs))


def _trial_jobs(name, source, target, method, protocol, per_class):
    if source.dim != target.dim:
        raise ShapeError(f"shift {name}: source has {source.dim} features, target has {target.dim}")
    return [(name, source, target, method, protocol, t, per_class) for t in range(protocol.trials)]


def _collect(name, method, outcomes):
    result = ShiftResult(
        shift=name,
        method=method,
        accuracies=tuple(float(a) for a, _ in outcomes),
        seconds=tuple(float(s) for _, s in outcomes),
    )
    log(f"[bench] {name} {method.label}: {100 * result.mean:.1f} +/- {100 * result.std:.1f} "
        f"over {result.trials} trials")
    return result


def run_shift(source, target, method, protocol, name="source->target", per_class=None, jobs=1):
    jobs_list = _trial_jobs(name, source, target, method, protocol, per_class or protocol.per_class)
    return _collect(name, method, _run_jobs(jobs_list, jobs))


def run_matrix(config, jobs=1):
    """Run every (shift, method) pair the config names; shifts default to all ordered domain pairs."""
    domains = config.resolve_domains()
    names = list(domains)
    if config.shifts is None:
        pairs = [(a, b) for a in names for b in names if a != b]
    else:
        pairs = list(config.shifts)
        unresolved = sorted({d for pair in pairs for d in pair if d not in domains})
        if unresolved:
            raise ConfigError(f"shifts reference unknown domains: {', '.join(unresolved)}")
    if not pairs:
        raise ConfigError("config defines no shifts; at least two domains are needed")

    protocol = config.protocol
    plan, jobs_list = [], []
    for src, tgt in pairs:
        name = shift_name(src, tgt)
        for method in config.methods:
            per_class = protocol.per_class_for(tgt if method.kind == ORACLE else src)
            batch = _trial_jobs(name, domains[src], domains[tgt], method, protocol, per_class)
            plan.append((name, method, len(batch)))
            jobs_list.extend(batch)

    log(f"[bench] {len(pairs)} shifts x {len(config.methods)} methods x {protocol.trials} trials "
        f"on {max(jobs, 1)} worker(s)")
    outcomes = _run_jobs(jobs_list, jobs)

    results, offset = [], 0
    for name, method, count in plan:
        results.append(_collect(name, method, outcomes[offset: offset + count]))
        offset += count
    return ExperimentReport(
        results=tuple(results),
        shifts=tuple(shift_name(a, b) for a, b in pairs),
        methods=tuple(config.methods),
    )


def _csv_rows(report):
    yield CSV_HEADER
    for method in report.methods:
        for shift in report.shifts:
            r = report.result(shift, method)
            yield (shift, method.label, repr(r.mean), repr(r.std), r.trials)
        if len(report.shifts) > 1:
            trials = report.result(report.shifts[0], method).trials
            yield ("AVG", method.label, repr(report.average(method)), "", trials)


def _markdown_lines(report):
    multi = len(report.shifts) > 1
    columns = list(report.shifts) + (["AVG"] if multi else [])
    yield "# Target accuracy (%)"
    for method in report.methods:
        cells = []
        for shift in report.shifts:
            r = report.result(shift, method)
            cells.append(f"{100 * r.mean:.1f} ± {100 * r.std:.1f}")
        if multi:
            cells.append(f"{100 * report.average(method):.1f}")
        yield ""
        yield f"## {method.label}"
        yield ""
        yield "| | " + " | ".join(columns) + " |"
        yield "|---|" + "---|" * len(columns)
        yield "| accuracy | " + " | ".join(cells) + " |"


def emit_report(report, path, fmt="csv"):
    if not report.results:
        raise InputError("cannot write an empty report")
    if fmt not in REPORT_FORMATS:
        raise InputError(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            if fmt == "csv":
                csv.writer(f, lineterminator="\n").writerows(_csv_rows(report))
            else:
                f.write("\n".join(_markdown_lines(report)) + "\n")
    except OSError as ex:
        raise ReportWriteError(f"{path}: cannot write report ({ex.strerror or ex})") from ex
    log(f"[bench] wrote {fmt} report to {path}")

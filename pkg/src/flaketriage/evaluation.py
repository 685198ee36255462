"""Confusion-matrix accounting, metrics, cross-validation, and report tables.

Scoring follows the conservative triage rule throughout: a flaky failure
counts as a true positive only when it matches at least one other flaky
failure and no true failure; everything else makes it a false negative. A
failure is never compared against itself.
"""
from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from .classifier import (
    default_cut_prefixes,
    extract_features,
    oversample,
    train_decision_tree,
    train_naive_bayes,
)
from .errors import InsufficientFlaky, InsufficientTrue
from .ingest import normalize
from .matching import (
    FailureSignature,
    MatchMode,
    MatchScope,
    ProjectRepetitiveness,
    RepetitivenessReport,
    signature,
)
from .model import Corpus, FailureRecord, Label, TestId
from .tfidf import classify_nn

MIN_FLAKY_FOR_CV = 10
DEFAULT_FOLDS = 5
OVERSAMPLE_THRESHOLD = 0.10

Predictor = Callable[[FailureRecord], Label]
Trainer = Callable[[Sequence[FailureRecord]], Predictor]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp,
            self.fn + other.fn,
            self.fp + other.fp,
            self.tn + other.tn,
        )


@dataclass(frozen=True)
class MetricSet:
    """Precision, recall, specificity, and F1; None when the ratio is 0/0."""

    precision: float | None
    recall: float | None
    specificity: float | None
    f1: float | None


def _ratio(numerator: int, denominator: int) -> float | None:
    if denominator == 0:
        return None
    return numerator / denominator


def metrics(cm: ConfusionMatrix) -> MetricSet:
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    specificity = _ratio(cm.tn, cm.tn + cm.fp)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricSet(precision, recall, specificity, f1)


def format_metric(value: float | None) -> str:
    """One-decimal percentage, or "n/a" for an undefined metric."""
    if value is None:
        return "n/a"
    return f"{100 * value:.1f}%"


# --- matching-based scoring -------------------------------------------------


@dataclass(frozen=True)
class ScoreResult:
    """Corpus-wide confusion matrix plus per-test TP/FN presence flags."""

    matrix: ConfusionMatrix
    per_test: dict[TestId, tuple[bool, bool]]

    @property
    def tests_with_tp(self) -> int:
        return sum(1 for has_tp, _ in self.per_test.values() if has_tp)

    @property
    def tests_with_fn(self) -> int:
        return sum(1 for _, has_fn in self.per_test.values() if has_fn)


def _record_outcomes(corpus: Corpus, mode: MatchMode, scope: MatchScope):
    """Yield (project, test, label, exception_type, outcome) per record.

    Outcome is "tp"/"fn" for flaky records and "fp"/"tn" for true records,
    scored against all other records in scope with the record itself
    excluded.
    """
    for project in corpus.project_names():
        tests = corpus.tests(project)
        known = frozenset(tests)
        entries: list[tuple[TestId, Label, str, object]] = []
        group_counts: dict[object, Counter[Label]] = {}
        for test in tests:
            for label in (Label.FLAKY, Label.TRUE):
                for record in corpus.bucket(test, label):
                    sig = signature(normalize(record), mode, scope, known)
                    key: object = (test, sig) if scope is MatchScope.PER_TEST else sig
                    entries.append((test, label, record.exception_type, key))
                    group_counts.setdefault(key, Counter())[label] += 1
        for test, label, exception_type, key in entries:
            group = group_counts[key]
            if label is Label.FLAKY:
                other_flaky = group[Label.FLAKY] - 1
                outcome = (
                    "tp" if other_flaky >= 1 and group[Label.TRUE] == 0 else "fn"
                )
            else:
                outcome = "fp" if group[Label.FLAKY] >= 1 else "tn"
            yield project, test, label, exception_type, outcome


def score_matching(
    corpus: Corpus,
    mode: MatchMode = MatchMode.FULL,
    scope: MatchScope = MatchScope.PER_TEST,
) -> ScoreResult:
    """Score every labeled failure against the rest of its scope."""
    counts = Counter()
    per_test: dict[TestId, list[bool]] = {}
    for _, test, _, _, outcome in _record_outcomes(corpus, mode, scope):
        counts[outcome] += 1
        flags = per_test.setdefault(test, [False, False])
        if outcome == "tp":
            flags[0] = True
        elif outcome == "fn":
            flags[1] = True
    matrix = ConfusionMatrix(
        counts["tp"], counts["fn"], counts["fp"], counts["tn"]
    )
    return ScoreResult(matrix, {t: (a, b) for t, (a, b) in per_test.items()})


def distinct_signature_counts(corpus: Corpus, project: str) -> tuple[int, int]:
    """Distinct per-test full signatures in the flaky and true buckets."""
    flaky: set[tuple[TestId, FailureSignature]] = set()
    true: set[tuple[TestId, FailureSignature]] = set()
    for test in corpus.tests(project):
        for label, bag in ((Label.FLAKY, flaky), (Label.TRUE, true)):
            for record in corpus.bucket(test, label):
                bag.add((test, signature(normalize(record))))
    return len(flaky), len(true)


# --- exception frequency table ----------------------------------------------


@dataclass(frozen=True)
class ExceptionRow:
    exception: str
    projects: int
    tests: int
    failures: int
    true: int
    flaky: int
    tp: int
    fn: int
    fp: int
    tn: int


def exception_frequency(corpus: Corpus, mode: MatchMode) -> list[ExceptionRow]:
    """Per-exception aggregation of per-test matching outcomes.

    Rows are sorted by total failure count descending (exception name breaks
    ties). Run once with FULL and once with EXCEPTION_ONLY mode to see how
    much the stack frames contribute beyond the exception type.
    """
    projects: dict[str, set[str]] = {}
    tests: dict[str, set[TestId]] = {}
    counters: dict[str, Counter[str]] = {}
    for project, test, label, exception_type, outcome in _record_outcomes(
        corpus, mode, MatchScope.PER_TEST
    ):
        projects.setdefault(exception_type, set()).add(project)
        tests.setdefault(exception_type, set()).add(test)
        counter = counters.setdefault(exception_type, Counter())
        counter[label.value] += 1
        counter[outcome] += 1
    rows = [
        ExceptionRow(
            exception=name,
            projects=len(projects[name]),
            tests=len(tests[name]),
            failures=counter["flaky"] + counter["true"],
            true=counter["true"],
            flaky=counter["flaky"],
            tp=counter["tp"],
            fn=counter["fn"],
            fp=counter["fp"],
            tn=counter["tn"],
        )
        for name, counter in counters.items()
    ]
    rows.sort(key=lambda row: (-row.failures, row.exception))
    return rows


# --- stratified cross-validation ---------------------------------------------


@dataclass(frozen=True)
class CvResult:
    """Per-fold confusion matrices for one project, plus held-out sizes."""

    folds: tuple[ConfusionMatrix, ...]
    fold_sizes: tuple[tuple[int, int], ...]  # (flaky, true) held out per fold

    @property
    def total(self) -> ConfusionMatrix:
        out = ConfusionMatrix()
        for fold in self.folds:
            out = out + fold
        return out

    @property
    def metrics(self) -> MetricSet:
        return metrics(self.total)


def cross_validate_project(
    flaky: Sequence[FailureRecord],
    true: Sequence[FailureRecord],
    k: int,
    trainer: Trainer,
    seed: int = 0,
) -> CvResult:
    """Seeded stratified k-fold evaluation of one project.

    Each label class is shuffled once and dealt round-robin to the k folds,
    so fold sizes within a class differ by at most one and every fold holds
    at least one flaky failure whenever there are at least k of them.
    """
    if len(flaky) < k:
        raise InsufficientFlaky(f"{len(flaky)} flaky failures but k={k}")
    if len(true) < k:
        raise InsufficientTrue(f"{len(true)} true failures but k={k}")
    rng = random.Random(seed)
    shuffled_flaky = list(flaky)
    shuffled_true = list(true)
    rng.shuffle(shuffled_flaky)
    rng.shuffle(shuffled_true)
    flaky_folds = [shuffled_flaky[i::k] for i in range(k)]
    true_folds = [shuffled_true[i::k] for i in range(k)]

    fold_matrices = []
    fold_sizes = []
    for held_out in range(k):
        training = [
            record
            for i in range(k)
            if i != held_out
            for record in flaky_folds[i] + true_folds[i]
        ]
        predictor = trainer(training)
        tp = fn = fp = tn = 0
        for record in flaky_folds[held_out] + true_folds[held_out]:
            predicted = predictor(record)
            if record.label is Label.FLAKY:
                if predicted is Label.FLAKY:
                    tp += 1
                else:
                    fn += 1
            else:
                if predicted is Label.FLAKY:
                    fp += 1
                else:
                    tn += 1
        fold_matrices.append(ConfusionMatrix(tp, fn, fp, tn))
        fold_sizes.append(
            (len(flaky_folds[held_out]), len(true_folds[held_out]))
        )
    return CvResult(tuple(fold_matrices), tuple(fold_sizes))


@dataclass(frozen=True)
class CorpusCvResult:
    per_project: dict[str, CvResult]
    skipped: dict[str, str]

    @property
    def aggregate(self) -> ConfusionMatrix:
        out = ConfusionMatrix()
        for result in self.per_project.values():
            out = out + result.total
        return out

    @property
    def aggregate_metrics(self) -> MetricSet:
        return metrics(self.aggregate)


def stratified_cv(
    corpus: Corpus,
    k: int,
    trainer: Trainer,
    seed: int = 0,
    min_flaky: int = MIN_FLAKY_FOR_CV,
) -> CorpusCvResult:
    """Cross-validate every project of a corpus independently.

    Projects with fewer than ``min_flaky`` flaky failures are skipped with a
    diagnostic instead of being evaluated. Each project is seeded with the
    same ``seed``, so per-project results do not depend on evaluation order.
    """
    per_project: dict[str, CvResult] = {}
    skipped: dict[str, str] = {}
    for project in corpus.project_names():
        flaky = list(corpus.records(project, Label.FLAKY))
        true = list(corpus.records(project, Label.TRUE))
        if len(flaky) < min_flaky:
            skipped[project] = (
                f"fewer than {min_flaky} flaky failures ({len(flaky)})"
            )
            continue
        per_project[project] = cross_validate_project(
            flaky, true, k, trainer, seed
        )
    return CorpusCvResult(per_project, skipped)


# --- training strategies -----------------------------------------------------


def match_trainer(
    mode: MatchMode = MatchMode.FULL, scope: MatchScope = MatchScope.PER_TEST
) -> Trainer:
    """Exact-matching strategy: predict flaky iff only flaky records match.

    Equivalent to running triage() against the training records, but the
    training signatures are indexed once per fold.
    """

    def train(records: Sequence[FailureRecord]) -> Predictor:
        known = frozenset(r.test for r in records)
        index: dict[object, set[Label]] = {}
        for record in records:
            sig = signature(normalize(record), mode, scope, known)
            key: object = (record.test, sig) if scope is MatchScope.PER_TEST else sig
            index.setdefault(key, set()).add(record.label)

        def predictor(record: FailureRecord) -> Label:
            sig = signature(normalize(record), mode, scope, known)
            key: object = (record.test, sig) if scope is MatchScope.PER_TEST else sig
            labels = index.get(key, set())
            return Label.FLAKY if labels == {Label.FLAKY} else Label.TRUE

        return predictor

    return train


def _feature_context(records: Sequence[FailureRecord]):
    known = frozenset(r.test for r in records)
    return known, default_cut_prefixes(known)


def tree_trainer(
    max_depth: int | None = None,
    min_leaf: int = 1,
    oversample_threshold: float | None = None,
    seed: int = 0,
) -> Trainer:
    def train(records: Sequence[FailureRecord]) -> Predictor:
        known, cut_prefixes = _feature_context(records)
        data = [
            (extract_features(normalize(r), known, cut_prefixes), r.label)
            for r in records
        ]
        if oversample_threshold is not None:
            data = oversample(data, oversample_threshold, seed)
        model = train_decision_tree(data, max_depth=max_depth, min_leaf=min_leaf)

        def predictor(record: FailureRecord) -> Label:
            return model.predict(
                extract_features(normalize(record), known, cut_prefixes)
            )

        return predictor

    return train


def bayes_trainer(
    smoothing: float = 1.0,
    oversample_threshold: float | None = None,
    seed: int = 0,
) -> Trainer:
    def train(records: Sequence[FailureRecord]) -> Predictor:
        known, cut_prefixes = _feature_context(records)
        data = [
            (extract_features(normalize(r), known, cut_prefixes), r.label)
            for r in records
        ]
        if oversample_threshold is not None:
            data = oversample(data, oversample_threshold, seed)
        model = train_naive_bayes(data, smoothing)

        def predictor(record: FailureRecord) -> Label:
            return model.predict(
                extract_features(normalize(record), known, cut_prefixes)
            )

        return predictor

    return train


def tfidf_trainer() -> Trainer:
    def train(records: Sequence[FailureRecord]) -> Predictor:
        history = Corpus()
        history.add_all(records)

        def predictor(record: FailureRecord) -> Label:
            return classify_nn(record, history).predicted

        return predictor

    return train


# --- report rendering ---------------------------------------------------------

MATCHING_COLUMNS = (
    "project", "tests", "true", "flaky", "set_true", "set_flaky",
    "tp", "fn", "fp", "tn",
    "precision", "recall", "specificity", "f1", "tests_tp", "tests_fn",
)
CV_COLUMNS = (
    "project", "tests", "flaky", "true",
    "tp", "fn", "fp", "tn",
    "precision", "recall", "specificity", "f1",
)
EXCEPTION_COLUMNS = (
    "exception", "projects", "tests", "failures", "true", "flaky",
    "tp", "fn", "fp", "tn",
)
REPETITIVENESS_COLUMNS = (
    "project", "tests", "flaky", "set",
    "uniq_per_test", "repet_per_test", "uniq_cross", "repet_cross",
)


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Fixed-width table: first column left-aligned, the rest right-aligned."""
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]

    def fmt(cells: Sequence[str]) -> str:
        parts = [cells[0].ljust(widths[0])]
        parts.extend(cell.rjust(width) for cell, width in zip(cells[1:], widths[1:]))
        return "  ".join(parts).rstrip()

    lines = [fmt(headers)]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def _metric_cells(metric_set: MetricSet) -> list[str]:
    return [
        format_metric(metric_set.precision),
        format_metric(metric_set.recall),
        format_metric(metric_set.specificity),
        format_metric(metric_set.f1),
    ]


def render_matching_table(
    per_project: dict[str, tuple[ScoreResult, int, int, int, int, int]]
) -> str:
    """Table of per-project matching results plus a total row.

    Each project maps to (score, tests, true, flaky, set_true, set_flaky),
    where the set counts are distinct per-test full signatures per label.
    """
    rows = []
    total = ConfusionMatrix()
    sums = Counter()
    for project in sorted(per_project):
        score, tests, n_true, n_flaky, set_true, set_flaky = per_project[project]
        cm = score.matrix
        total = total + cm
        sums.update(
            tests=tests, true=n_true, flaky=n_flaky,
            set_true=set_true, set_flaky=set_flaky,
            tests_tp=score.tests_with_tp, tests_fn=score.tests_with_fn,
        )
        rows.append(
            [project, str(tests), str(n_true), str(n_flaky),
             str(set_true), str(set_flaky),
             str(cm.tp), str(cm.fn), str(cm.fp), str(cm.tn)]
            + _metric_cells(metrics(cm))
            + [str(score.tests_with_tp), str(score.tests_with_fn)]
        )
    if rows:
        rows.append(
            ["total", str(sums["tests"]), str(sums["true"]), str(sums["flaky"]),
             str(sums["set_true"]), str(sums["set_flaky"]),
             str(total.tp), str(total.fn), str(total.fp), str(total.tn)]
            + _metric_cells(metrics(total))
            + [str(sums["tests_tp"]), str(sums["tests_fn"])]
        )
    return render_table(MATCHING_COLUMNS, rows)


def render_cv_table(
    result: CorpusCvResult, test_counts: dict[str, tuple[int, int, int]]
) -> str:
    """Table of per-project cross-validation totals plus an aggregate row.

    ``test_counts`` maps project name to (tests, flaky, true).
    """
    rows = []
    sums = Counter()
    for project in sorted(result.per_project):
        cv = result.per_project[project]
        tests, flaky, true = test_counts[project]
        sums.update(tests=tests, flaky=flaky, true=true)
        cm = cv.total
        rows.append(
            [project, str(tests), str(flaky), str(true),
             str(cm.tp), str(cm.fn), str(cm.fp), str(cm.tn)]
            + _metric_cells(cv.metrics)
        )
    if rows:
        cm = result.aggregate
        rows.append(
            ["total", str(sums["tests"]), str(sums["flaky"]), str(sums["true"]),
             str(cm.tp), str(cm.fn), str(cm.fp), str(cm.tn)]
            + _metric_cells(result.aggregate_metrics)
        )
    return render_table(CV_COLUMNS, rows)


def render_exceptions_table(rows: Sequence[ExceptionRow]) -> str:
    return render_table(
        EXCEPTION_COLUMNS,
        [
            [row.exception, str(row.projects), str(row.tests), str(row.failures),
             str(row.true), str(row.flaky),
             str(row.tp), str(row.fn), str(row.fp), str(row.tn)]
            for row in rows
        ],
    )


def render_repetitiveness_table(report: RepetitivenessReport) -> str:
    rows = []
    for project in sorted(report.per_project):
        stats = report.per_project[project]
        rows.append([project] + _repetitiveness_cells(stats))
    if rows:
        rows.append(["total"] + _repetitiveness_cells(report.total()))
    return render_table(REPETITIVENESS_COLUMNS, rows)


def _repetitiveness_cells(stats: ProjectRepetitiveness) -> list[str]:
    return [
        str(stats.tests), str(stats.flaky), str(stats.distinct),
        str(stats.uniq_per_test), str(stats.repet_per_test),
        str(stats.uniq_cross), str(stats.repet_cross),
    ]


def matching_record_json(project: str, score: ScoreResult) -> str:
    """One machine-readable line for a project's matching evaluation."""
    cm = score.matrix
    metric_set = metrics(cm)
    return json.dumps(
        {
            "project": project,
            "tp": cm.tp, "fn": cm.fn, "fp": cm.fp, "tn": cm.tn,
            "precision": metric_set.precision,
            "recall": metric_set.recall,
            "specificity": metric_set.specificity,
            "f1": metric_set.f1,
            "tests_tp": score.tests_with_tp,
            "tests_fn": score.tests_with_fn,
        },
        sort_keys=True,
    )


def cv_record_json(project: str, result: CvResult) -> list[str]:
    """Machine-readable lines for a project: one per fold plus a total."""
    lines = []
    for fold, cm in enumerate(result.folds):
        lines.append(
            json.dumps(
                {
                    "project": project, "fold": fold,
                    "held_out_flaky": result.fold_sizes[fold][0],
                    "held_out_true": result.fold_sizes[fold][1],
                    "tp": cm.tp, "fn": cm.fn, "fp": cm.fp, "tn": cm.tn,
                },
                sort_keys=True,
            )
        )
    cm = result.total
    metric_set = result.metrics
    lines.append(
        json.dumps(
            {
                "project": project, "fold": "total",
                "tp": cm.tp, "fn": cm.fn, "fp": cm.fp, "tn": cm.tn,
                "precision": metric_set.precision,
                "recall": metric_set.recall,
                "specificity": metric_set.specificity,
                "f1": metric_set.f1,
            },
            sort_keys=True,
        )
    )
    return lines

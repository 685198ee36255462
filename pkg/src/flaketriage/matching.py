"""Exact text-based failure matching and history-based triage.

A failure's signature is its exception type plus its normalized stack frames
rendered to text; the free-text message never participates, because volatile
details (hosts, timestamps) would otherwise set equivalent failures apart.
Matching is exact componentwise equality of signatures.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum

from .errors import ModeMismatch
from .ingest import NormalizedFailure, normalize
from .model import Corpus, Label, TestId


class MatchMode(Enum):
    """What a signature is built from: frames and exception, or exception only."""

    FULL = "full"
    EXCEPTION_ONLY = "exception_only"

    def __str__(self) -> str:
        return self.value


class MatchScope(Enum):
    """Whether failures are compared within one test or across a project.

    Cross-test comparison additionally removes frames that point at tests,
    since those frames would otherwise prevent any cross-test match.
    """

    PER_TEST = "per_test"
    CROSS_TEST = "cross_test"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class FailureSignature:
    """Canonical match key of a failure under a chosen mode and scope.

    Equality is componentwise; two signatures from different modes or scopes
    are never meaningfully comparable (see :func:`matches`).
    """

    exception_type: str
    frame_keys: tuple[str, ...]
    mode: MatchMode
    scope: MatchScope


class TriageBasis(Enum):
    """Which kinds of history records a triaged failure matched."""

    MATCHED_FLAKY_ONLY = "matched_flaky_only"
    MATCHED_TRUE = "matched_true"
    MATCHED_BOTH = "matched_both"
    MATCHED_NONE = "matched_none"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TriageVerdict:
    """Outcome of comparing one failure against a labeled history.

    ``predicted`` is flaky exactly when the basis is MATCHED_FLAKY_ONLY; any
    true-match or no-match is conservatively treated as a real failure, so a
    verdict can never silently suppress a defect it has seen evidence for.
    """

    predicted: Label
    basis: TriageBasis
    evidence: tuple[str, ...] = ()


def _frame_key(frame, strip_line_numbers: bool) -> str:
    if strip_line_numbers and frame.file is not None and frame.line is not None:
        return f"{frame.class_fqn}.{frame.method}({frame.file})"
    return frame.render()


def signature(
    nf: NormalizedFailure,
    mode: MatchMode = MatchMode.FULL,
    scope: MatchScope = MatchScope.PER_TEST,
    known_tests: frozenset[TestId] | set[TestId] = frozenset(),
    strip_line_numbers: bool = False,
) -> FailureSignature:
    """Build the canonical signature of a normalized failure.

    Frame keys are the rendered kept frames, line numbers included (line
    numbers carry real signal; ``strip_line_numbers`` drops them for callers
    that want coarser keys). Under CROSS_TEST scope, frames whose class
    equals the failure's own test class, or whose class.method is prefixed by
    any known test's full name, are removed before keying. Under
    EXCEPTION_ONLY mode there are no frame keys.
    """
    if mode is MatchMode.EXCEPTION_ONLY:
        keys: tuple[str, ...] = ()
    else:
        frames = nf.kept_frames
        if scope is MatchScope.CROSS_TEST:
            own_class = nf.base.test.class_fqn
            test_names = sorted(t.full_name() for t in known_tests)
            frames = tuple(
                f
                for f in frames
                if f.class_fqn != own_class
                and not any(
                    f"{f.class_fqn}.{f.method}".startswith(name)
                    for name in test_names
                )
            )
        keys = tuple(_frame_key(f, strip_line_numbers) for f in frames)
    return FailureSignature(nf.base.exception_type, keys, mode, scope)


def matches(a: FailureSignature, b: FailureSignature) -> bool:
    """True iff the exception types and frame keys are equal elementwise."""
    if a.mode is not b.mode or a.scope is not b.scope:
        raise ModeMismatch(
            f"cannot compare signatures built under {a.mode}/{a.scope} "
            f"and {b.mode}/{b.scope}"
        )
    return a.exception_type == b.exception_type and a.frame_keys == b.frame_keys


def triage(
    nf: NormalizedFailure,
    history: Corpus,
    mode: MatchMode = MatchMode.FULL,
    scope: MatchScope = MatchScope.PER_TEST,
) -> TriageVerdict:
    """Compare a new failure against a labeled history and predict its label.

    PER_TEST scope compares only against history records of the same test;
    CROSS_TEST compares against all records of the same project. An empty
    relevant history yields MATCHED_NONE (predicted true), not an error.
    """
    test = nf.base.test
    project = test.project
    known = frozenset(history.tests(project)) | {test}
    target = signature(nf, mode, scope, known)

    flaky_hits: list[str] = []
    true_hits: list[str] = []
    for record_id, record in history.identified_records(project):
        if scope is MatchScope.PER_TEST and record.test != test:
            continue
        candidate = signature(normalize(record), mode, scope, known)
        if matches(target, candidate):
            if record.label is Label.FLAKY:
                flaky_hits.append(record_id)
            else:
                true_hits.append(record_id)

    if flaky_hits and true_hits:
        basis = TriageBasis.MATCHED_BOTH
    elif flaky_hits:
        basis = TriageBasis.MATCHED_FLAKY_ONLY
    elif true_hits:
        basis = TriageBasis.MATCHED_TRUE
    else:
        basis = TriageBasis.MATCHED_NONE
    predicted = (
        Label.FLAKY if basis is TriageBasis.MATCHED_FLAKY_ONLY else Label.TRUE
    )
    return TriageVerdict(predicted, basis, tuple(flaky_hits + true_hits))


@dataclass(frozen=True)
class ProjectRepetitiveness:
    """Occurrence statistics of one project's flaky failures.

    ``uniq``/``repet`` counts split the flaky occurrences into those whose
    signature appears exactly once and more than once; ``distinct`` counts
    distinct per-test full signatures. Per-test and cross-test columns each
    sum back to ``flaky``.
    """

    tests: int
    flaky: int
    distinct: int
    uniq_per_test: int
    repet_per_test: int
    uniq_cross: int
    repet_cross: int


@dataclass(frozen=True)
class RepetitivenessReport:
    per_project: dict[str, ProjectRepetitiveness]

    def total(self) -> ProjectRepetitiveness:
        rows = list(self.per_project.values())
        return ProjectRepetitiveness(
            tests=sum(r.tests for r in rows),
            flaky=sum(r.flaky for r in rows),
            distinct=sum(r.distinct for r in rows),
            uniq_per_test=sum(r.uniq_per_test for r in rows),
            repet_per_test=sum(r.repet_per_test for r in rows),
            uniq_cross=sum(r.uniq_cross for r in rows),
            repet_cross=sum(r.repet_cross for r in rows),
        )


def repetitiveness(corpus: Corpus) -> RepetitivenessReport:
    """How often each project's flaky failures recur, per test and across tests."""
    per_project: dict[str, ProjectRepetitiveness] = {}
    for project in corpus.project_names():
        tests = corpus.tests(project)
        known = frozenset(tests)
        per_test_groups: Counter[tuple[TestId, FailureSignature]] = Counter()
        cross_groups: Counter[FailureSignature] = Counter()
        record_keys: list[tuple[tuple[TestId, FailureSignature], FailureSignature]] = []
        tests_with_flaky = 0
        for test in tests:
            bucket = corpus.bucket(test, Label.FLAKY)
            if bucket:
                tests_with_flaky += 1
            for record in bucket:
                nf = normalize(record)
                per_test_key = (test, signature(nf, MatchMode.FULL, MatchScope.PER_TEST))
                cross_key = signature(nf, MatchMode.FULL, MatchScope.CROSS_TEST, known)
                per_test_groups[per_test_key] += 1
                cross_groups[cross_key] += 1
                record_keys.append((per_test_key, cross_key))
        flaky_total = len(record_keys)
        uniq_per_test = sum(
            1 for pt, _ in record_keys if per_test_groups[pt] == 1
        )
        uniq_cross = sum(1 for _, ck in record_keys if cross_groups[ck] == 1)
        if flaky_total:
            per_project[project] = ProjectRepetitiveness(
                tests=tests_with_flaky,
                flaky=flaky_total,
                distinct=len(per_test_groups),
                uniq_per_test=uniq_per_test,
                repet_per_test=flaky_total - uniq_per_test,
                uniq_cross=uniq_cross,
                repet_cross=flaky_total - uniq_cross,
            )
    return RepetitivenessReport(per_project)

"""Core domain types: stack frames, test identities, failure records, corpora.

Everything in this module is an immutable value object except Corpus, which
is the single mutable container. A Corpus expects one writer while it is
being built; once construction is done it can be read from any number of
threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from .errors import UnlabeledRecord


class Label(Enum):
    """Ground-truth kind of a failure: flaky, or a real ("true") failure."""

    FLAKY = "flaky"
    TRUE = "true"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, order=True)
class TestId:
    """Identity of one test method within a project."""

    project: str
    class_fqn: str
    method: str

    def __post_init__(self) -> None:
        if not self.project:
            raise ValueError("project must be non-empty")
        if not self.class_fqn or not self.method:
            raise ValueError("class_fqn and method must be non-empty")

    def full_name(self) -> str:
        return f"{self.class_fqn}.{self.method}"


def full_test_name(test: TestId) -> str:
    """Dot-joined class and method, e.g. ``tachyon.JournalTest.TableTest``."""
    return test.full_name()


@dataclass(frozen=True)
class StackFrame:
    """One stack-trace line: class, method, and source position.

    ``raw`` keeps the original text with any leading ``at `` and surrounding
    whitespace removed, so the frame can be re-rendered exactly. ``file`` and
    ``line`` are absent for ``(Native Method)`` / ``(Unknown Source)`` frames.
    """

    class_fqn: str
    method: str
    file: str | None
    line: int | None
    raw: str

    def __post_init__(self) -> None:
        if not self.class_fqn or any(ch.isspace() for ch in self.class_fqn):
            raise ValueError(f"bad class name in frame {self.raw!r}")
        if not self.method:
            raise ValueError(f"missing method name in frame {self.raw!r}")
        if self.line is not None and self.line < 0:
            raise ValueError(f"negative line number in frame {self.raw!r}")

    @classmethod
    def from_parts(
        cls,
        class_fqn: str,
        method: str,
        file: str | None = None,
        line: int | None = None,
    ) -> StackFrame:
        """Build a frame and its canonical raw text from components."""
        if file is not None and line is not None:
            raw = f"{class_fqn}.{method}({file}:{line})"
        else:
            raw = f"{class_fqn}.{method}(Native Method)"
        return cls(class_fqn, method, file, line, raw)

    def render(self) -> str:
        """Canonical text form; equals ``raw`` for well-formed frames."""
        if self.file is not None and self.line is not None:
            return f"{self.class_fqn}.{self.method}({self.file}:{self.line})"
        return self.raw


@dataclass(frozen=True)
class FailureRecord:
    """One observed failure of one test.

    ``exception_type`` is stored exactly as parsed and always compared
    verbatim; ``exception_fqn`` preserves the fully-qualified name when the
    source log carried a package prefix. ``frames`` keeps the original log
    order, topmost (most recent) call first. ``label`` is ``None`` for a
    failure that has not been triaged yet.
    """

    test: TestId
    exception_type: str
    message: str
    frames: tuple[StackFrame, ...]
    label: Label | None = None
    exception_fqn: str = ""

    def __post_init__(self) -> None:
        if not self.exception_type:
            raise ValueError("exception_type must be non-empty")
        if not isinstance(self.frames, tuple):
            object.__setattr__(self, "frames", tuple(self.frames))


class Corpus:
    """Labeled failure history grouped by project, test, and label bucket.

    Records are kept in insertion order and duplicates are kept as separate
    entries: downstream statistics are occurrence counts, not distinct-failure
    counts. Only labeled records may be stored, so every record's label always
    matches the bucket it sits in.
    """

    def __init__(self) -> None:
        self._projects: dict[str, dict[TestId, dict[Label, list[FailureRecord]]]] = {}

    def add(self, record: FailureRecord) -> None:
        if record.label is None:
            raise UnlabeledRecord(
                f"record for {record.test.full_name()} has no label"
            )
        tests = self._projects.setdefault(record.test.project, {})
        buckets = tests.setdefault(record.test, {Label.FLAKY: [], Label.TRUE: []})
        buckets[record.label].append(record)

    def add_all(self, records: Iterable[FailureRecord]) -> None:
        for record in records:
            self.add(record)

    def project_names(self) -> list[str]:
        return sorted(self._projects)

    def tests(self, project: str) -> list[TestId]:
        return sorted(self._projects.get(project, {}))

    def bucket(self, test: TestId, label: Label) -> tuple[FailureRecord, ...]:
        buckets = self._projects.get(test.project, {}).get(test)
        if buckets is None:
            return ()
        return tuple(buckets[label])

    def records(
        self, project: str | None = None, label: Label | None = None
    ) -> Iterator[FailureRecord]:
        projects = [project] if project is not None else self.project_names()
        labels = [label] if label is not None else [Label.FLAKY, Label.TRUE]
        for name in projects:
            for test in self.tests(name):
                for wanted in labels:
                    yield from self.bucket(test, wanted)

    def identified_records(
        self, project: str
    ) -> Iterator[tuple[str, FailureRecord]]:
        """Records of one project paired with stable identifier strings."""
        for test in self.tests(project):
            for label in (Label.FLAKY, Label.TRUE):
                for i, record in enumerate(self.bucket(test, label)):
                    yield f"{project}/{test.full_name()}/{label.value}[{i}]", record

    def count(self, project: str | None = None, label: Label | None = None) -> int:
        return sum(1 for _ in self.records(project, label))

    def subset(self, project: str) -> Corpus:
        sub = Corpus()
        sub.add_all(self.records(project))
        return sub

    def __len__(self) -> int:
        return self.count()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return self._projects == other._projects

    def __repr__(self) -> str:
        return (
            f"Corpus({len(self.project_names())} projects, "
            f"{self.count(label=Label.FLAKY)} flaky, "
            f"{self.count(label=Label.TRUE)} true)"
        )

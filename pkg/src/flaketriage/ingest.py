"""Failure-log parsing, frame filtering, and the XML corpus format."""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO

from .errors import (
    DuplicateProjectMismatch,
    MalformedFrame,
    MalformedLog,
    SchemaError,
)
from .model import Corpus, FailureRecord, Label, StackFrame, TestId

# One stack-trace line after the leading "at " is removed, e.g.
#   tachyon.LocalTachyonCluster.start(LocalTachyonCluster.java:104)
#   java.net.InetAddress$2.lookupAllHostAddr(InetAddress.java:929)
#   java.net.Inet6AddressImpl.lookupAllHostAddr(Native Method)
_FRAME_RE = re.compile(r"^(?P<loc>[^\s()]+)\((?P<where>[^()]*)\)$")
_SOURCE_RE = re.compile(r"^(?P<file>[^:]+):(?P<line>\d+)$")
_NO_SOURCE = ("Native Method", "Unknown Source")

# Non-deterministic reflection accessors synthesized by the JVM, e.g.
#   sun.reflect.GeneratedMethodAccessor42.invoke(...)
#   jdk.internal.reflect.GeneratedConstructorAccessor7.newInstance(...)
# The generalisation to constructor accessors is deliberate; pass a custom
# pattern to normalize() to tighten or widen the filter.
DEFAULT_NOISE_PATTERN = re.compile(
    r"(?:GeneratedMethodAccessor|GeneratedConstructorAccessor)\d+"
)


class TruncationBasis(Enum):
    """How the kept part of a trace was cut off at the test boundary."""

    TEST_METHOD_FRAME = "test_method_frame"
    TEST_CLASS_FRAME = "test_class_frame"
    NONE = "none"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class NormalizedFailure:
    """A failure record plus the frame subsequence that survives filtering.

    ``kept_frames`` is always a subsequence of ``base.frames``: reflection
    noise is dropped first, then the trace is truncated at the test boundary
    (inclusive). ``truncation_basis`` records which boundary rule applied.
    """

    base: FailureRecord
    kept_frames: tuple[StackFrame, ...]
    truncation_basis: TruncationBasis


def parse_frame(text: str) -> StackFrame:
    """Parse one frame line (without the leading ``at ``) into a StackFrame.

    Accepted shapes: ``CLASS.METHOD(FILE:LINE)``, ``CLASS.METHOD(Native
    Method)``, and ``CLASS.METHOD(Unknown Source)``. METHOD is the last
    dot-segment before the parenthesis.
    """
    stripped = text.strip()
    match = _FRAME_RE.match(stripped)
    if match is None:
        raise MalformedFrame(f"frame does not fit the frame grammar: {text!r}")
    loc = match.group("loc")
    if "." not in loc:
        raise MalformedFrame(f"frame has no class.method location: {text!r}")
    class_fqn, method = loc.rsplit(".", 1)
    if not class_fqn or not method:
        raise MalformedFrame(f"frame has an empty class or method: {text!r}")
    where = match.group("where")
    if where in _NO_SOURCE:
        return StackFrame(class_fqn, method, None, None, stripped)
    source = _SOURCE_RE.match(where)
    if source is None:
        raise MalformedFrame(f"unrecognised source position {where!r} in {text!r}")
    return StackFrame(
        class_fqn, method, source.group("file"), int(source.group("line")), stripped
    )


def parse_failure_text(
    raw: str, test: TestId, diagnostics: list[str] | None = None
) -> FailureRecord:
    """Parse one raw failure log into an (unlabeled) FailureRecord.

    The first non-blank line must be the exception header, optionally
    followed by ``: message``. Frame lines start with optional whitespace and
    ``at ``; anything else is ignored, and a ``Caused by:`` line ends the
    primary trace. Malformed frame lines are skipped, with a note appended to
    ``diagnostics`` when a list is supplied.
    """
    lines = raw.splitlines()
    header = None
    start = 0
    for i, line in enumerate(lines):
        if line.strip():
            header = line.strip()
            start = i + 1
            break
    if header is None:
        raise MalformedLog("no exception header: input is empty")
    if header.startswith("at "):
        raise MalformedLog("no exception header: log starts with a stack frame")

    head, sep, rest = header.partition(":")
    token = head.strip()
    if not token or any(ch.isspace() for ch in token):
        raise MalformedLog(f"cannot identify an exception header in {header!r}")
    message = ""
    if sep:
        message = rest[1:] if rest.startswith(" ") else rest
    exception_fqn = token if "." in token else ""
    exception_type = token.rsplit(".", 1)[-1]

    frames: list[StackFrame] = []
    for line in lines[start:]:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("Caused by:"):
            break  # only the primary trace is parsed
        if stripped.startswith("at "):
            try:
                frames.append(parse_frame(stripped[3:]))
            except MalformedFrame as exc:
                if diagnostics is not None:
                    diagnostics.append(str(exc))
        # anything else ("... 3 more", build-tool noise) is ignored

    return FailureRecord(
        test=test,
        exception_type=exception_type,
        message=message,
        frames=tuple(frames),
        exception_fqn=exception_fqn,
    )


def parse_failure_file(
    path: Path | str, test: TestId, diagnostics: list[str] | None = None
) -> FailureRecord:
    """Parse one plain-text failure log file."""
    return parse_failure_text(
        Path(path).read_text(encoding="utf-8"), test, diagnostics
    )


def parse_failure_tree(
    root: Path | str, test: TestId, diagnostics: list[str] | None = None
) -> list[FailureRecord]:
    """Parse every ``*.log`` / ``*.txt`` file under a directory tree.

    Each file holds one failure; files are visited in sorted path order.
    """
    records = []
    for path in sorted(Path(root).rglob("*")):
        if path.is_file() and path.suffix.lower() in (".log", ".txt"):
            records.append(parse_failure_file(path, test, diagnostics))
    return records


def normalize(
    record: FailureRecord, noise_pattern: re.Pattern[str] = DEFAULT_NOISE_PATTERN
) -> NormalizedFailure:
    """Drop JVM reflection noise, then truncate the trace at the test boundary.

    Truncation keeps frames from the top through the first frame whose
    ``class.method`` starts with the test's full name; if there is none,
    through the last frame whose class equals the test's class; otherwise all
    surviving frames are kept. The boundary frame itself is kept.
    """
    survivors = [
        f for f in record.frames if not noise_pattern.search(f.class_fqn)
    ]
    test = record.test
    full = test.full_name()
    kept = survivors
    basis = TruncationBasis.NONE
    for i, frame in enumerate(survivors):
        if f"{frame.class_fqn}.{frame.method}".startswith(full):
            kept = survivors[: i + 1]
            basis = TruncationBasis.TEST_METHOD_FRAME
            break
    else:
        for i in range(len(survivors) - 1, -1, -1):
            if survivors[i].class_fqn == test.class_fqn:
                kept = survivors[: i + 1]
                basis = TruncationBasis.TEST_CLASS_FRAME
                break
    return NormalizedFailure(record, tuple(kept), basis)


# --- corpus XML -----------------------------------------------------------
#
# <Corpus>
#   <Failure label="flaky|true">          label optional, absent means flaky
#     <T project="NAME">pkg.Class.method</T>
#     <E>ExceptionType</E>
#     <M>free text, significant verbatim</M>
#     <S><line>frame text without "at "</line>...</S>
#   </Failure>
# </Corpus>
#
# Failures may optionally be wrapped in <Project name="NAME"> groups; the
# group name must then agree with each inner T's project attribute.

_LABELS = {"flaky": Label.FLAKY, "true": Label.TRUE}


def read_corpus_xml(doc: bytes | str | IO[bytes]) -> Corpus:
    """Read a corpus XML document into a Corpus.

    Raises SchemaError naming the first offending element, and
    DuplicateProjectMismatch when a T project attribute conflicts with an
    enclosing Project group.
    """
    try:
        if isinstance(doc, (bytes, str)):
            root = ET.fromstring(doc)
        else:
            root = ET.parse(doc).getroot()
    except ET.ParseError as exc:
        raise SchemaError(f"not well-formed XML: {exc}") from exc

    if root.tag != "Corpus":
        raise SchemaError(f"root element must be <Corpus>, found <{root.tag}>")
    corpus = Corpus()
    for child in root:
        if child.tag == "Failure":
            corpus.add(_read_failure(child, None))
        elif child.tag == "Project":
            name = child.get("name")
            if not name:
                raise SchemaError("<Project> is missing its name attribute")
            for sub in child:
                if sub.tag != "Failure":
                    raise SchemaError(
                        f"unexpected element <{sub.tag}> under <Project>"
                    )
                corpus.add(_read_failure(sub, name))
        else:
            raise SchemaError(f"unexpected element <{child.tag}> under <Corpus>")
    return corpus


def _read_failure(elem: ET.Element, enclosing_project: str | None) -> FailureRecord:
    label_attr = elem.get("label", "flaky")
    if label_attr not in _LABELS:
        raise SchemaError(f"<Failure> has unknown label {label_attr!r}")

    t_elem = elem.find("T")
    if t_elem is None:
        raise SchemaError("<Failure> is missing its <T> child")
    project = t_elem.get("project")
    if not project:
        raise SchemaError("<T> is missing its project attribute")
    if enclosing_project is not None and project != enclosing_project:
        raise DuplicateProjectMismatch(
            f"<T> project {project!r} conflicts with enclosing "
            f"<Project name={enclosing_project!r}>"
        )
    full_name = (t_elem.text or "").strip()
    if "." not in full_name:
        raise SchemaError(f"<T> must contain a class.method name, found {full_name!r}")
    class_fqn, method = full_name.rsplit(".", 1)

    e_elem = elem.find("E")
    if e_elem is None:
        raise SchemaError("<Failure> is missing its <E> child")
    exception_type = (e_elem.text or "").strip()
    if not exception_type:
        raise SchemaError("<E> must contain an exception type")

    m_elem = elem.find("M")
    if m_elem is None:
        raise SchemaError("<Failure> is missing its <M> child")
    message = m_elem.text or ""

    s_elem = elem.find("S")
    if s_elem is None:
        raise SchemaError("<Failure> is missing its <S> child")
    frames = []
    for line_elem in s_elem:
        if line_elem.tag != "line":
            raise SchemaError(f"unexpected element <{line_elem.tag}> under <S>")
        try:
            frames.append(parse_frame((line_elem.text or "").strip()))
        except MalformedFrame as exc:
            raise SchemaError(f"bad <line> element: {exc}") from exc

    return FailureRecord(
        test=TestId(project, class_fqn, method),
        exception_type=exception_type,
        message=message,
        frames=tuple(frames),
        label=_LABELS[label_attr],
    )


def write_corpus_xml(corpus: Corpus) -> bytes:
    """Serialise a Corpus to UTF-8 XML; reading it back yields an equal Corpus.

    Failures are emitted grouped by project and test in sorted order, flaky
    bucket first, preserving insertion order inside each bucket. The label
    attribute is written only for true failures (absent means flaky).
    """
    root = ET.Element("Corpus")
    for project in corpus.project_names():
        for test in corpus.tests(project):
            for label in (Label.FLAKY, Label.TRUE):
                for record in corpus.bucket(test, label):
                    failure = ET.SubElement(root, "Failure")
                    if label is Label.TRUE:
                        failure.set("label", "true")
                    t_elem = ET.SubElement(failure, "T", project=project)
                    t_elem.text = test.full_name()
                    ET.SubElement(failure, "E").text = record.exception_type
                    ET.SubElement(failure, "M").text = record.message
                    s_elem = ET.SubElement(failure, "S")
                    for frame in record.frames:
                        ET.SubElement(s_elem, "line").text = frame.raw
    tree = ET.ElementTree(root)
    ET.indent(tree, space="  ")
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"

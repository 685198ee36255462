"""Shared fixtures: the alluxio reference failure pair and record builders."""
from __future__ import annotations

import random

import pytest
from hypothesis import settings

from flaketriage.model import Corpus, FailureRecord, Label, StackFrame, TestId

# Wall-clock deadlines make property tests timing-sensitive; shrinking and
# example counts stay as configured per test.
settings.register_profile("no_deadline", deadline=None)
settings.load_profile("no_deadline")

# Two equivalent flaky failures of the same alluxio test; they differ only in
# the host details inside the message, never in exception or trace.
ALLUXIO_TEST = TestId("alluxio", "tachyon.JournalTest", "TableTest")
ALLUXIO_FRAMES = (
    "java.net.Inet6AddressImpl.lookupAllHostAddr(Native Method)",
    "java.net.InetAddress$2.lookupAllHostAddr(InetAddress.java:929)",
    "java.net.InetAddress.getAddressesFromNameService(InetAddress.java:1324)",
    "java.net.InetAddress.getLocalHost(InetAddress.java:1501)",
    "tachyon.LocalTachyonCluster.start(LocalTachyonCluster.java:104)",
    "tachyon.JournalTest.before(JournalTest.java:33)",
)
ALLUXIO_MESSAGE_1 = "ip-172-31-48-81: ip-172-31-48-81: Temporary failure in name resolution"
ALLUXIO_MESSAGE_2 = "ip-172-31-58-81: ip-172-31-58-81: Temporary failure in name resolution"


def alluxio_raw_log(message: str) -> str:
    lines = [f"java.net.UnknownHostException: {message}"]
    lines.extend(f"\tat {frame}" for frame in ALLUXIO_FRAMES)
    return "\n".join(lines) + "\n"


def alluxio_corpus_xml() -> bytes:
    def failure(message: str) -> str:
        frame_lines = "".join(f"<line>{f}</line>" for f in ALLUXIO_FRAMES)
        return (
            "<Failure>"
            f'<T project="alluxio">tachyon.JournalTest.TableTest</T>'
            "<E>UnknownHostException</E>"
            f"<M>{message}</M>"
            f"<S>{frame_lines}</S>"
            "</Failure>"
        )

    doc = f"<Corpus>{failure(ALLUXIO_MESSAGE_1)}{failure(ALLUXIO_MESSAGE_2)}</Corpus>"
    return doc.encode("utf-8")


@pytest.fixture
def alluxio_test() -> TestId:
    return ALLUXIO_TEST


@pytest.fixture
def alluxio_logs() -> tuple[str, str]:
    return alluxio_raw_log(ALLUXIO_MESSAGE_1), alluxio_raw_log(ALLUXIO_MESSAGE_2)


@pytest.fixture
def alluxio_xml() -> bytes:
    return alluxio_corpus_xml()


def frame(class_fqn: str, method: str, file: str | None = None, line: int | None = None) -> StackFrame:
    return StackFrame.from_parts(class_fqn, method, file, line)


def record(
    test: TestId,
    exception: str = "AssertionError",
    message: str = "",
    frames: tuple[StackFrame, ...] = (),
    label: Label | None = None,
) -> FailureRecord:
    return FailureRecord(
        test=test,
        exception_type=exception,
        message=message,
        frames=tuple(frames),
        label=label,
    )


def random_corpus(seed: int, max_records: int = 250) -> Corpus:
    """Random labeled corpus with genuine signature collisions.

    Frames and exceptions are drawn from small pools so that signatures
    repeat within tests, across tests, and across labels; traces may embed
    frames of the project's own tests to exercise cross-test exclusion.
    """
    rng = random.Random(seed)
    corpus = Corpus()
    exceptions = ("AssertionError", "NullPointerException", "IOException")
    for p in range(rng.randint(1, 3)):
        project = f"p{p}"
        tests = [
            TestId(project, f"com.{project}.T{i}Test", f"m{i}")
            for i in range(rng.randint(1, 5))
        ]
        stack_pool = []
        for s in range(rng.randint(2, 6)):
            depth = rng.randint(0, 4)
            stack = [
                frame(
                    f"com.{project}.Lib{rng.randint(0, 2)}",
                    f"op{rng.randint(0, 2)}",
                    "Lib.java",
                    rng.randint(1, 12),
                )
                for _ in range(depth)
            ]
            stack_pool.append(tuple(stack))
        for test in tests:
            for _ in range(rng.randint(1, max(2, (2 * max_records) // (3 * len(tests))))):
                stack = list(stack_pool[rng.randrange(len(stack_pool))])
                if rng.random() < 0.5:
                    anchor = rng.choice(tests)
                    stack.append(
                        frame(
                            anchor.class_fqn,
                            anchor.method if rng.random() < 0.5 else "setUp",
                            anchor.class_fqn.rsplit(".", 1)[-1] + ".java",
                            rng.randint(1, 8),
                        )
                    )
                corpus.add(
                    record(
                        test,
                        exception=rng.choice(exceptions),
                        message=f"detail {rng.randint(0, 10_000)}",
                        frames=tuple(stack),
                        label=rng.choice((Label.FLAKY, Label.TRUE)),
                    )
                )
                if len(corpus) >= max_records:
                    return corpus
    return corpus

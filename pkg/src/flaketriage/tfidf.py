"""Failure tokenization, TF-IDF weighting, and nearest-neighbour triage."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import EmptyDocument, EmptyHistory, UnknownTerm
from .matching import TriageBasis, TriageVerdict
from .model import Corpus, FailureRecord, Label

# Symbols removed before dot-splitting; each becomes a token boundary.
_SYMBOL_TABLE = str.maketrans({c: " " for c in "():<>$,;"})

WeightedVector = dict[str, float]


@dataclass(frozen=True)
class TokenDocument:
    """One failure viewed as an ordered bag of tokens."""

    failure_id: str
    tokens: tuple[str, ...]


def tokenize_line(text: str) -> list[str]:
    """Split one stack line into tokens: strip symbols, then split on dots.

    ``tachyon.JournalTest.before(JournalTest.java:33)`` becomes
    ``[tachyon, JournalTest, before, JournalTest, java, 33]``.
    """
    tokens: list[str] = []
    for chunk in text.translate(_SYMBOL_TABLE).split():
        tokens.extend(part for part in chunk.split(".") if part)
    return tokens


def tokenize(record: FailureRecord, failure_id: str = "") -> TokenDocument:
    """Token document of a failure: exception tokens plus per-frame tokens.

    The message text contributes nothing; line numbers are kept as tokens.
    """
    tokens = tokenize_line(record.exception_type)
    for frame in record.frames:
        tokens.extend(tokenize_line(frame.raw))
    return TokenDocument(failure_id, tuple(tokens))


def tf(term: str, doc: TokenDocument) -> float:
    """Term frequency: occurrences of the term over the document length."""
    if not doc.tokens:
        raise EmptyDocument(f"document {doc.failure_id!r} has no tokens")
    return doc.tokens.count(term) / len(doc.tokens)


def _log(value: float, base: float | None) -> float:
    return math.log(value) if base is None else math.log(value, base)


def idf(
    term: str, corpus: list[TokenDocument], log_base: float | None = None
) -> float:
    """Inverse document frequency: log of corpus size over containing docs.

    Natural logarithm by default; the base only rescales every weight by the
    same positive factor, so cosine verdicts do not depend on it.
    """
    if not corpus:
        raise ValueError("idf needs a non-empty corpus")
    containing = sum(1 for doc in corpus if term in doc.tokens)
    if containing == 0:
        raise UnknownTerm(f"term {term!r} occurs in no document")
    return _log(len(corpus) / containing, log_base)


def _document_frequencies(corpus: list[TokenDocument]) -> Counter[str]:
    frequencies: Counter[str] = Counter()
    for doc in corpus:
        frequencies.update(set(doc.tokens))
    return frequencies


def _weights(
    doc: TokenDocument,
    frequencies: Counter[str],
    corpus_size: int,
    log_base: float | None,
) -> WeightedVector:
    if not doc.tokens:
        raise EmptyDocument(f"document {doc.failure_id!r} has no tokens")
    counts = Counter(doc.tokens)
    total = len(doc.tokens)
    vector: WeightedVector = {}
    for term, count in counts.items():
        containing = frequencies.get(term, 0)
        if containing == 0:
            vector[term] = 0.0  # query-only term: no corpus evidence
        else:
            vector[term] = (count / total) * _log(
                corpus_size / containing, log_base
            )
    return vector


def vectorize(
    doc: TokenDocument,
    corpus: list[TokenDocument],
    log_base: float | None = None,
) -> WeightedVector:
    """TF-IDF weights of every distinct term of the document."""
    if not corpus:
        raise ValueError("vectorize needs a non-empty corpus")
    return _weights(doc, _document_frequencies(corpus), len(corpus), log_base)


def cosine(u: WeightedVector, v: WeightedVector) -> float:
    """Cosine similarity; zero vectors have similarity 0 to everything."""
    norm_u = math.sqrt(sum(u[t] * u[t] for t in sorted(u)))
    norm_v = math.sqrt(sum(v[t] * v[t] for t in sorted(v)))
    if norm_u == 0.0 or norm_v == 0.0:
        return 0.0
    dot = sum(u[t] * v[t] for t in sorted(u.keys() & v.keys()))
    return dot / (norm_u * norm_v)


def classify_nn(
    query: FailureRecord, history: Corpus, log_base: float | None = None
) -> TriageVerdict:
    """Predict a failure's label from its most similar labeled history record.

    Vectors are built against the combined history-plus-query corpus of the
    query's project. The verdict takes the label of the highest-similarity
    record; any tie at the top, and a query with no usable terms, resolve to
    a true failure. Permuting the history cannot change the verdict.
    """
    project = query.test.project
    entries = list(history.identified_records(project))
    if not entries:
        raise EmptyHistory(f"no labeled failures for project {project!r}")

    docs = [tokenize(record, record_id) for record_id, record in entries]
    query_doc = tokenize(query, "query")
    corpus_docs = docs + [query_doc]
    frequencies = _document_frequencies(corpus_docs)
    size = len(corpus_docs)

    query_vector = _weights(query_doc, frequencies, size, log_base)
    if all(weight == 0.0 for weight in query_vector.values()):
        return TriageVerdict(Label.TRUE, TriageBasis.MATCHED_NONE)

    similarities: list[tuple[float, str, Label]] = []
    for (record_id, record), doc in zip(entries, docs):
        vector = _weights(doc, frequencies, size, log_base)
        similarities.append(
            (cosine(query_vector, vector), record_id, record.label)
        )
    best = max(score for score, _, _ in similarities)
    if best == 0.0:
        return TriageVerdict(Label.TRUE, TriageBasis.MATCHED_NONE)

    top_labels = {label for score, _, label in similarities if score == best}
    evidence = tuple(
        sorted(record_id for score, record_id, _ in similarities if score == best)
    )
    if top_labels == {Label.FLAKY}:
        return TriageVerdict(
            Label.FLAKY, TriageBasis.MATCHED_FLAKY_ONLY, evidence
        )
    basis = (
        TriageBasis.MATCHED_BOTH
        if len(top_labels) == 2
        else TriageBasis.MATCHED_TRUE
    )
    return TriageVerdict(Label.TRUE, basis, evidence)

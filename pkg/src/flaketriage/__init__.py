"""Failure-log triage: parse test failures into canonical records and decide,
against a labeled history of flaky and true failures, whether a new failure
is flaky — by exact signature matching, a six-feature classifier, or TF-IDF
nearest-neighbour matching — plus an evaluation harness and a deterministic
corpus generator.
"""
from .classifier import (
    FeatureVector,
    default_cut_prefixes,
    extract_features,
    load_model,
    oversample,
    predict,
    save_model,
    train_decision_tree,
    train_naive_bayes,
)
from .errors import (
    DuplicateProjectMismatch,
    EmptyDataset,
    EmptyDocument,
    EmptyHistory,
    FlakeTriageError,
    InsufficientFlaky,
    InsufficientTrue,
    InvalidConfig,
    MalformedFrame,
    MalformedLog,
    ModeMismatch,
    SchemaError,
    UnknownTerm,
    UnlabeledRecord,
)
from .evaluation import (
    ConfusionMatrix,
    CvResult,
    MetricSet,
    ScoreResult,
    cross_validate_project,
    exception_frequency,
    metrics,
    score_matching,
    stratified_cv,
)
from .ingest import (
    NormalizedFailure,
    TruncationBasis,
    normalize,
    parse_failure_file,
    parse_failure_text,
    parse_failure_tree,
    parse_frame,
    read_corpus_xml,
    write_corpus_xml,
)
from .matching import (
    FailureSignature,
    MatchMode,
    MatchScope,
    RepetitivenessReport,
    TriageBasis,
    TriageVerdict,
    matches,
    repetitiveness,
    signature,
    triage,
)
from .model import (
    Corpus,
    FailureRecord,
    Label,
    StackFrame,
    TestId,
    full_test_name,
)
from .synth import CountDistribution, ExceptionSpec, GeneratorConfig, generate
from .tfidf import TokenDocument, classify_nn, cosine, idf, tf, tokenize, vectorize

__version__ = "0.1.0"

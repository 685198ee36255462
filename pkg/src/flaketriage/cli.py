"""Command-line surface: parse, corpus-stats, classify, evaluate, generate.

Exit codes: 0 success (classify: verdict flaky), 1 usage error, 2 data or
schema error, 3 classify verdict "true failure" (distinct from tool errors so
CI can gate on it). All output is deterministic for fixed inputs and seeds.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import evaluation
from .errors import FlakeTriageError
from .ingest import (
    normalize,
    parse_failure_file,
    read_corpus_xml,
    write_corpus_xml,
)
from .matching import MatchMode, MatchScope, repetitiveness, signature, triage
from .model import Corpus, Label, TestId
from .synth import GeneratorConfig, generate
from .tfidf import classify_nn

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRUE_FAILURE = 3

_MODES = {"full": MatchMode.FULL, "exception-only": MatchMode.EXCEPTION_ONLY}
_SCOPES = {"per-test": MatchScope.PER_TEST, "cross-test": MatchScope.CROSS_TEST}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this tool reserves 2 for
    # data errors, so force usage problems onto exit code 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="flaketriage",
        description=(
            "Parse test-failure logs and decide, against a labeled history, "
            "whether a new failure is flaky."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="parse one raw failure log")
    p.add_argument("--in", dest="infile", required=True, metavar="FILE")
    p.add_argument("--test", required=True, help="full test name (class.method)")
    p.add_argument("--project", required=True)
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("corpus-stats", help="repetitiveness statistics of a corpus")
    p.add_argument("--corpus", required=True, metavar="FILE")
    p.set_defaults(func=_cmd_corpus_stats)

    p = sub.add_parser("classify", help="triage one failure against a corpus")
    p.add_argument("--corpus", required=True, metavar="FILE")
    p.add_argument("--failure", required=True, metavar="FILE")
    p.add_argument("--test", required=True, help="full test name (class.method)")
    p.add_argument(
        "--method", required=True, choices=("match", "tree", "bayes", "tfidf")
    )
    p.add_argument("--scope", choices=sorted(_SCOPES), default="per-test")
    p.add_argument("--mode", choices=sorted(_MODES), default="full")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("evaluate", help="evaluate a method over a labeled corpus")
    p.add_argument("--corpus", required=True, metavar="FILE")
    p.add_argument(
        "--method", required=True, choices=("match", "tree", "bayes", "tfidf")
    )
    p.add_argument("--k", type=int, default=evaluation.DEFAULT_FOLDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oversample", action="store_true")
    p.add_argument("--scope", choices=sorted(_SCOPES), default="per-test")
    p.add_argument("--mode", choices=sorted(_MODES), default="full")
    p.add_argument(
        "--report-dir", metavar="DIR", help="also write per-project report files"
    )
    p.add_argument(
        "--jobs", type=int, default=1, help="projects evaluated in parallel"
    )
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("generate", help="generate a synthetic labeled corpus")
    p.add_argument("--config", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE")
    p.set_defaults(func=_cmd_generate)

    return parser


def _split_test_name(name: str) -> tuple[str, str]:
    if "." not in name:
        raise FlakeTriageError(
            f"test name must be class.method, got {name!r}"
        )
    class_fqn, method = name.rsplit(".", 1)
    return class_fqn, method


def _load_corpus(path: str) -> Corpus:
    with open(path, "rb") as handle:
        return read_corpus_xml(handle)


def _cmd_parse(args) -> int:
    class_fqn, method = _split_test_name(args.test)
    test = TestId(args.project, class_fqn, method)
    diagnostics: list[str] = []
    record = parse_failure_file(args.infile, test, diagnostics)
    nf = normalize(record)
    sig = signature(nf)

    print(f"project: {test.project}")
    print(f"test: {test.full_name()}")
    print(f"exception: {record.exception_type}")
    if record.exception_fqn:
        print(f"exception_fqn: {record.exception_fqn}")
    print(f"message: {record.message}")
    print(f"frames ({len(record.frames)}):")
    for frame in record.frames:
        print(f"  {frame.raw}")
    print(
        f"kept after normalization ({len(nf.kept_frames)}, "
        f"basis={nf.truncation_basis}):"
    )
    for frame in nf.kept_frames:
        print(f"  {frame.raw}")
    print(f"signature ({sig.mode}, {sig.scope}):")
    print(f"  {sig.exception_type}")
    for key in sig.frame_keys:
        print(f"  {key}")
    for note in diagnostics:
        print(f"warning: {note}", file=sys.stderr)
    return EXIT_OK


def _cmd_corpus_stats(args) -> int:
    corpus = _load_corpus(args.corpus)
    report = repetitiveness(corpus)
    print(evaluation.render_repetitiveness_table(report))
    return EXIT_OK


def _infer_project(corpus: Corpus, test_name: str) -> str:
    projects = corpus.project_names()
    if len(projects) == 1:
        return projects[0]
    owners = [
        project
        for project in projects
        if any(t.full_name() == test_name for t in corpus.tests(project))
    ]
    if len(owners) == 1:
        return owners[0]
    raise FlakeTriageError(
        f"cannot infer the project for {test_name!r}: corpus has "
        f"{len(projects)} projects and {len(owners)} contain the test"
    )


def _cmd_classify(args) -> int:
    corpus = _load_corpus(args.corpus)
    class_fqn, method = _split_test_name(args.test)
    project = _infer_project(corpus, args.test)
    test = TestId(project, class_fqn, method)
    record = parse_failure_file(args.failure, test)

    evidence: tuple[str, ...] = ()
    if args.method == "match":
        verdict = triage(
            normalize(record), corpus, _MODES[args.mode], _SCOPES[args.scope]
        )
        predicted, detail, evidence = (
            verdict.predicted,
            verdict.basis.value,
            verdict.evidence,
        )
    elif args.method == "tfidf":
        verdict = classify_nn(record, corpus)
        predicted, detail, evidence = (
            verdict.predicted,
            verdict.basis.value,
            verdict.evidence,
        )
    else:
        trainer = (
            evaluation.tree_trainer()
            if args.method == "tree"
            else evaluation.bayes_trainer()
        )
        predictor = trainer(list(corpus.records(project)))
        predicted = predictor(record)
        detail = "decision_tree" if args.method == "tree" else "naive_bayes"

    print(f"{predicted} ({detail})")
    for record_id in evidence:
        print(f"evidence: {record_id}")
    return EXIT_OK if predicted is Label.FLAKY else EXIT_TRUE_FAILURE


def _project_counts(corpus: Corpus, project: str) -> tuple[int, int, int]:
    tests = len(corpus.tests(project))
    flaky = corpus.count(project, Label.FLAKY)
    true = corpus.count(project, Label.TRUE)
    return tests, flaky, true


def _evaluate_match_project(corpus, project, mode, scope):
    sub = corpus.subset(project)
    score = evaluation.score_matching(sub, mode, scope)
    tests, flaky, true = _project_counts(corpus, project)
    set_flaky, set_true = evaluation.distinct_signature_counts(corpus, project)
    return project, (score, tests, true, flaky, set_true, set_flaky)


def _cmd_evaluate(args) -> int:
    corpus = _load_corpus(args.corpus)
    mode = _MODES[args.mode]
    scope = _SCOPES[args.scope]
    projects = corpus.project_names()
    report_dir = Path(args.report_dir) if args.report_dir else None
    if report_dir is not None:
        report_dir.mkdir(parents=True, exist_ok=True)

    sections: list[str] = []
    if args.method == "match":
        def run(project):
            return _evaluate_match_project(corpus, project, mode, scope)

        results = dict(_map_projects(run, projects, args.jobs))
        sections.append(f"== text matching (mode={mode}, scope={scope}) ==")
        sections.append(evaluation.render_matching_table(results))
        if report_dir is not None:
            for project, (score, *_rest) in results.items():
                _write_report(
                    report_dir,
                    project,
                    evaluation.render_matching_table({project: results[project]}),
                    [evaluation.matching_record_json(project, score)],
                )
    else:
        trainer = _make_trainer(args)

        def run(project):
            flaky = list(corpus.records(project, Label.FLAKY))
            true = list(corpus.records(project, Label.TRUE))
            if len(flaky) < evaluation.MIN_FLAKY_FOR_CV:
                reason = (
                    f"fewer than {evaluation.MIN_FLAKY_FOR_CV} flaky failures "
                    f"({len(flaky)})"
                )
                return project, ("skipped", reason)
            result = evaluation.cross_validate_project(
                flaky, true, args.k, trainer, args.seed
            )
            return project, ("done", result)

        outcomes = dict(_map_projects(run, projects, args.jobs))
        per_project = {
            name: value
            for name, (status, value) in outcomes.items()
            if status == "done"
        }
        skipped = {
            name: value
            for name, (status, value) in outcomes.items()
            if status == "skipped"
        }
        result = evaluation.CorpusCvResult(per_project, skipped)
        balancing = "on" if args.oversample else "off"
        sections.append(
            f"== cross-validation (method={args.method}, k={args.k}, "
            f"seed={args.seed}, oversample={balancing}) =="
        )
        counts = {name: _project_counts(corpus, name) for name in per_project}
        sections.append(evaluation.render_cv_table(result, counts))
        for name in sorted(skipped):
            sections.append(f"skipped {name}: {skipped[name]}")
        if report_dir is not None:
            for name, cv in per_project.items():
                _write_report(
                    report_dir,
                    name,
                    evaluation.render_cv_table(
                        evaluation.CorpusCvResult({name: cv}, {}),
                        {name: counts[name]},
                    ),
                    evaluation.cv_record_json(name, cv),
                )

    for table_mode, title in (
        (MatchMode.FULL, "exceptions (full matching)"),
        (MatchMode.EXCEPTION_ONLY, "exceptions (exception-only matching)"),
    ):
        sections.append(f"== {title} ==")
        sections.append(
            evaluation.render_exceptions_table(
                evaluation.exception_frequency(corpus, table_mode)
            )
        )

    print("\n\n".join(sections))
    return EXIT_OK


def _make_trainer(args) -> evaluation.Trainer:
    threshold = evaluation.OVERSAMPLE_THRESHOLD if args.oversample else None
    if args.method == "tree":
        return evaluation.tree_trainer(
            oversample_threshold=threshold, seed=args.seed
        )
    if args.method == "bayes":
        return evaluation.bayes_trainer(
            oversample_threshold=threshold, seed=args.seed
        )
    return evaluation.tfidf_trainer()


def _map_projects(run, projects, jobs):
    """Evaluate projects, optionally in parallel; order of results is fixed.

    Results are buffered and returned in project order regardless of worker
    scheduling, so parallel runs print byte-identical reports.
    """
    if jobs <= 1 or len(projects) <= 1:
        return [run(project) for project in projects]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, projects))


def _safe_filename(project: str) -> str:
    return "".join(c if c.isalnum() or c in "-._" else "_" for c in project)


def _write_report(
    report_dir: Path, project: str, table: str, json_lines: list[str]
) -> None:
    stem = _safe_filename(project)
    (report_dir / f"{stem}.txt").write_text(table + "\n", encoding="utf-8")
    (report_dir / f"{stem}.jsonl").write_text(
        "\n".join(json_lines) + "\n", encoding="utf-8"
    )


def _cmd_generate(args) -> int:
    config = GeneratorConfig.from_json_file(args.config)
    corpus = generate(config)
    Path(args.out).write_bytes(write_corpus_xml(corpus))
    tests = sum(len(corpus.tests(p)) for p in corpus.project_names())
    print(
        f"wrote {args.out}: {len(corpus.project_names())} projects, "
        f"{tests} tests, {corpus.count(label=Label.FLAKY)} flaky + "
        f"{corpus.count(label=Label.TRUE)} true failures"
    )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FlakeTriageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

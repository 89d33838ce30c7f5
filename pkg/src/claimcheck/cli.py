"""Command-line interface.

Four subcommands cover the workflow: ``ingest`` validates a corpus,
``build-index`` embeds and persists one vector index per configured
embedder, ``check`` fact-checks an article, and ``evaluate`` scores
report files against ground truth (or compares precomputed scores).

Exit codes: 0 on success, 1 for operational failures (transport,
backends, corrupt indexes), 2 for configuration and validation errors,
including strict-mode rejections.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import re
import sys
import time
from pathlib import Path

from . import corpus, evaluation
from .agents import FactCheckAgents, build_backend
from .config import RunConfig, load_config
from .embedding import build_embedder
from .errors import ClaimcheckError, ConfigError, ValidationError
from .lotr import MergingRetriever, RetrieverLeg
from .pipeline import FactCheckPipeline, render_report
from .vecindex import VectorIndex

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_OPERATIONAL = 1
EXIT_INVALID = 2


def _index_path(index_dir: str | Path, model_id: str) -> Path:
    slug = re.sub(r"[^A-Za-z0-9._-]+", "_", model_id)
    return Path(index_dir) / f"{slug}.idx"


def _print_rejections(rejected, stream=sys.stderr) -> None:
    for row in rejected:
        print(f"  - {row.location}: {row.reason}", file=stream)


# -- subcommands --------------------------------------------------------------


def _cmd_ingest(args, config: RunConfig) -> int:
    records, rejected = corpus.ingest_corpus(config.corpus_path)
    print(f"accepted: {len(records)}")
    print(f"rejected: {len(rejected)}")
    _print_rejections(rejected, stream=sys.stdout)
    if args.strict and rejected:
        print("strict mode: rejected rows are fatal", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _cmd_build_index(args, config: RunConfig) -> int:
    records, rejected = corpus.ingest_corpus(config.corpus_path)
    if rejected:
        print(f"rejected {len(rejected)} corpus rows:", file=sys.stderr)
        _print_rejections(rejected)
        if args.strict:
            return EXIT_INVALID
    if not records:
        raise ValidationError(f"corpus {config.corpus_path} yielded no usable records")
    chunks = corpus.chunk_corpus(
        records, chunk_size=config.chunking.kb_chunk_size, overlap=config.chunking.kb_overlap
    )
    texts = [c.text for c in chunks]
    index_dir = Path(config.index_dir)
    index_dir.mkdir(parents=True, exist_ok=True)
    for spec in config.embedders:
        embedder = build_embedder(spec)
        vectors = embedder.embed(texts)
        index = VectorIndex(model_id=spec.model_id, dimension=spec.dimension)
        index.upsert(
            # evidence text rides along in the metadata: retrieval feeds it
            # to grading and generation without a second corpus lookup
            (chunk.key, vec.values, {**chunk.metadata, "text": chunk.text})
            for chunk, vec in zip(chunks, vectors)
        )
        path = _index_path(index_dir, spec.model_id)
        index.persist(path)
        print(f"{spec.model_id}: {len(index)} vectors (dim {spec.dimension}) -> {path}")
    print(f"indexed {len(chunks)} chunks from {len(records)} records")
    return EXIT_OK


def _build_retriever(config: RunConfig) -> MergingRetriever:
    legs = []
    for spec in config.embedders:
        path = _index_path(config.index_dir, spec.model_id)
        if not path.exists():
            raise ConfigError(f"index for {spec.model_id!r} not found at {path}; run build-index")
        index = VectorIndex.load(path)
        if index.dimension != spec.dimension:
            raise ConfigError(
                f"index {path} has dimension {index.dimension}, config says {spec.dimension}"
            )
        legs.append(
            RetrieverLeg(retriever_id=spec.model_id, embedder=build_embedder(spec), index=index)
        )
    r = config.retrieval
    return MergingRetriever(
        legs,
        k=r.k,
        lambda_=r.lambda_,
        min_similarity=r.min_similarity,
        pool_size=r.pool_size,
        reorder=r.reorder,
    )


def _build_agents(config: RunConfig) -> FactCheckAgents:
    return FactCheckAgents(
        generator=build_backend(config.generator, mock_fixtures=config.mock_fixtures),
        grader=build_backend(config.grader, mock_fixtures=config.mock_fixtures),
        rewriter=build_backend(config.rewriter, mock_fixtures=config.mock_fixtures),
        embedder=build_embedder(config.embedders[0]),
    )


def _cmd_check(args, config: RunConfig) -> int:
    mode = args.mode.replace("-", "_")
    article = corpus.load_article(args.article)
    retriever = _build_retriever(config) if mode != "baseline" else None
    pipeline = FactCheckPipeline(config, _build_agents(config), retriever)
    report = pipeline.check_article(article, mode)
    rendered = render_report(report, fmt=args.format)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(rendered, encoding="utf-8")
        # wall time and timestamp live beside the report, not in it, so
        # repeated runs produce byte-identical reports
        meta = {
            "article_id": report.article_id,
            "mode": report.mode,
            "elapsed_seconds": round(report.timing_seconds or 0.0, 3),
            "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        Path(str(out) + ".meta.json").write_text(
            json.dumps(meta, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        print(f"report written to {out}")
    else:
        sys.stdout.write(rendered)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK


def _load_report_dicts(patterns: list[str]) -> list[dict]:
    paths: list[Path] = []
    for pattern in patterns:
        p = Path(pattern)
        if p.exists():
            paths.append(p)
            continue
        matches = sorted(p.parent.glob(p.name)) if p.parent != Path("") else sorted(Path(".").glob(pattern))
        # globs like report_*.json would otherwise pick up our own sidecars
        matches = [m for m in matches if not m.name.endswith(".meta.json")]
        if not matches:
            raise ValidationError(f"no report files match {pattern!r}")
        paths.extend(matches)
    reports = []
    for path in paths:
        try:
            reports.append(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read report {path}: {exc}") from exc
    return reports


def _evaluate_from_scores(args) -> int:
    try:
        payload = json.loads(Path(args.scores).read_text(encoding="utf-8"))
        systems = payload["systems"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ValidationError(f"cannot read scores file {args.scores}: {exc}") from exc
    per_article = {
        str(mode): {str(metric): [float(x) for x in vec] for metric, vec in scores.items()}
        for mode, scores in systems.items()
    }
    rows = evaluation.compare_systems(per_article)
    return _emit(evaluation.render_comparison(rows, fmt=args.format), args.out)


def _cmd_evaluate(args, config: RunConfig) -> int:
    if args.scores:
        return _evaluate_from_scores(args)
    if not args.reports or not args.ground_truth:
        raise ConfigError("evaluate needs --reports and --ground-truth (or --scores)")
    reports = _load_report_dicts(args.reports)
    ground_truth = evaluation.load_ground_truth(args.ground_truth)
    embedder = build_embedder(config.embedders[0])
    eval_cfg = config.evaluation

    if eval_cfg.statement_source == "sentences":
        statements_fn = evaluation.split_sentences
    else:
        backend = build_backend(config.grader, mock_fixtures=config.mock_fixtures)
        statements_fn = lambda text: evaluation.extract_statements(text, backend)  # noqa: E731
    if eval_cfg.judge == "lexical":
        judge_fn = evaluation.lexical_judge
    else:
        judge_backend = build_backend(config.grader, mock_fixtures=config.mock_fixtures)
        judge_fn = lambda p, h: evaluation.nli_judge(p, h, judge_backend)  # noqa: E731

    result = evaluation.evaluate_run(
        reports,
        ground_truth,
        embed=embedder.embed,
        statements_fn=statements_fn,
        judge_fn=judge_fn,
        match_threshold=eval_cfg.match_threshold,
    )
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return _emit(evaluation.render_comparison(result.comparisons, fmt=args.format), args.out)


def _emit(text: str, out: str | None) -> int:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        print(f"written to {path}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser / entry point ------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimcheck",
        description="Retrieval-augmented fact checking for long-form articles.",
    )
    parser.add_argument("--config", required=True, help="path to the YAML run config")
    parser.add_argument("--verbose", action="store_true", help="debug logging and tracebacks")
    parser.add_argument(
        "--strict", action="store_true", help="treat rejected corpus rows as fatal"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="validate the corpus and report rejected rows")
    sub.add_parser("build-index", help="embed the corpus and persist vector indexes")

    check = sub.add_parser("check", help="fact-check one article")
    check.add_argument("--article", required=True, help="path to the article text")
    check.add_argument(
        "--mode",
        choices=("baseline", "lotr", "lotr-srag"),
        default="lotr-srag",
        help="verification flow (default: lotr-srag)",
    )
    check.add_argument("--out", help="write the report here instead of stdout")
    check.add_argument("--format", choices=("json", "markdown"), default="json")

    ev = sub.add_parser("evaluate", help="score reports against ground truth")
    ev.add_argument("--reports", nargs="+", help="report JSON files (globs allowed)")
    ev.add_argument("--ground-truth", help="ground truth JSONL file")
    ev.add_argument("--scores", help="precomputed per-article scores JSON; skips judging")
    ev.add_argument("--out", help="write the comparison here instead of stdout")
    ev.add_argument("--format", choices=("markdown", "json"), default="markdown")

    return parser


_COMMANDS = {
    "ingest": _cmd_ingest,
    "build-index": _cmd_build_index,
    "check": _cmd_check,
    "evaluate": _cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    start = time.perf_counter()
    try:
        config = load_config(args.config)
        code = _COMMANDS[args.command](args, config)
    except (ConfigError, ValidationError) as exc:
        _report_failure(exc, args.verbose)
        return EXIT_INVALID
    except ClaimcheckError as exc:
        _report_failure(exc, args.verbose)
        return EXIT_OPERATIONAL
    logger.debug("%s finished in %.3fs", args.command, time.perf_counter() - start)
    return code


def _report_failure(exc: Exception, verbose: bool) -> None:
    if verbose:
        logger.exception("command failed")
    print(f"error: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())

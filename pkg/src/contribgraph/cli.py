"""Command-line interface.

Workflow: ingest -> extract -> frontier -> embed -> taskgen -> rank ->
eval -> export, plus validate. Exit status is 0 on success, 1 on
operational failure, 2 on usage errors. Configuration precedence is
flags > environment > config file; write subcommands hold an exclusive
store lock.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, backends, evaluation, frontier, taskgen
from .embedding import (
    EMBED_ENDPOINT_VAR,
    EmbeddingIndex,
    HttpEmbeddingProvider,
    MockEmbeddingProvider,
    build_index,
)
from .errors import ContribGraphError
from .graph import RECORDS_FILE, ContributionGraph
from .jsonl import read_jsonl
from .model import PaperMeta, PartialDate
from .pipeline import PaperInput, Pipeline, PipelineConfig
from .roadmap import export_dot, export_json, impact_tree, precursor_tree

logger = logging.getLogger(__name__)

LOCK_FILE = "store.lock"


class CliError(ContribGraphError):
    """Operational failure surfaced to the user with exit status 1."""


def load_config_file(path: Optional[str]) -> dict[str, str]:
    """Simple KEY=VALUE config file; blank lines and # comments ignored."""
    if not path:
        return {}
    config: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"bad config line (want KEY=VALUE): {line!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = value.strip()
    return config


def setting(
    flag_value: Optional[str],
    env_var: str,
    config: dict[str, str],
    config_key: str,
    default: Optional[str] = None,
) -> Optional[str]:
    if flag_value is not None:
        return flag_value
    if env_var in os.environ:
        return os.environ[env_var]
    return config.get(config_key, default)


@contextlib.contextmanager
def store_lock(store_dir: Path):
    """Exclusive lock for write subcommands."""
    store_dir.mkdir(parents=True, exist_ok=True)
    lock_path = store_dir / LOCK_FILE
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(
            f"store is locked by another process ({lock_path}); remove the lock if stale"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            lock_path.unlink()


def load_store(store_dir: Path) -> ContributionGraph:
    return ContributionGraph.load(store_dir)


def refuse_clobber(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise CliError(f"{path} exists; pass --force to overwrite")


def make_generation_backend(args, config: dict[str, str]) -> backends.GenerationBackend:
    if getattr(args, "backend", None) == "mock" and not getattr(args, "mock", None):
        raise CliError("--backend mock requires --mock DIR")
    if getattr(args, "mock", None):
        return backends.MockBackend(args.mock)
    endpoint = setting(
        getattr(args, "endpoint", None), backends.GEN_ENDPOINT_VAR, config, "GEN_ENDPOINT"
    )
    api_key = setting(None, backends.GEN_API_KEY_VAR, config, "GEN_API_KEY")
    model = setting(
        getattr(args, "model", None), backends.GEN_MODEL_VAR, config, "GEN_MODEL", ""
    )
    price_in = float(config.get("PRICE_IN_PER_1K", "0"))
    price_out = float(config.get("PRICE_OUT_PER_1K", "0"))
    return backends.HttpBackend(
        endpoint=endpoint,
        api_key=api_key,
        model=model,
        price_in_per_1k=price_in,
        price_out_per_1k=price_out,
    )


def parse_years(spec: str) -> list[int]:
    """"2021-2025" or "2021,2023"."""
    if "-" in spec:
        start, end = spec.split("-", 1)
        return list(range(int(start), int(end) + 1))
    return [int(y) for y in spec.split(",") if y]


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_ingest(args, config) -> int:
    store_dir = Path(args.store)
    with store_lock(store_dir):
        graph = load_store(store_dir)
        if args.catalog:
            catalog = frontier.Catalog.load(args.catalog)
            for entry in catalog.by_id.values():
                graph.register_paper(
                    PaperMeta(
                        corpus_id=entry.corpus_id,
                        title=entry.title,
                        year=entry.year,
                        date=PartialDate.parse(entry.date) if entry.date else None,
                        venue=entry.venue,
                    )
                )
            print(f"catalog: {len(catalog.by_id)} papers registered")
        ingested = skipped = 0
        for records_file in args.records or []:
            for raw in read_jsonl(records_file):
                corpus_id = str(raw.get("corpus_id", ""))
                meta = graph.papers.get(corpus_id)
                if meta is not None and meta.status == "extracted":
                    skipped += 1
                    continue
                delta = graph.add_paper_record(raw)
                ingested += 1
                print(
                    f"{corpus_id}: +{delta.nodes_added} nodes, +{delta.edges_added} edges,"
                    f" +{delta.unresolved_added} unresolved"
                )
        if args.records:
            print(f"records: {ingested} ingested, {skipped} already extracted")
        graph.save(store_dir)
    return 0


def cmd_extract(args, config) -> int:
    store_dir = Path(args.store)
    catalog = frontier.Catalog.load(args.catalog)
    with store_lock(store_dir):
        graph = load_store(store_dir)
        ids = list(args.ids)
        if not ids:
            histogram = frontier.build_histogram(graph, catalog)
            ids = frontier.select_batch(
                histogram, frontier.catalog_availability(catalog), args.k
            )
            if not ids:
                print("frontier is empty; nothing to extract")
                return 0
        papers = []
        for corpus_id in ids:
            entry = catalog.by_id.get(corpus_id)
            if entry is None:
                raise CliError(f"corpus {corpus_id} not in catalog")
            text_path = Path(entry.text_path)
            if not text_path.exists():
                raise CliError(f"corpus {corpus_id}: text file {text_path} missing")
            graph.register_paper(
                PaperMeta(
                    corpus_id=entry.corpus_id,
                    title=entry.title,
                    year=entry.year,
                    date=PartialDate.parse(entry.date) if entry.date else None,
                    venue=entry.venue,
                )
            )
            papers.append(
                PaperInput(
                    corpus_id=entry.corpus_id,
                    title=entry.title,
                    year=entry.year,
                    full_text=text_path.read_text(encoding="utf-8"),
                )
            )
        backend = make_generation_backend(args, config)
        pipeline = Pipeline(
            backend,
            graph,
            PipelineConfig(retries=args.retries, temperature=args.temperature),
            records_path=store_dir / RECORDS_FILE,
        )
        results = pipeline.run_batch(papers, parallel=args.parallel)
        failures = 0
        for paper, delta, error in results:
            if error is not None:
                failures += 1
                print(f"{paper.corpus_id}: FAILED ({error})")
            else:
                print(
                    f"{paper.corpus_id}: +{delta.nodes_added} nodes,"
                    f" +{delta.edges_added} edges, +{delta.unresolved_added} unresolved"
                )
        graph.save(store_dir, write_records=False)
        usage = backend.usage
        print(
            f"backend calls: {usage.calls}, tokens in/out: {usage.tokens_in}/{usage.tokens_out},"
            f" cost: ${usage.cost:.4f}"
        )
        return 1 if failures else 0


def cmd_frontier(args, config) -> int:
    graph = load_store(Path(args.store))
    catalog = frontier.Catalog.load(args.catalog) if args.catalog else None
    histogram = frontier.build_histogram(graph, catalog)
    if catalog is not None:
        availability = frontier.catalog_availability(catalog)
    else:
        availability = lambda key: True  # noqa: E731
    batch = frontier.select_batch(histogram, availability, args.k)
    for key in batch:
        print(f"{key}\t{histogram[key]}")
    if not batch:
        print("(frontier empty)")
    return 0


def cmd_embed(args, config) -> int:
    store_dir = Path(args.store)
    out_path = Path(args.out) if args.out else store_dir / "embeddings.bin"
    refuse_clobber(out_path, args.force)
    graph = load_store(store_dir)
    endpoint = setting(None, EMBED_ENDPOINT_VAR, config, "EMBED_ENDPOINT")
    if args.provider == "http" or (args.provider == "auto" and endpoint):
        provider = HttpEmbeddingProvider(endpoint=endpoint)
    else:
        provider = MockEmbeddingProvider(dim=args.dim)
    index = build_index(graph, provider)
    index.save(out_path)
    print(f"embedded {len(index)} contributions (dim {index.dim}) -> {out_path}")
    return 0


def cmd_taskgen(args, config) -> int:
    store_dir = Path(args.store)
    out_path = Path(args.out) if args.out else store_dir / "problems.jsonl"
    refuse_clobber(out_path, args.force)
    graph = load_store(store_dir)
    index_path = Path(args.index) if args.index else store_dir / "embeddings.bin"
    if not index_path.exists():
        raise CliError(f"embedding index {index_path} missing; run `embed` first")
    index = EmbeddingIndex.load(index_path)
    years = parse_years(args.years)
    result = taskgen.generate_problems(
        graph,
        index,
        years=years,
        n_per_year=args.per_year,
        rng_seed=args.seed,
        strong_only=args.strong_only,
        k=args.k,
    )
    taskgen.write_problems(out_path, result.problems)
    manifest_path = out_path.with_name(out_path.stem + "_manifest.json")
    taskgen.write_manifest(
        manifest_path, graph, years, args.per_year, args.seed, args.strong_only, result
    )
    print(f"{len(result.problems)} problems, {len(result.skips)} skipped -> {out_path}")
    for skip in result.skips:
        print(f"  skipped {skip.target_id}: {skip.reason}")
    return 0


def cmd_rank(args, config) -> int:
    problems = taskgen.read_problems(args.problems)
    out_path = Path(args.out) if args.out else Path(args.problems).with_name("submissions.jsonl")
    refuse_clobber(out_path, args.force)
    backend = make_generation_backend(args, config)
    submissions = evaluation.run_ranking(
        problems, backend, parallel=args.parallel, retries=args.retries
    )
    evaluation.write_submissions(out_path, submissions)
    flagged = sum(1 for s in submissions if s.flagged)
    print(f"{len(submissions)} submissions ({flagged} flagged) -> {out_path}")
    return 0


def cmd_eval(args, config) -> int:
    problems = taskgen.read_problems(args.problems)
    submissions = evaluation.read_submissions(args.submissions)
    cutoffs = evaluation.load_cutoffs(args.cutoffs)
    tag = args.backend_tag or (submissions[0].backend if submissions else "")
    if tag not in cutoffs:
        raise CliError(f"no knowledge cutoff for backend tag {tag!r} in {args.cutoffs}")
    report = evaluation.score_run(problems, submissions, cutoffs[tag])
    out_path = Path(args.out) if args.out else Path(args.problems).with_name("report.json")
    refuse_clobber(out_path, args.force)
    evaluation.write_report(out_path, report)
    if args.csv:
        evaluation.append_results_csv(args.csv, report)
    print(json.dumps(report.to_json(), indent=2))
    return 0


def cmd_export(args, config) -> int:
    graph = load_store(Path(args.store))
    if args.direction == "pre":
        tree = precursor_tree(graph, args.root, args.depth)
    else:
        tree = impact_tree(graph, args.root, args.depth, args.top_k)
    if args.format == "dot":
        text = export_dot(tree)
    else:
        text = json.dumps(export_json(tree), indent=2, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args, config) -> int:
    graph = load_store(Path(args.store))
    violations = graph.validate(include_warnings=args.warnings)
    for violation in violations:
        print(violation)
    errors = [v for v in violations if v.severity == "error"]
    print(f"{len(errors)} violations")
    return 1 if errors else 0


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contribgraph",
        description="Contribution-graph construction, ranking-task generation, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="KEY=VALUE config file", default=None)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="register catalog papers and ingest record files")
    p.add_argument("--store", required=True)
    p.add_argument("--catalog")
    p.add_argument("--records", nargs="*", default=[])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="run the extraction pipeline over a batch")
    p.add_argument("ids", nargs="*", help="corpus ids; defaults to the next frontier batch")
    p.add_argument("--store", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--k", type=int, default=10, help="frontier batch size when no ids given")
    p.add_argument("--mock", help="replay-mock directory of canned responses")
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--endpoint", help="generation endpoint (overrides env/config)")
    p.add_argument("--model", help="generation model tag")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("frontier", help="print the next extraction batch")
    p.add_argument("--store", required=True)
    p.add_argument("--catalog")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("embed", help="build the embedding index")
    p.add_argument("--store", required=True)
    p.add_argument("--out")
    p.add_argument("--dim", type=int, default=64, help="mock provider dimensionality")
    p.add_argument("--provider", choices=["auto", "mock", "http"], default="auto")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("taskgen", help="generate prerequisite-prediction problems")
    p.add_argument("--store", required=True)
    p.add_argument("--index")
    p.add_argument("--years", required=True, help="e.g. 2021-2025 or 2021,2023")
    p.add_argument("--per-year", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strong-only", action="store_true")
    p.add_argument("--k", type=int, default=taskgen.CANDIDATES_PER_PROBLEM)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_taskgen)

    p = sub.add_parser("rank", help="rank problems with a model backend")
    p.add_argument("--problems", required=True)
    p.add_argument("--backend", choices=["http", "mock"], default="http")
    p.add_argument("--mock", help="replay-mock directory (with --backend mock)")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", help="score submissions with backtesting splits")
    p.add_argument("--problems", required=True)
    p.add_argument("--submissions", required=True)
    p.add_argument("--cutoffs", required=True, help="JSON mapping backend tag -> cutoff")
    p.add_argument("--backend-tag")
    p.add_argument("--out")
    p.add_argument("--csv", help="append (cost, MAP) row to this CSV")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="export a precursor or impact tree")
    p.add_argument("--store", required=True)
    p.add_argument("--root", required=True)
    p.add_argument("--direction", choices=["pre", "post"], required=True)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--format", choices=["dot", "json"], default="dot")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("validate", help="check store invariants")
    p.add_argument("--store", required=True)
    p.add_argument("--warnings", action="store_true", help="include warnings")
    p.set_defaults(func=cmd_validate)

    return parser


def dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config_file(args.config)
        return args.func(args, config)
    except ContribGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    return dispatch(list(argv) if argv is not None else sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())

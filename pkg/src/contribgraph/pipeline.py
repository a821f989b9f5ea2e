"""Generation-backed extraction pipeline.

Three staged operations per paper: contribution extraction, per-
contribution prerequisite extraction (which may split a contribution
into finer-grained ones), and prerequisite-to-contribution alignment
against cited papers already in the graph. Stage outputs are strict
fenced JSON; a schema violation re-prompts with the validator's errors
appended, up to a configurable retry budget.

Stages 2 and 3 depend only on the paper text, so papers can be staged
concurrently; alignment, ingestion, and the append-only record log are
finalized serially in input order, which makes batch output
byte-reproducible for any parallelism setting.
"""
from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import jsonl
from .backends import GenerationBackend
from .errors import BackendError, DuplicatePaperError, ParseFailure, StageFailure
from .graph import ContributionGraph, GraphDelta
from .model import (
    CORE_OR_PERIPHERAL,
    MATCH_TYPES,
    ArtifactRef,
    Contribution,
    ContributionType,
    Edge,
    ExtractionRecord,
    InternalRef,
    Match,
    PaperRef,
    Prerequisite,
    make_contribution_id,
)
from .prompts import (
    ALIGNMENT_TEMPLATE,
    CONTRIBUTION_TEMPLATE,
    PREREQUISITE_TEMPLATE,
    load_template,
    render,
)
from .records import normalize_contribution

logger = logging.getLogger(__name__)

_SPLIT_KEY_RE = re.compile(r"-\d+$")
_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\r?\n?(.*?)```", re.DOTALL)


def parse_fenced_json(response: str) -> Any:
    """Parse the last well-formed triple-backtick fence, else the whole body."""
    for text in reversed([m.group(1) for m in _FENCE_RE.finditer(response)]):
        try:
            return json.loads(text.strip())
        except json.JSONDecodeError:
            continue
    try:
        return json.loads(response.strip())
    except json.JSONDecodeError:
        raise ParseFailure("no parseable JSON in response", response) from None


def _prompt_json(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2)


def _retry_suffix(problems: Sequence[str]) -> str:
    lines = "\n".join(f"- {p}" for p in problems)
    return (
        "\n\n# Previous attempt failed validation\n"
        "The previous response was rejected by the schema validator:\n"
        f"{lines}\n"
        "Please answer again, following the output format exactly. "
        "The JSON must be valid JSON, between triple backticks (```).\n"
    )


@dataclass
class PaperInput:
    corpus_id: str
    title: str
    year: Optional[int]
    full_text: str


@dataclass
class StagedPaper:
    """Stage-2/3 output for one paper, awaiting alignment and ingestion."""

    paper: PaperInput
    contributions: list[Contribution] = field(default_factory=list)


@dataclass
class PipelineConfig:
    retries: int = 2  # extra attempts after the first, per stage call
    temperature: float = 0.0
    max_output_tokens: Optional[int] = None
    max_paper_chars: int = 600_000  # longer full text is tail-truncated
    prompts_dir: Optional[Path] = None


class Pipeline:
    def __init__(
        self,
        backend: GenerationBackend,
        graph: ContributionGraph,
        config: Optional[PipelineConfig] = None,
        records_path: Optional[str | Path] = None,
    ):
        self.backend = backend
        self.graph = graph
        self.config = config or PipelineConfig()
        self.records_path = Path(records_path) if records_path else None
        self._finalize_lock = threading.Lock()
        directory = self.config.prompts_dir
        self._templates = {
            name: load_template(name, directory)
            for name in (CONTRIBUTION_TEMPLATE, PREREQUISITE_TEMPLATE, ALIGNMENT_TEMPLATE)
        }

    # ------------------------------------------------------------------
    # Shared call machinery
    # ------------------------------------------------------------------

    def _paper_text(self, paper: PaperInput) -> str:
        text = paper.full_text
        if len(text) > self.config.max_paper_chars:
            logger.warning(
                "paper %s: full text truncated from %d to %d characters",
                paper.corpus_id,
                len(text),
                self.config.max_paper_chars,
            )
            text = text[: self.config.max_paper_chars]
        return text

    def _generate_validated(
        self,
        prompt: str,
        validate: Callable[[Any], tuple[Any, list[str]]],
        corpus_id: str,
        stage: str,
    ) -> Any:
        problems: list[str] = []
        current = prompt
        for _ in range(self.config.retries + 1):
            try:
                response = self.backend.generate(
                    current,
                    temperature=self.config.temperature,
                    max_output_tokens=self.config.max_output_tokens,
                )
            except BackendError as exc:
                raise BackendError(f"paper {corpus_id}, stage {stage}: {exc}") from exc
            try:
                doc = parse_fenced_json(response)
            except ParseFailure as exc:
                problems = [f"response is not parseable JSON: {exc}"]
            else:
                value, problems = validate(doc)
                if not problems:
                    return value
            current = prompt + _retry_suffix(problems)
        raise StageFailure(corpus_id, stage, "; ".join(problems))

    # ------------------------------------------------------------------
    # Stage 2: contribution extraction
    # ------------------------------------------------------------------

    def extract_contributions(self, paper: PaperInput) -> list[Contribution]:
        if not paper.full_text:
            raise ValueError(f"paper {paper.corpus_id}: empty full text")
        prompt = render(
            self._templates[CONTRIBUTION_TEMPLATE],
            {"paper_text": self._paper_text(paper)},
        )

        def validate(doc: Any) -> tuple[list[Contribution], list[str]]:
            problems: list[str] = []
            if not isinstance(doc, dict) or not isinstance(doc.get("contributions"), list):
                return [], ["top level must be a dict with a `contributions` list"]
            out: list[Contribution] = []
            for i, raw in enumerate(doc["contributions"]):
                if not isinstance(raw, dict):
                    problems.append(f"contribution {i} is not an object")
                    continue
                norm = normalize_contribution(raw)
                if not norm["name"]:
                    problems.append(f"contribution {i}: empty name")
                if not norm["description"]:
                    problems.append(f"contribution {i}: empty description")
                if not norm["types"]:
                    problems.append(f"contribution {i}: needs at least one contribution_type")
                if not norm["sections"]:
                    problems.append(f"contribution {i}: needs at least one section")
                out.append(
                    Contribution(
                        id=make_contribution_id(paper.corpus_id, i),
                        name=norm["name"],
                        description=norm["description"],
                        types=[
                            ContributionType(t["type"], t["explanation"])
                            for t in norm["types"]
                        ],
                        sections=norm["sections"],
                    )
                )
            return out, problems

        return self._generate_validated(prompt, validate, paper.corpus_id, "contributions")

    # ------------------------------------------------------------------
    # Stage 3: prerequisite extraction
    # ------------------------------------------------------------------

    @staticmethod
    def _stage_view(key: str, contribution: Contribution) -> dict[str, Any]:
        """Contribution as the prerequisite prompt presents it (prompt spelling)."""
        return {
            "key": key,
            "name": contribution.name,
            "description": contribution.description,
            "contribution_type": [
                {"type": t.category, "justification": t.explanation}
                for t in contribution.types
            ],
            "sections": list(contribution.sections),
        }

    def extract_prerequisites(
        self,
        contribution: Contribution,
        other_contributions: Sequence[Contribution],
        paper: PaperInput,
        ) -> list[dict[str, Any]]:
        """Returns normalized stage entries: contribution fields plus a
        `key` (input key or dash-split) and a `prerequisites` list whose
        internal references still carry stage keys (mapped to final ids
        at record assembly)."""
        if contribution.corpus_id != paper.corpus_id:
            raise ValueError("contribution does not belong to the given paper")
        input_key = str(contribution.index)
        known_keys = {str(c.index) for c in other_contributions} | {input_key}
        prompt = render(
            self._templates[PREREQUISITE_TEMPLATE],
            {
                "paper_text": self._paper_text(paper),
                "contribution": _prompt_json(self._stage_view(input_key, contribution)),
                "other_contributions": _prompt_json(
                    [self._stage_view(str(c.index), c) for c in other_contributions]
                ),
            },
        )

        def validate(doc: Any) -> tuple[list[dict[str, Any]], list[str]]:
            problems: list[str] = []
            if not isinstance(doc, dict) or not isinstance(doc.get("contributions"), list):
                return [], ["top level must be a dict with a `contributions` list"]
            entries = doc["contributions"]
            if not entries:
                return [], [f"output must carry the input contribution (key {input_key!r})"]
            out: list[dict[str, Any]] = []
            seen_keys: set[str] = set()
            output_keys = {
                str(e.get("key")) for e in entries if isinstance(e, dict) and e.get("key")
            }
            for raw in entries:
                if not isinstance(raw, dict):
                    problems.append("contribution entry is not an object")
                    continue
                key = str(raw.get("key", ""))
                if key != input_key and not re.fullmatch(
                    re.escape(input_key) + r"-\d+", key
                ):
                    problems.append(
                        f"key {key!r} is neither the input key {input_key!r} nor a dash-split of it"
                    )
                if key in seen_keys:
                    problems.append(f"duplicate key {key!r}")
                seen_keys.add(key)
                norm = normalize_contribution(raw)
                norm["key"] = key
                if not norm["name"] or not norm["description"]:
                    problems.append(f"key {key!r}: empty name or description")
                for p_idx, prereq in enumerate(norm["prerequisites"]):
                    where = f"key {key!r}, prerequisite {p_idx}"
                    if not prereq["name"]:
                        problems.append(f"{where}: empty name")
                    if prereq["core_or_peripheral"] not in CORE_OR_PERIPHERAL:
                        problems.append(
                            f"{where}: core_or_peripheral must be core or peripheral"
                        )
                    for ref in prereq["references"]:
                        kind = ref.get("type")
                        if kind == "paper":
                            if not ref.get("paper_title") and not ref.get("corpus_id"):
                                problems.append(
                                    f"{where}: paper reference needs a title or corpus_id"
                                )
                        elif kind == "internal":
                            # Normalization stores the echoed stage key in the
                            # contribution_id slot; assembly maps it to a final id.
                            target = ref.get("contribution_id")
                            if target == key:
                                problems.append(f"{where}: internal reference to itself")
                            elif target not in known_keys and target not in output_keys:
                                problems.append(
                                    f"{where}: internal reference to unknown key {target!r}"
                                )
                        elif kind == "artifact":
                            if not ref.get("url"):
                                problems.append(f"{where}: artifact reference needs a url")
                        else:
                            problems.append(f"{where}: unknown reference type {kind!r}")
                out.append(norm)
            return out, problems

        return self._generate_validated(prompt, validate, paper.corpus_id, "prerequisites")

    # ------------------------------------------------------------------
    # Stage 4: alignment
    # ------------------------------------------------------------------

    def align_prerequisite(
        self,
        dep: Contribution,
        prereq: Prerequisite,
        cited_contributions: Sequence[Contribution],
    ) -> list[Match]:
        if not cited_contributions:
            # Nothing to align against; a legal zero-match outcome.
            return []
        cited_corpora = {c.corpus_id for c in cited_contributions}
        if len(cited_corpora) != 1:
            raise ValueError("cited contributions must share one corpus_id")
        cited_corpus = next(iter(cited_corpora))
        cited_ids = {c.id for c in cited_contributions}
        meta = self.graph.papers.get(cited_corpus)
        source_payload = {
            "contribution": {"name": dep.name, "description": dep.description},
            "prerequisite": {
                "name": prereq.name,
                "description": prereq.description,
                "justification": prereq.explanation,
                "core_or_peripheral": prereq.core_or_peripheral,
            },
        }
        cited_payload = {
            "corpus_id": cited_corpus,
            "title": meta.title if meta else "",
            "year": meta.year if meta else None,
            "contributions": [
                {"key": c.id, "name": c.name, "description": c.description}
                for c in cited_contributions
            ],
        }
        prompt = render(
            self._templates[ALIGNMENT_TEMPLATE],
            {
                "source_contribution_with_prerequisite": _prompt_json(source_payload),
                "cited_paper_record": _prompt_json(cited_payload),
            },
        )

        def validate(doc: Any) -> tuple[list[Match], list[str]]:
            problems: list[str] = []
            if not isinstance(doc, dict) or not isinstance(doc.get("matches"), list):
                return [], ["top level must be a dict with a `matches` list"]
            out: list[Match] = []
            for raw in doc["matches"]:
                if not isinstance(raw, dict):
                    problems.append("match entry is not an object")
                    continue
                key = str(raw.get("contribution_key", raw.get("contribution_id", "")))
                if key not in cited_ids:
                    problems.append(
                        f"contribution_key {key!r} is not one of the cited paper's keys"
                    )
                match_type = raw.get("match_type")
                if match_type not in MATCH_TYPES:
                    problems.append(
                        f"match_type must be strong or weak, got {match_type!r}"
                    )
                out.append(Match(key, raw.get("explanation", ""), str(match_type)))
            return out, problems

        return self._generate_validated(prompt, validate, dep.corpus_id, "alignment")

    # ------------------------------------------------------------------
    # Orchestration
    # ------------------------------------------------------------------

    def stage_paper(self, paper: PaperInput) -> StagedPaper:
        """Run stages 2 and 3 and assemble final contributions (no matches yet)."""
        meta = self.graph.papers.get(paper.corpus_id)
        if meta is not None and meta.status == "extracted":
            raise DuplicatePaperError(f"paper {paper.corpus_id} already extracted")
        try:
            stage2 = self.extract_contributions(paper)
            entries: list[tuple[str, dict[str, Any]]] = []  # (input_key, entry)
            for i, contribution in enumerate(stage2):
                others = [c for j, c in enumerate(stage2) if j != i]
                for entry in self.extract_prerequisites(contribution, others, paper):
                    entries.append((str(i), entry))
        except StageFailure:
            self.graph.mark_failed(paper.corpus_id)
            raise

        # Densify keys (splits included) into sequential final ids.
        key_map: dict[str, str] = {}
        for idx, (_, entry) in enumerate(entries):
            key_map.setdefault(entry["key"], make_contribution_id(paper.corpus_id, idx))
        for idx, (input_key, entry) in enumerate(entries):
            # An unsplit input key maps to itself; a split one maps to its
            # first part so internal references from other calls still land.
            key_map.setdefault(input_key, make_contribution_id(paper.corpus_id, idx))

        contributions: list[Contribution] = []
        for idx, (input_key, entry) in enumerate(entries):
            cid = make_contribution_id(paper.corpus_id, idx)
            prerequisites: list[Prerequisite] = []
            for raw_prereq in entry["prerequisites"]:
                references: list = []
                for ref in raw_prereq["references"]:
                    if ref["type"] == "paper":
                        references.append(
                            PaperRef(
                                title=ref.get("paper_title", ""),
                                first_author=ref.get("first_author"),
                                year=ref.get("paper_year"),
                                venue=ref.get("paper_venue"),
                                corpus_id=ref.get("corpus_id"),
                            )
                        )
                    elif ref["type"] == "internal":
                        target = key_map.get(str(ref["contribution_id"]))
                        if target is None or target == cid:
                            logger.warning(
                                "%s: dropping internal reference to %r",
                                cid,
                                ref["contribution_id"],
                            )
                            continue
                        references.append(
                            InternalRef(
                                contribution_name=ref.get("contribution_name", ""),
                                contribution_id=target,
                                explanation=ref.get("explanation", ""),
                            )
                        )
                    else:
                        references.append(
                            ArtifactRef(name=ref.get("name", ""), url=ref.get("url", ""))
                        )
                prerequisites.append(
                    Prerequisite(
                        name=raw_prereq["name"],
                        description=raw_prereq["description"],
                        explanation=raw_prereq["explanation"],
                        core_or_peripheral=raw_prereq["core_or_peripheral"],
                        references=references,
                    )
                )
            contributions.append(
                Contribution(
                    id=cid,
                    name=entry["name"],
                    description=entry["description"],
                    types=[ContributionType(t["type"], t["explanation"]) for t in entry["types"]],
                    sections=entry["sections"],
                    prerequisites=prerequisites,
                    split_from=input_key if entry["key"] != input_key else None,
                )
            )
        return StagedPaper(paper=paper, contributions=contributions)

    def finalize_paper(self, staged: StagedPaper) -> tuple[ExtractionRecord, GraphDelta]:
        """Align against the current graph, ingest, and late-bind old references."""
        paper = staged.paper
        with self._finalize_lock:
            try:
                for contribution in staged.contributions:
                    for prereq in contribution.prerequisites:
                        for ref in prereq.references:
                            if not isinstance(ref, PaperRef) or not ref.corpus_id:
                                continue
                            meta = self.graph.papers.get(ref.corpus_id)
                            if meta is None or meta.status != "extracted":
                                continue
                            cited = self.graph.contributions_of(ref.corpus_id)
                            ref.matches = self.align_prerequisite(contribution, prereq, cited)
            except StageFailure:
                self.graph.mark_failed(paper.corpus_id)
                raise

            record = ExtractionRecord(
                corpus_id=paper.corpus_id,
                title=paper.title,
                year=paper.year,
                contributions=staged.contributions,
            )
            pending = [
                u
                for u in self.graph.unresolved
                if u.ref.corpus_id == paper.corpus_id and not u.ref.matches
            ]
            delta = self.graph.add_paper_record(record)
            if self.records_path is not None:
                jsonl.append_jsonl(self.records_path, record.to_json())

            # Late binding: references from earlier papers that cited this
            # one are aligned now that its contributions exist. Failures
            # here only skip the single reference; the new paper is in.
            for entry in pending:
                owner = self.graph.get_contribution(entry.owner_id)
                prereq = owner.prerequisites[entry.prereq_index]
                try:
                    matches = self.align_prerequisite(owner, prereq, record.contributions)
                except StageFailure as exc:
                    logger.warning("late alignment skipped: %s", exc)
                    continue
                for match in matches:
                    if match.contribution_id == entry.owner_id:
                        continue
                    self.graph.add_edge(
                        Edge(
                            pre_id=match.contribution_id,
                            dep_id=entry.owner_id,
                            match_type=match.match_type,
                            explanation=match.explanation,
                            prereq_index=entry.prereq_index,
                        )
                    )
            return record, delta

    def run_paper(self, paper: PaperInput) -> tuple[ExtractionRecord, GraphDelta]:
        return self.finalize_paper(self.stage_paper(paper))

    def run_batch(
        self, papers: Sequence[PaperInput], parallel: int = 1
    ) -> list[tuple[PaperInput, Optional[GraphDelta], Optional[Exception]]]:
        """Stage papers concurrently, finalize in input order.

        Returns one (paper, delta, error) row per input; failed papers
        carry the error and leave the graph untouched apart from their
        failed status.
        """
        results: list[tuple[PaperInput, Optional[GraphDelta], Optional[Exception]]] = []
        staged: list[Optional[StagedPaper]] = [None] * len(papers)
        errors: dict[int, Exception] = {}

        def _stage(index: int) -> None:
            try:
                staged[index] = self.stage_paper(papers[index])
            except Exception as exc:  # noqa: BLE001 - reported per paper
                errors[index] = exc

        if parallel > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                list(pool.map(_stage, range(len(papers))))
        else:
            for i in range(len(papers)):
                _stage(i)

        for i, paper in enumerate(papers):
            if i in errors:
                results.append((paper, None, errors[i]))
                continue
            try:
                _, delta = self.finalize_paper(staged[i])
                results.append((paper, delta, None))
            except Exception as exc:  # noqa: BLE001 - reported per paper
                results.append((paper, None, exc))
        return results

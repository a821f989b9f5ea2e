"""Prerequisite-prediction problem construction.

A problem pairs one target contribution with exactly 100 candidates:
its gold prerequisites (distinct precursors from the deduplicated
incoming-edge view) plus close distractors retrieved by cosine
similarity over the embedding index. Distractors are filtered so none
postdates the target year, none comes from the target's own paper, and
none comes from a paper with a direct edge to any contribution of the
target's paper. Candidates are shuffled with a per-problem seed.
"""
from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from . import jsonl
from .embedding import EmbeddingIndex
from .graph import ContributionGraph
from .model import Contribution, PartialDate

logger = logging.getLogger(__name__)

CANDIDATES_PER_PROBLEM = 100


@dataclass
class Problem:
    problem_id: str
    target_id: str
    target_name: str
    target_description: str
    target_year: int
    target_date: Optional[PartialDate]
    candidates: list[dict[str, str]]  # {id, name, description}, shuffled order
    gold_ids: set[str]
    seed: int

    def to_json(self) -> dict[str, Any]:
        target: dict[str, Any] = {
            "id": self.target_id,
            "name": self.target_name,
            "description": self.target_description,
            "year": self.target_year,
        }
        if self.target_date is not None:
            target["date"] = self.target_date.to_json()
        return {
            "problem_id": self.problem_id,
            "target": target,
            "candidates": self.candidates,
            "gold_ids": sorted(self.gold_ids),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Problem":
        target = obj["target"]
        return cls(
            problem_id=obj["problem_id"],
            target_id=target["id"],
            target_name=target.get("name", ""),
            target_description=target.get("description", ""),
            target_year=target["year"],
            target_date=PartialDate.parse(target["date"]) if target.get("date") else None,
            candidates=list(obj["candidates"]),
            gold_ids=set(obj["gold_ids"]),
            seed=obj["seed"],
        )

    @property
    def candidate_ids(self) -> list[str]:
        return [c["id"] for c in self.candidates]


@dataclass
class Skip:
    """Why a target produced no problem."""

    target_id: str
    reason: str


def sample_targets(
    graph: ContributionGraph,
    years: Sequence[int],
    n_per_year: int,
    rng_seed: int,
) -> list[Contribution]:
    """Per year, up to n_per_year uniform draws (without replacement)
    among contributions with at least one incoming edge."""
    if not graph.nodes:
        raise ValueError("graph has no contributions to sample from")
    rng = random.Random(rng_seed)
    with_incoming = {e.dep_id for e in graph.edges}
    targets: list[Contribution] = []
    for year in years:
        pool = sorted(
            cid
            for cid in with_incoming
            if graph.year_of(cid) == year
        )
        if not pool:
            logger.warning("year %d has no eligible targets", year)
            continue
        picks = rng.sample(pool, min(n_per_year, len(pool)))
        targets.extend(graph.nodes[cid] for cid in picks)
    return targets


def problem_seed(rng_seed: int, target_id: str) -> int:
    digest = hashlib.sha256(f"{rng_seed}:{target_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def excluded_papers(graph: ContributionGraph, target: Contribution) -> set[str]:
    """The target's own paper plus every paper with a direct edge (either
    direction) to any contribution of the target's paper."""
    target_paper = target.corpus_id
    excluded = {target_paper}
    for contribution in graph.contributions_of(target_paper):
        for edge in graph.incoming_edges(contribution.id):
            excluded.add(graph.nodes[edge.pre_id].corpus_id)
        for edge in graph.outgoing_edges(contribution.id):
            excluded.add(graph.nodes[edge.dep_id].corpus_id)
    return excluded


def build_problem(
    target: Contribution,
    graph: ContributionGraph,
    index: EmbeddingIndex,
    k: int = CANDIDATES_PER_PROBLEM,
    strong_only: bool = False,
    rng_seed: int = 0,
) -> Problem | Skip:
    target_year = graph.year_of(target.id)
    if target_year is None:
        return Skip(target.id, "target paper has no year")

    incoming = [e for e in graph.deduplicated_edges() if e.dep_id == target.id]
    if strong_only:
        incoming = [e for e in incoming if e.match_type == "strong"]
    gold = sorted({e.pre_id for e in incoming})
    if not gold:
        return Skip(target.id, "no gold prerequisites after filtering")
    if len(gold) > k:
        return Skip(target.id, f"gold set ({len(gold)}) exceeds candidate count {k}")
    if target.id not in index:
        return Skip(target.id, "target missing from embedding index")

    gold_set = set(gold)
    banned_papers = excluded_papers(graph, target)

    def eligible(cid: str) -> bool:
        if cid == target.id or cid in gold_set:
            return False
        node = graph.nodes.get(cid)
        if node is None:
            return False
        if node.corpus_id in banned_papers:
            return False
        year = graph.year_of(cid)
        return year is not None and year <= target_year

    # Over-fetch from the index, then filter; double until satisfied or
    # the whole index has been scanned.
    need = k - len(gold)
    query = index.vector(target.id)
    fetch = min(4 * k, len(index))
    distractors: list[str] = []
    while True:
        retrieved = index.cosine_top_k(query, fetch)
        distractors = [cid for cid, _ in retrieved if eligible(cid)][:need]
        if len(distractors) >= need or fetch >= len(index):
            break
        fetch = min(fetch * 2, len(index))
    if len(gold) + len(distractors) < k:
        return Skip(target.id, "insufficient candidates")

    seed = problem_seed(rng_seed, target.id)
    candidate_ids = gold + distractors
    rng = random.Random(seed)
    rng.shuffle(candidate_ids)
    candidates = [
        {
            "id": cid,
            "name": graph.nodes[cid].name,
            "description": graph.nodes[cid].description,
        }
        for cid in candidate_ids
    ]
    meta = graph.papers[target.corpus_id]
    return Problem(
        problem_id=target.id,
        target_id=target.id,
        target_name=target.name,
        target_description=target.description,
        target_year=target_year,
        target_date=meta.date,
        candidates=candidates,
        gold_ids=gold_set,
        seed=seed,
    )


@dataclass
class GenerationResult:
    problems: list[Problem] = field(default_factory=list)
    skips: list[Skip] = field(default_factory=list)


def generate_problems(
    graph: ContributionGraph,
    index: EmbeddingIndex,
    years: Sequence[int],
    n_per_year: int,
    rng_seed: int,
    strong_only: bool = False,
    k: int = CANDIDATES_PER_PROBLEM,
) -> GenerationResult:
    result = GenerationResult()
    for target in sample_targets(graph, years, n_per_year, rng_seed):
        built = build_problem(
            target, graph, index, k=k, strong_only=strong_only, rng_seed=rng_seed
        )
        if isinstance(built, Skip):
            logger.warning("skipped %s: %s", built.target_id, built.reason)
            result.skips.append(built)
        else:
            result.problems.append(built)
    return result


def write_problems(path: str | Path, problems: Iterable[Problem]) -> None:
    jsonl.write_jsonl(path, (p.to_json() for p in problems))


def read_problems(path: str | Path) -> list[Problem]:
    return [Problem.from_json(row) for row in jsonl.read_jsonl(path)]


def write_manifest(
    path: str | Path,
    graph: ContributionGraph,
    years: Sequence[int],
    n_per_year: int,
    rng_seed: int,
    strong_only: bool,
    result: GenerationResult,
) -> None:
    manifest = {
        "seed": rng_seed,
        "years": list(years),
        "n_per_year": n_per_year,
        "strong_only": strong_only,
        "candidates_per_problem": CANDIDATES_PER_PROBLEM,
        "problems": len(result.problems),
        "skipped": len(result.skips),
        "graph_hash": graph.graph_hash(),
    }
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

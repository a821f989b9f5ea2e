"""Domain types for the contribution graph.

Serialization follows the released extraction-record layout: key names
and nesting match the record files bit-for-bit, so every ``to_json``
builds its dict in the canonical key order and ``from_json`` accepts
exactly those keys (ingestion-time alias handling lives in records.py,
not here).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Union

# Category vocabulary offered to the extractor. The prompt marks the
# list as non-exhaustive, so unknown labels are kept verbatim and only
# warned about at validation time.
CONTRIBUTION_CATEGORIES = frozenset({
    "problem_formulation",
    "theoretical_insight",
    "conceptual_framework",
    "resource_benchmark",
    "resource_dataset",
    "tool_system_software",
    "empirical_evaluation",
    "analysis",
    "models_or_architectures",
    "techniques_algorithms",
    "representational",
    "research_methods_procedures",
    "metrics_instruments",
    "position_statement",
    "real_world_application",
    "society_ethics_policy",
    "other",
})

MATCH_TYPES = ("strong", "weak")
CORE_OR_PERIPHERAL = ("core", "peripheral")
PAPER_STATUSES = ("pending", "extracted", "failed")


@dataclass
class PartialDate:
    """Calendar date with optional month/day granularity."""

    year: int
    month: Optional[int] = None
    day: Optional[int] = None

    def to_json(self) -> str:
        if self.month is None:
            return f"{self.year:04d}"
        if self.day is None:
            return f"{self.year:04d}-{self.month:02d}"
        return f"{self.year:04d}-{self.month:02d}-{self.day:02d}"

    @classmethod
    def parse(cls, text: str) -> "PartialDate":
        parts = str(text).split("-")
        if not 1 <= len(parts) <= 3:
            raise ValueError(f"bad date {text!r}")
        year = int(parts[0])
        month = int(parts[1]) if len(parts) > 1 else None
        day = int(parts[2]) if len(parts) > 2 else None
        return cls(year, month, day)


@dataclass
class PaperMeta:
    corpus_id: str
    title: str = ""
    year: Optional[int] = None
    date: Optional[PartialDate] = None
    venue: Optional[str] = None
    status: str = "pending"

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "corpus_id": self.corpus_id,
            "title": self.title,
            "year": self.year,
        }
        if self.date is not None:
            out["date"] = self.date.to_json()
        if self.venue is not None:
            out["venue"] = self.venue
        out["status"] = self.status
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "PaperMeta":
        date = obj.get("date")
        return cls(
            corpus_id=str(obj["corpus_id"]),
            title=obj.get("title", ""),
            year=obj.get("year"),
            date=PartialDate.parse(date) if date else None,
            venue=obj.get("venue"),
            status=obj.get("status", "pending"),
        )


@dataclass
class ContributionType:
    category: str
    explanation: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"type": self.category, "explanation": self.explanation}


@dataclass
class Match:
    contribution_id: str
    explanation: str
    match_type: str

    def to_json(self) -> dict[str, Any]:
        return {
            "contribution_id": self.contribution_id,
            "explanation": self.explanation,
            "match_type": self.match_type,
        }


@dataclass
class PaperRef:
    title: str = ""
    first_author: Optional[dict[str, str]] = None  # last_name/first_name/middle_names
    year: Optional[int] = None
    venue: Optional[str] = None
    corpus_id: Optional[str] = None
    matches: list[Match] = field(default_factory=list)

    type = "paper"

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"type": "paper", "paper_title": self.title}
        if self.first_author is not None:
            out["first_author"] = self.first_author
        out["paper_year"] = self.year
        out["paper_venue"] = self.venue
        out["corpus_id"] = self.corpus_id
        out["matches"] = [m.to_json() for m in self.matches]
        return out


@dataclass
class InternalRef:
    contribution_name: str
    contribution_id: str
    explanation: str = ""

    type = "internal"

    def to_json(self) -> dict[str, Any]:
        return {
            "type": "internal",
            "contribution_name": self.contribution_name,
            "contribution_id": self.contribution_id,
            "explanation": self.explanation,
        }


@dataclass
class ArtifactRef:
    name: str
    url: str

    type = "artifact"

    def to_json(self) -> dict[str, Any]:
        return {"type": "artifact", "name": self.name, "url": self.url}


Reference = Union[PaperRef, InternalRef, ArtifactRef]


@dataclass
class Prerequisite:
    name: str
    description: str
    explanation: str = ""
    core_or_peripheral: str = "core"
    references: list[Reference] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "explanation": self.explanation,
            "core_or_peripheral": self.core_or_peripheral,
            "references": [r.to_json() for r in self.references],
        }


@dataclass
class Contribution:
    id: str
    name: str
    description: str
    types: list[ContributionType] = field(default_factory=list)
    sections: list[str] = field(default_factory=list)
    prerequisites: list[Prerequisite] = field(default_factory=list)
    split_from: Optional[str] = None  # original stage-2 key when dash-split

    @property
    def corpus_id(self) -> str:
        return split_contribution_id(self.id)[0]

    @property
    def index(self) -> int:
        return split_contribution_id(self.id)[1]

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "contribution_id": self.id,
            "name": self.name,
            "description": self.description,
            "types": [t.to_json() for t in self.types],
            "sections": list(self.sections),
        }
        if self.split_from is not None:
            out["split_from"] = self.split_from
        out["prerequisites"] = [p.to_json() for p in self.prerequisites]
        return out


@dataclass
class Edge:
    pre_id: str
    dep_id: str
    match_type: str
    explanation: str = ""
    prereq_index: int = 0

    def to_json(self) -> dict[str, Any]:
        return {
            "pre_id": self.pre_id,
            "dep_id": self.dep_id,
            "match_type": self.match_type,
            "explanation": self.explanation,
            "prereq_index": self.prereq_index,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Edge":
        return cls(
            pre_id=obj["pre_id"],
            dep_id=obj["dep_id"],
            match_type=obj["match_type"],
            explanation=obj.get("explanation", ""),
            prereq_index=int(obj.get("prereq_index", 0)),
        )


@dataclass
class ExtractionRecord:
    corpus_id: str
    title: str
    year: Optional[int]
    contributions: list[Contribution] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "corpus_id": self.corpus_id,
            "title": self.title,
            "year": self.year,
            "contributions": [c.to_json() for c in self.contributions],
        }


def split_contribution_id(cid: str) -> tuple[str, int]:
    """Split "<corpus_id>.c<index>" into its parts.

    Raises ValueError when the id does not follow the pattern or the
    index is negative.
    """
    corpus, sep, tail = cid.rpartition(".c")
    if not sep or not corpus or not tail.isdigit():
        raise ValueError(f"malformed contribution id {cid!r}")
    return corpus, int(tail)


def make_contribution_id(corpus_id: str, index: int) -> str:
    if index < 0:
        raise ValueError("contribution index must be non-negative")
    return f"{corpus_id}.c{index}"

"""Crawl frontier: which cited-but-unextracted papers to process next.

Unresolved prerequisite references are counted into a histogram keyed
by resolved corpus id (or normalized title+year when unresolvable),
and the next batch is the most frequently cited available papers.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from . import jsonl
from .graph import ContributionGraph, normalize_title
from .model import PaperRef, PartialDate

logger = logging.getLogger(__name__)


@dataclass
class CatalogEntry:
    corpus_id: str
    title: str = ""
    year: Optional[int] = None
    first_author_last: str = ""
    open_access: bool = False
    text_path: str = ""
    date: Optional[str] = None
    venue: Optional[str] = None


class Catalog:
    """Known-paper catalog with a normalized-title lookup."""

    def __init__(self, entries: list[CatalogEntry]):
        self.by_id: dict[str, CatalogEntry] = {e.corpus_id: e for e in entries}
        self.by_title: dict[str, list[CatalogEntry]] = {}
        for entry in entries:
            self.by_title.setdefault(normalize_title(entry.title), []).append(entry)

    @classmethod
    def load(cls, path: str | Path) -> "Catalog":
        entries = []
        for row in jsonl.read_jsonl(path):
            entries.append(
                CatalogEntry(
                    corpus_id=str(row["corpus_id"]),
                    title=row.get("title", ""),
                    year=row.get("year"),
                    first_author_last=row.get("first_author_last", ""),
                    open_access=bool(row.get("open_access", False)),
                    text_path=row.get("text_path", ""),
                    date=row.get("date"),
                    venue=row.get("venue"),
                )
            )
        return cls(entries)

    def meta_date(self, corpus_id: str) -> Optional[PartialDate]:
        entry = self.by_id.get(corpus_id)
        if entry and entry.date:
            return PartialDate.parse(entry.date)
        return None


def resolve_reference(ref: PaperRef, catalog: Catalog) -> Optional[str]:
    """Resolve a paper reference to a corpus id.

    Exact corpus_id passthrough when present; otherwise a normalized
    title match with year agreement within one year and, on a title
    tie, first-author last-name agreement. Ambiguity resolves to none.
    """
    if ref.corpus_id:
        return ref.corpus_id
    if not ref.title:
        return None
    candidates = catalog.by_title.get(normalize_title(ref.title), [])
    if ref.year is not None:
        candidates = [
            c for c in candidates if c.year is None or abs(c.year - ref.year) <= 1
        ]
    if len(candidates) > 1 and ref.first_author:
        last = str(ref.first_author.get("last_name", "")).casefold()
        candidates = [c for c in candidates if c.first_author_last.casefold() == last]
    if len(candidates) == 1:
        return candidates[0].corpus_id
    if len(candidates) > 1:
        logger.warning(
            "ambiguous reference %r (%s candidates), leaving unresolved",
            ref.title,
            len(candidates),
        )
    return None


def build_histogram(
    graph: ContributionGraph, catalog: Optional[Catalog] = None
) -> Counter:
    """Count unresolved prerequisite references per cited paper.

    Keys are resolved corpus ids when available, else normalized
    title+year. References whose cited paper is already extracted do
    not count.
    """
    histogram: Counter = Counter()
    for entry in graph.unresolved:
        corpus_id = entry.ref.corpus_id
        if corpus_id is None and catalog is not None:
            corpus_id = resolve_reference(entry.ref, catalog)
        if corpus_id is not None:
            meta = graph.papers.get(corpus_id)
            if meta is not None and meta.status == "extracted":
                continue
            key = corpus_id
        else:
            key = entry.key()
        histogram[key] += 1
    return histogram


def select_batch(
    histogram: Counter,
    availability: Callable[[str], bool],
    k: int,
) -> list[str]:
    """Top-k available keys by descending count, ties broken by ascending key."""
    if k < 1:
        raise ValueError("batch size k must be >= 1")
    ranked = sorted(histogram.items(), key=lambda kv: (-kv[1], kv[0]))
    return [key for key, _ in ranked if availability(key)][:k]


def catalog_availability(catalog: Catalog) -> Callable[[str], bool]:
    """Open access with a readable text file."""

    def available(key: str) -> bool:
        entry = catalog.by_id.get(key)
        return (
            entry is not None
            and entry.open_access
            and bool(entry.text_path)
            and Path(entry.text_path).exists()
        )

    return available

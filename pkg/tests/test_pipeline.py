from __future__ import annotations

import pytest

import corpus_fixture as cf
from contribgraph.backends import GenerationBackend, MockBackend, echo_json
from contribgraph.errors import BackendError, ParseFailure, StageFailure
from contribgraph.graph import ContributionGraph
from contribgraph.jsonl import read_jsonl
from contribgraph.model import InternalRef, PaperRef
from contribgraph.pipeline import (
    PaperInput,
    Pipeline,
    PipelineConfig,
    parse_fenced_json,
)

from conftest import load_golden_raw

BERT = "52967399"
ATTENTION = "13756489"


class QueueBackend(GenerationBackend):
    """Returns queued responses in order, recording prompts."""

    name = "queue"
    model = "test"

    def __init__(self, responses):
        super().__init__()
        self.responses = list(responses)
        self.prompts: list[str] = []

    def generate(self, prompt, temperature=0.0, max_output_tokens=None):
        self.prompts.append(prompt)
        assert self.responses, "response queue exhausted"
        response = self.responses.pop(0)
        self._account(len(prompt) // 4, len(response) // 4, 0.0)
        return response


class ExplodingBackend(GenerationBackend):
    name = "exploding"

    def generate(self, prompt, temperature=0.0, max_output_tokens=None):
        raise AssertionError("backend must not be called")


def make_pipeline(backend, graph=None, retries=2):
    graph = graph or ContributionGraph()
    return Pipeline(backend, graph, PipelineConfig(retries=retries)), graph


class TestParseFencedJson:
    def test_bare_fence(self):
        assert parse_fenced_json('```{"a":1}```') == {"a": 1}

    def test_prose_around_fence(self):
        text = 'Sure, here you go:\n```json\n{"a": [1, 2]}\n```\nHope that helps!'
        assert parse_fenced_json(text) == {"a": [1, 2]}

    def test_two_fences_second_malformed_takes_first(self):
        text = '```\n{"first": true}\n```\nand then\n```\n{"broken": \n```'
        assert parse_fenced_json(text) == {"first": True}

    def test_last_well_formed_fence_wins(self):
        text = '```\n{"first": 1}\n```\nmid\n```\n{"second": 2}\n```'
        assert parse_fenced_json(text) == {"second": 2}

    def test_whole_body_fallback(self):
        assert parse_fenced_json(' {"x": null} ') == {"x": None}

    def test_unparseable_raises_with_raw_text(self):
        with pytest.raises(ParseFailure) as info:
            parse_fenced_json("I refuse to answer in JSON.")
        assert info.value.raw_text == "I refuse to answer in JSON."


def golden_bert_stage2_response() -> str:
    """Stage-2 style response carrying the golden record's 12 contributions."""
    bert = next(r for r in load_golden_raw() if r["corpus_id"] == BERT)
    doc = {
        "contributions": [
            {
                "name": c["name"],
                "description": c["description"],
                "contribution_type": [
                    {"type": t["type"], "justification": t["explanation"]}
                    for t in c["types"]
                ],
                "sections": c["sections"],
            }
            for c in bert["contributions"]
        ]
    }
    return echo_json(doc)


def bert_paper() -> PaperInput:
    return PaperInput(BERT, "BERT: Pre-training of Deep Bidirectional Transformers", 2019,
                      "Full text of the encoder paper.")


class TestExtractContributions:
    def test_bert_replay_yields_12(self):
        pipeline, _ = make_pipeline(QueueBackend([golden_bert_stage2_response()]))
        contributions = pipeline.extract_contributions(bert_paper())
        assert len(contributions) == 12
        assert contributions[0].name == "Bidirectional Transformer encoder architecture (BERT)"
        assert contributions[0].id == f"{BERT}.c0"

    def test_empty_contribution_list_is_legal(self):
        pipeline, _ = make_pipeline(QueueBackend([echo_json({"contributions": []})]))
        assert pipeline.extract_contributions(bert_paper()) == []

    def test_empty_full_text_rejected(self):
        pipeline, _ = make_pipeline(ExplodingBackend())
        with pytest.raises(ValueError):
            pipeline.extract_contributions(PaperInput("1", "t", 2020, ""))

    def test_schema_violation_retries_then_fails(self):
        bad = echo_json({"contributions": [{"name": "", "description": "d"}]})
        backend = QueueBackend([bad, bad, bad])
        pipeline, graph = make_pipeline(backend)
        with pytest.raises(StageFailure) as info:
            pipeline.extract_contributions(bert_paper())
        assert info.value.stage == "contributions"
        assert backend.usage.calls == 3  # retry bound: R + 1 with R = 2

    def test_retry_prompt_carries_validator_errors(self):
        bad = echo_json({"contributions": [{"name": "", "description": "d"}]})
        good = golden_bert_stage2_response()
        backend = QueueBackend([bad, good])
        pipeline, _ = make_pipeline(backend)
        contributions = pipeline.extract_contributions(bert_paper())
        assert len(contributions) == 12
        assert backend.usage.calls == 2
        retry_prompt = backend.prompts[1]
        assert retry_prompt.startswith(backend.prompts[0])
        assert "failed validation" in retry_prompt
        assert "empty name" in retry_prompt

    def test_mean_contribution_count_over_25_papers(self):
        # Synthetic 25-paper corpus; the fixture mean is recomputed by
        # scanning the canned responses, not assumed.
        rng_counts = [9, 8, 10, 7, 12, 9, 8, 11, 6, 9, 10, 8, 9, 7, 13,
                      9, 8, 10, 9, 11, 7, 8, 9, 10, 6]
        responses = []
        for p, count in enumerate(rng_counts):
            responses.append(echo_json({
                "contributions": [
                    {
                        "name": f"paper {p} thing {i}",
                        "description": "d",
                        "contribution_type": [{"type": "analysis", "justification": "j"}],
                        "sections": ["S1"],
                    }
                    for i in range(count)
                ]
            }))
        fixture_mean = sum(
            len(parse_fenced_json(r)["contributions"]) for r in responses
        ) / len(responses)
        backend = QueueBackend(responses)
        pipeline, _ = make_pipeline(backend)
        totals = []
        for p in range(25):
            paper = PaperInput(f"60{p:03d}", f"paper {p}", 2020, f"text of paper {p}")
            totals.append(len(pipeline.extract_contributions(paper)))
        assert sum(totals) / len(totals) == fixture_mean

    def test_truncation_warns(self, caplog):
        pipeline, _ = make_pipeline(QueueBackend([echo_json({"contributions": []})]))
        pipeline.config.max_paper_chars = 10
        paper = PaperInput("9", "t", 2020, "x" * 100)
        with caplog.at_level("WARNING"):
            pipeline.extract_contributions(paper)
        assert any("truncated" in r.message for r in caplog.records)
        backend_prompt = pipeline.backend.prompts[0]
        assert "x" * 10 in backend_prompt and "x" * 11 not in backend_prompt


def stage3_entry(key, name="thing", prereqs=None):
    return {
        "key": key,
        "name": name,
        "description": f"{name} description",
        "contribution_type": [{"type": "analysis", "justification": "j"}],
        "sections": ["S1"],
        "prerequisites": prereqs or [],
    }


class TestExtractPrerequisites:
    def _contribution(self, pipeline):
        response = golden_bert_stage2_response()
        return pipeline.extract_contributions(bert_paper())

    def test_bert_c0_six_prerequisites(self, golden_graph):
        bert_raw = next(r for r in load_golden_raw() if r["corpus_id"] == BERT)
        prereqs = []
        for p in bert_raw["contributions"][0]["prerequisites"][:6]:
            refs = []
            for ref in p["references"]:
                if ref["type"] == "paper":
                    refs.append(
                        {
                            "type": "paper",
                            "paper_title": ref["paper_title"],
                            "year": ref["paper_year"],
                            "venue": ref["paper_venue"],
                            "corpus_id": ref["corpus_id"],
                        }
                    )
                else:
                    key = ref["contribution_id"].rsplit(".c", 1)[1]
                    refs.append(
                        {
                            "type": "internal",
                            "contribution_name": ref["contribution_name"],
                            "contribution_key": key,
                            "justification": ref["explanation"],
                        }
                    )
            prereqs.append(
                {
                    "name": p["name"],
                    "description": p["description"],
                    "justification": p["explanation"],
                    "core_or_peripheral": p["core_or_peripheral"],
                    "references_in_paper": refs,
                }
            )
        entry = stage3_entry("0", "Bidirectional Transformer encoder architecture (BERT)",
                             prereqs)
        backend = QueueBackend([echo_json({"contributions": [entry]})])
        pipeline = Pipeline(backend, golden_graph, PipelineConfig())
        target = golden_graph.get_contribution(f"{BERT}.c0")
        others = [c for c in golden_graph.contributions_of(BERT) if c.id != target.id]
        paper = PaperInput(BERT, "BERT", 2019, "text")
        out = pipeline.extract_prerequisites(target, others, paper)
        assert len(out) == 1
        got = out[0]["prerequisites"]
        assert len(got) == 6
        transformer = got[0]
        assert transformer["name"] == "Transformer encoder (self-attention) architecture"
        assert transformer["core_or_peripheral"] == "core"
        assert [r["type"] for r in transformer["references"]] == ["paper"]

    def test_echo_with_no_prerequisites(self):
        backend = QueueBackend([
            golden_bert_stage2_response(),
            echo_json({"contributions": [stage3_entry("0")]}),
        ])
        pipeline, _ = make_pipeline(backend)
        contributions = pipeline.extract_contributions(bert_paper())
        out = pipeline.extract_prerequisites(contributions[0], contributions[1:], bert_paper())
        assert len(out) == 1
        assert out[0]["prerequisites"] == []

    def test_split_keys_accepted(self):
        backend = QueueBackend([
            golden_bert_stage2_response(),
            echo_json({"contributions": [stage3_entry("2-1"), stage3_entry("2-2")]}),
        ])
        pipeline, _ = make_pipeline(backend)
        contributions = pipeline.extract_contributions(bert_paper())
        out = pipeline.extract_prerequisites(
            contributions[2],
            [c for i, c in enumerate(contributions) if i != 2],
            bert_paper(),
        )
        assert [e["key"] for e in out] == ["2-1", "2-2"]

    def test_unrelated_key_fails_after_retries(self):
        bad = echo_json({"contributions": [stage3_entry("7")]})
        backend = QueueBackend([golden_bert_stage2_response(), bad, bad, bad])
        pipeline, _ = make_pipeline(backend)
        contributions = pipeline.extract_contributions(bert_paper())
        with pytest.raises(StageFailure) as info:
            pipeline.extract_prerequisites(contributions[2], [], bert_paper())
        assert info.value.stage == "prerequisites"

    def test_unknown_reference_type_fails(self):
        entry = stage3_entry("0", prereqs=[{
            "name": "p", "description": "d", "justification": "j",
            "core_or_peripheral": "core",
            "references_in_paper": [{"type": "telepathy"}],
        }])
        bad = echo_json({"contributions": [entry]})
        backend = QueueBackend([golden_bert_stage2_response(), bad, bad, bad])
        pipeline, _ = make_pipeline(backend)
        contributions = pipeline.extract_contributions(bert_paper())
        with pytest.raises(StageFailure, match="telepathy"):
            pipeline.extract_prerequisites(contributions[0], contributions[1:], bert_paper())


class TestAlignPrerequisite:
    def test_transformer_prerequisite_strong_plus_weak(self, golden_graph):
        dep = golden_graph.get_contribution(f"{BERT}.c0")
        prereq = dep.prerequisites[0]
        cited = golden_graph.contributions_of(ATTENTION)
        response = echo_json({
            "matches": [
                {"contribution_key": f"{ATTENTION}.c0", "explanation": "full encoder",
                 "match_type": "strong"},
                {"contribution_key": f"{ATTENTION}.c1", "explanation": "attention op",
                 "match_type": "weak"},
                {"contribution_key": f"{ATTENTION}.c2", "explanation": "heads",
                 "match_type": "weak"},
                {"contribution_key": f"{ATTENTION}.c3", "explanation": "positions",
                 "match_type": "weak"},
            ],
            "overall_explanation": "ok",
        })
        pipeline = Pipeline(QueueBackend([response]), golden_graph, PipelineConfig())
        matches = pipeline.align_prerequisite(dep, prereq, cited)
        assert [(m.contribution_id, m.match_type) for m in matches] == [
            (f"{ATTENTION}.c0", "strong"),
            (f"{ATTENTION}.c1", "weak"),
            (f"{ATTENTION}.c2", "weak"),
            (f"{ATTENTION}.c3", "weak"),
        ]

    def test_zero_cited_contributions_no_call(self, golden_graph):
        dep = golden_graph.get_contribution(f"{BERT}.c0")
        pipeline = Pipeline(ExplodingBackend(), golden_graph, PipelineConfig())
        assert pipeline.align_prerequisite(dep, dep.prerequisites[0], []) == []

    def test_empty_matches_is_legal(self, golden_graph):
        dep = golden_graph.get_contribution(f"{BERT}.c0")
        prereq = dep.prerequisites[6]  # the unaligned optimization-techniques citation
        cited = golden_graph.contributions_of("3626819")
        response = echo_json({"matches": [], "overall_explanation": "nothing fits"})
        pipeline = Pipeline(QueueBackend([response]), golden_graph, PipelineConfig())
        assert pipeline.align_prerequisite(dep, prereq, cited) == []

    def test_foreign_id_fails_after_retries(self, golden_graph):
        dep = golden_graph.get_contribution(f"{BERT}.c0")
        cited = golden_graph.contributions_of(ATTENTION)
        bad = echo_json({
            "matches": [{"contribution_key": "999.c9", "explanation": "?",
                         "match_type": "strong"}],
            "overall_explanation": "",
        })
        pipeline = Pipeline(QueueBackend([bad, bad, bad]), golden_graph, PipelineConfig())
        with pytest.raises(StageFailure, match="alignment"):
            pipeline.align_prerequisite(dep, dep.prerequisites[0], cited)

    def test_malformed_match_type_fails(self, golden_graph):
        dep = golden_graph.get_contribution(f"{BERT}.c0")
        cited = golden_graph.contributions_of(ATTENTION)
        bad = echo_json({
            "matches": [{"contribution_key": f"{ATTENTION}.c0", "explanation": "?",
                         "match_type": "medium"}],
            "overall_explanation": "",
        })
        pipeline = Pipeline(QueueBackend([bad, bad, bad]), golden_graph, PipelineConfig())
        with pytest.raises(StageFailure, match="strong or weak"):
            pipeline.align_prerequisite(dep, dep.prerequisites[0], cited)

    def test_mixed_corpora_rejected(self, golden_graph):
        dep = golden_graph.get_contribution(f"{BERT}.c0")
        cited = [
            golden_graph.get_contribution(f"{ATTENTION}.c0"),
            golden_graph.get_contribution("3626819.c0"),
        ]
        pipeline = Pipeline(ExplodingBackend(), golden_graph, PipelineConfig())
        with pytest.raises(ValueError, match="one corpus_id"):
            pipeline.align_prerequisite(dep, dep.prerequisites[0], cited)


class TestRunPaper:
    def test_one_contribution_no_prereqs_two_calls(self):
        stage2 = echo_json({"contributions": [{
            "name": "only thing", "description": "d",
            "contribution_type": [{"type": "analysis", "justification": "j"}],
            "sections": ["S1"],
        }]})
        stage3 = echo_json({"contributions": [stage3_entry("0", "only thing")]})
        backend = QueueBackend([stage2, stage3])
        pipeline, graph = make_pipeline(backend)
        record, delta = pipeline.run_paper(PaperInput("31", "t", 2020, "text"))
        assert backend.usage.calls == 2
        assert delta.nodes_added == 1 and delta.edges_added == 0
        assert record.contributions[0].id == "31.c0"

    def test_failed_stage_marks_paper_failed_and_adds_nothing(self):
        stage2 = echo_json({"contributions": [{
            "name": "only thing", "description": "d",
            "contribution_type": [{"type": "analysis", "justification": "j"}],
            "sections": ["S1"],
        }]})
        garbage = "no json here"
        backend = QueueBackend([stage2, garbage, garbage, garbage])
        pipeline, graph = make_pipeline(backend)
        with pytest.raises(StageFailure):
            pipeline.run_paper(PaperInput("31", "t", 2020, "text"))
        assert graph.papers["31"].status == "failed"
        assert len(graph.nodes) == 0
        assert graph.edges == []


class TestCorpusReplay:
    def run_corpus(self, corpus, out_dir):
        graph = ContributionGraph()
        cf.register_catalog(graph, corpus)
        pipeline = Pipeline(
            MockBackend(corpus.mock_dir), graph, PipelineConfig(),
            records_path=out_dir / "records.jsonl",
        )
        for paper in cf.paper_inputs(corpus):
            pipeline.run_paper(paper)
        graph.save(out_dir, write_records=False)
        return graph, pipeline

    def test_edges_match_hand_enumerated_oracle(self, corpus, tmp_path):
        graph, _ = self.run_corpus(corpus, tmp_path / "run")
        got = [(e.pre_id, e.dep_id, e.match_type, e.prereq_index) for e in graph.edges]
        assert got == cf.EXPECTED_EDGES

    def test_unresolved_and_counts(self, corpus, tmp_path):
        graph, _ = self.run_corpus(corpus, tmp_path / "run")
        assert sorted(u.key() for u in graph.unresolved) == cf.EXPECTED_UNRESOLVED_KEYS
        for corpus_id, count in cf.FINAL_CONTRIBUTION_COUNTS.items():
            assert len(graph.contributions_of(corpus_id)) == count
        assert graph.validate() == []

    def test_split_provenance_recorded(self, corpus, tmp_path):
        graph, _ = self.run_corpus(corpus, tmp_path / "run")
        assert graph.nodes["7000003.c1"].split_from == "1"
        assert graph.nodes["7000003.c2"].split_from == "1"
        assert graph.nodes["7000003.c0"].split_from is None

    def test_two_runs_byte_identical(self, corpus, tmp_path):
        self.run_corpus(corpus, tmp_path / "a")
        self.run_corpus(corpus, tmp_path / "b")
        for name in ("records.jsonl", "nodes.jsonl", "edges.jsonl", "papers.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes(), f"{name} differs between runs"

    def test_parallel_staging_matches_serial(self, corpus, tmp_path):
        graph = ContributionGraph()
        cf.register_catalog(graph, corpus)
        pipeline = Pipeline(
            MockBackend(corpus.mock_dir), graph, PipelineConfig(),
            records_path=tmp_path / "par" / "records.jsonl",
        )
        results = pipeline.run_batch(cf.paper_inputs(corpus), parallel=4)
        assert all(error is None for _, _, error in results)
        graph.save(tmp_path / "par", write_records=False)
        self.run_corpus(corpus, tmp_path / "ser")
        for name in ("records.jsonl", "nodes.jsonl", "edges.jsonl"):
            assert (tmp_path / "par" / name).read_bytes() == (
                tmp_path / "ser" / name
            ).read_bytes()

    def test_call_counts_match_fixture_oracle(self, corpus, tmp_path):
        graph = ContributionGraph()
        cf.register_catalog(graph, corpus)
        backend = MockBackend(corpus.mock_dir)
        pipeline = Pipeline(backend, graph, PipelineConfig())
        oracle = cf.expected_backend_calls()
        for paper in cf.paper_inputs(corpus):
            before = backend.usage.calls
            pipeline.run_paper(paper)
            assert backend.usage.calls - before == oracle[paper.corpus_id]["total"], (
                f"call count mismatch for {paper.corpus_id}"
            )

    def test_alignment_closure(self, corpus, tmp_path):
        graph, _ = self.run_corpus(corpus, tmp_path / "run")
        for record in graph.records():
            for contribution in record.contributions:
                for prereq in contribution.prerequisites:
                    for ref in prereq.references:
                        if isinstance(ref, PaperRef) and ref.matches:
                            cited_ids = {
                                c.id for c in graph.contributions_of(ref.corpus_id)
                            }
                            for match in ref.matches:
                                assert match.contribution_id in cited_ids

    def test_no_invented_references(self, corpus, tmp_path):
        # Every reference in the output records appears in the canned
        # responses (the fixture spec that generated them).
        graph, _ = self.run_corpus(corpus, tmp_path / "run")
        spec_refs: set[tuple] = set()
        for spec in cf.PAPERS:
            for entries in spec["stage3"].values():
                for entry in entries:
                    for prereq in entry["prereqs"]:
                        for ref in prereq["refs"]:
                            if ref["kind"] == "paper":
                                spec_refs.add(("paper", spec["corpus_id"], ref["paper_title"], ref["year"]))
                            elif ref["kind"] == "internal":
                                spec_refs.add(("internal", spec["corpus_id"], ref["contribution_name"]))
                            else:
                                spec_refs.add(("artifact", spec["corpus_id"], ref["url"]))
        for record in graph.records():
            for contribution in record.contributions:
                for prereq in contribution.prerequisites:
                    for ref in prereq.references:
                        if isinstance(ref, PaperRef):
                            key = ("paper", record.corpus_id, ref.title, ref.year)
                        elif isinstance(ref, InternalRef):
                            key = ("internal", record.corpus_id, ref.contribution_name)
                        else:
                            key = ("artifact", record.corpus_id, ref.url)
                        assert key in spec_refs, f"invented reference {key}"

    def test_records_file_lines_parse_and_match_store(self, corpus, tmp_path):
        graph, _ = self.run_corpus(corpus, tmp_path / "run")
        lines = list(read_jsonl(tmp_path / "run" / "records.jsonl"))
        assert [r["corpus_id"] for r in lines] == cf.EXTRACTION_ORDER
        assert [r.to_json() for r in graph.records()] == lines


def test_mock_backend_strict_unknown_hash(tmp_path):
    backend = MockBackend(tmp_path)
    with pytest.raises(BackendError, match="no canned response"):
        backend.generate("never seen prompt")


def test_mock_backend_replays_stored_response(tmp_path):
    MockBackend.store_response(tmp_path, "hello prompt", "canned!")
    backend = MockBackend(tmp_path)
    assert backend.generate("hello prompt") == "canned!"
    assert backend.usage.calls == 1


def test_duplicate_extraction_rejected(corpus):
    graph = ContributionGraph()
    cf.register_catalog(graph, corpus)
    pipeline = Pipeline(MockBackend(corpus.mock_dir), graph, PipelineConfig())
    papers = cf.paper_inputs(corpus)
    pipeline.run_paper(papers[0])
    from contribgraph.errors import DuplicatePaperError

    with pytest.raises(DuplicatePaperError):
        pipeline.run_paper(papers[0])

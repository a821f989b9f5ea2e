"""One-off generator for tests/data/golden_records.jsonl.

Builds the four-record golden fixture: three cited papers and the
twelve-contribution encoder paper whose first contribution carries the
full prerequisite structure (strong/weak cross-paper matches, internal
references, an unaligned citation). Checked in as a static fixture;
rerun only if the record schema changes.
"""
from __future__ import annotations

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "golden_records.jsonl"


def contribution(cid, name, description, types, sections, prerequisites=None, **extra):
    out = {
        "contribution_id": cid,
        "name": name,
        "description": description,
        "types": [{"type": t, "explanation": e} for t, e in types],
        "sections": sections,
    }
    out.update(extra)
    out["prerequisites"] = prerequisites or []
    return out


def paper_ref(title, year, venue, corpus_id, matches=None, first_author=None):
    out = {"type": "paper", "paper_title": title}
    if first_author:
        out["first_author"] = first_author
    out["paper_year"] = year
    out["paper_venue"] = venue
    out["corpus_id"] = corpus_id
    out["matches"] = [
        {"contribution_id": cid, "explanation": expl, "match_type": mt}
        for cid, expl, mt in (matches or [])
    ]
    return out


def internal_ref(name, cid, explanation):
    return {
        "type": "internal",
        "contribution_name": name,
        "contribution_id": cid,
        "explanation": explanation,
    }


ATTENTION = {
    "corpus_id": "13756489",
    "title": "Attention is all you need",
    "year": 2017,
    "contributions": [
        contribution(
            "13756489.c0",
            "Transformer encoder-decoder architecture",
            "A sequence transduction architecture built entirely from attention: "
            "stacked encoder and decoder blocks combine multi-head self-attention, "
            "position-wise feed-forward sub-layers, residual connections, and layer "
            "normalization, processing whole sequences in parallel without recurrence.",
            [("models_or_architectures", "Proposes a new attention-only sequence architecture.")],
            ["Section 3: Model Architecture"],
        ),
        contribution(
            "13756489.c1",
            "Scaled Dot-Product Attention",
            "An attention function computing softmax(QK^T/sqrt(d_k))V, scaling dot "
            "products by the key dimension to stabilize gradients for large dimensions.",
            [("techniques_algorithms", "Introduces the core attention computation.")],
            ["Section 3.2.1: Scaled Dot-Product Attention"],
        ),
        contribution(
            "13756489.c2",
            "Multi-Head Attention",
            "Runs several attention functions in parallel over learned linear "
            "projections of queries, keys, and values, letting the model attend to "
            "multiple representation subspaces simultaneously.",
            [("techniques_algorithms", "Parallel projection subspaces for attention.")],
            ["Section 3.2.2: Multi-Head Attention"],
        ),
        contribution(
            "13756489.c3",
            "Sinusoidal positional encodings",
            "Deterministic sine and cosine functions of position and dimension added "
            "to token embeddings so the otherwise order-free attention stack can use "
            "sequence order information.",
            [("representational", "Encodes order without recurrence or convolution.")],
            ["Section 3.5: Positional Encoding"],
        ),
    ],
}

GNMT = {
    "corpus_id": "3603249",
    "title": "Google's neural machine translation system: Bridging the gap between human and machine translation",
    "year": 2016,
    "contributions": [
        contribution(
            "3603249.c0",
            "Deep LSTM encoder-decoder with residual connections",
            "A production-scale neural machine translation model using eight encoder "
            "and decoder LSTM layers with residual connections to keep deep stacks trainable.",
            [("models_or_architectures", "Deep recurrent translation architecture.")],
            ["Section 3: Model Architecture"],
        ),
        contribution(
            "3603249.c1",
            "Decoder-to-encoder attention connection",
            "An attention module connecting the bottom decoder layer to the top "
            "encoder layer, improving translation of long sentences.",
            [("techniques_algorithms", "Attention link between decoder and encoder stacks.")],
            ["Section 3.1: Attention"],
        ),
        contribution(
            "3603249.c2",
            "Beam search with length normalization and coverage penalty",
            "A refined beam-search decoding procedure adding length normalization and "
            "a coverage penalty, reducing the bias toward short outputs.",
            [("techniques_algorithms", "Improved decoding objective for beam search.")],
            ["Section 7: Decoder"],
        ),
        contribution(
            "3603249.c3",
            "WordPiece subword segmentation model",
            "WordPiece splits words into subword units from a learned vocabulary, "
            "handling rare words without enormous vocabularies and enabling efficient "
            "embedding lookup shared across morphological variants.",
            [("representational", "Subword tokenization scheme for open vocabularies.")],
            ["Section 4.1: Wordpiece Model"],
        ),
    ],
}

ELMO = {
    "corpus_id": "3626819",
    "title": "Deep contextualized word representations",
    "year": 2018,
    "contributions": [
        contribution(
            "3626819.c0",
            "ELMo deep contextualized word representations",
            "Word vectors computed as learned task-specific combinations of the "
            "internal states of a deep bidirectional language model, so each token's "
            "representation depends on the entire input sentence.",
            [("representational", "Context-dependent word vectors from LM internals.")],
            ["Section 3: ELMo"],
        ),
        contribution(
            "3626819.c1",
            "Pretrained bidirectional LSTM language model",
            "A two-layer bidirectional LSTM language model pretrained on a large "
            "corpus, jointly modeling forward and backward likelihoods and providing "
            "the layers ELMo representations are drawn from.",
            [("models_or_architectures", "The bidirectional LM underlying the representations.")],
            ["Section 3.1: Bidirectional language models"],
        ),
    ],
}

BERT_C0_PREREQS = [
    {
        "name": "Transformer encoder (self-attention) architecture",
        "description": "The Transformer encoder introduced by Vaswani et al. (2017) uses "
        "multi-head self-attention, positional embeddings, and feed-forward sub-layers "
        "to process sequences in parallel, enabling deep contextual representations.",
        "explanation": "BERT directly builds on the Transformer encoder, replacing the "
        "unidirectional decoder with a fully bidirectional encoder.",
        "core_or_peripheral": "core",
        "references": [
            paper_ref(
                "Attention is all you need",
                2017,
                "Advances in Neural Information Processing Systems",
                "13756489",
                matches=[
                    (
                        "13756489.c0",
                        "Describes the full Transformer encoder-decoder architecture, "
                        "including multi-head self-attention, positional embeddings, and "
                        "feed-forward sub-layers that constitute the encoder BERT builds on.",
                        "strong",
                    ),
                    (
                        "13756489.c1",
                        "Introduces Scaled Dot-Product Attention, the core operation used "
                        "in the encoder's self-attention layers.",
                        "weak",
                    ),
                    (
                        "13756489.c2",
                        "Presents Multi-Head Attention, a key component that enables the "
                        "encoder to attend to multiple representation sub-spaces in parallel.",
                        "weak",
                    ),
                    (
                        "13756489.c3",
                        "Provides Sinusoidal Positional Encodings, the deterministic "
                        "positional embedding method employed by the encoder.",
                        "weak",
                    ),
                ],
            )
        ],
    },
    {
        "name": "WordPiece subword tokenization",
        "description": "WordPiece splits words into subword units based on a learned "
        "vocabulary, allowing open-vocabulary handling and efficient embedding lookup.",
        "explanation": "BERT's input representation sums token, segment, and position "
        "embeddings derived from WordPiece tokens.",
        "core_or_peripheral": "core",
        "references": [
            paper_ref(
                "Google's neural machine translation system: Bridging the gap between "
                "human and machine translation",
                2016,
                "arXiv preprint",
                "3603249",
                matches=[
                    (
                        "3603249.c3",
                        "The cited contribution introduces the WordPiece subword "
                        "segmentation model, which is the same tokenization method "
                        "required by BERT.",
                        "strong",
                    )
                ],
            )
        ],
    },
    {
        "name": "Understanding limitations of unidirectional language models",
        "description": "Prior work (e.g., OpenAI GPT, ELMo) showed that left-to-right or "
        "right-to-left language models cannot condition on both sides simultaneously, "
        "limiting performance on tasks that require full context.",
        "explanation": "Motivates the need for a bidirectional pre-training architecture, "
        "which BERT provides.",
        "core_or_peripheral": "core",
        "references": [
            paper_ref(
                "Improving language understanding with unsupervised learning",
                2018,
                "Technical report, OpenAI",
                None,
                matches=[],
            ),
            paper_ref(
                "Deep contextualized word representations",
                2018,
                "NAACL",
                "3626819",
                matches=[
                    (
                        "3626819.c0",
                        "ELMo introduces deep contextualized word representations derived "
                        "from a bidirectional LSTM language model, directly demonstrating "
                        "that a bidirectional architecture can overcome the "
                        "context-conditioning limits of unidirectional models.",
                        "strong",
                    ),
                    (
                        "3626819.c1",
                        "The paper details the design of a pretrained bidirectional LSTM "
                        "language model, providing the concrete architectural foundation "
                        "that addresses the inability of left-to-right or right-to-left "
                        "models to condition on both sides.",
                        "strong",
                    ),
                ],
            ),
        ],
    },
    {
        "name": "Masked Language Model (MLM) pre-training objective",
        "description": "MLM randomly masks a subset of tokens and trains the model to "
        "predict the original token IDs using both left and right context, enabling "
        "deep bidirectional learning.",
        "explanation": "BERT's bidirectional encoder is trained with this objective; "
        "without it the model would not learn to fuse full context.",
        "core_or_peripheral": "peripheral",
        "references": [
            internal_ref(
                "Masked Language Model (MLM) pre-training objective",
                "52967399.c1",
                "MLM provides the learning signal that makes the bidirectional "
                "Transformer effective.",
            )
        ],
    },
    {
        "name": "Next Sentence Prediction (NSP) pre-training task",
        "description": "NSP trains the model to predict whether two sentences are "
        "consecutive in the original corpus, encouraging the encoder to capture "
        "inter-sentence relationships.",
        "explanation": "NSP supplies sentence-pair level supervision that complements "
        "MLM and is used during BERT pre-training.",
        "core_or_peripheral": "peripheral",
        "references": [
            internal_ref(
                "Next Sentence Prediction (NSP) pre-training task",
                "52967399.c2",
                "NSP is part of the pre-training pipeline that shapes the "
                "representations learned by the bidirectional encoder.",
            )
        ],
    },
    {
        "name": "Large-scale unsupervised pre-training data and compute",
        "description": "BERT is trained on the BooksCorpus (~800M words) and English "
        "Wikipedia (~2.5B words) with large batch sizes on Cloud TPUs, providing the "
        "data volume and compute needed for deep models.",
        "explanation": "The depth and capacity of the bidirectional Transformer require "
        "massive data and compute to avoid over-fitting and to learn general language "
        "knowledge.",
        "core_or_peripheral": "peripheral",
        "references": [
            internal_ref(
                "Large-scale pre-training methodology (data, batch size, curriculum)",
                "52967399.c4",
                "Describes the corpus, batch size, and training schedule that enable "
                "successful training of the bidirectional encoder.",
            )
        ],
    },
    {
        "name": "Optimization techniques (Adam optimizer, learning-rate warm-up, GELU activation)",
        "description": "Training uses the Adam optimizer with weight decay, a warm-up "
        "schedule for the learning rate, and the Gaussian Error Linear Unit (GELU) "
        "nonlinearity, which improve convergence of deep Transformers.",
        "explanation": "These techniques are required to reliably train the deep "
        "bidirectional Transformer without instability.",
        "core_or_peripheral": "peripheral",
        "references": [
            paper_ref(
                "Bridging nonlinearities and stochastic regularizers with Gaussian "
                "error linear units",
                2016,
                "CoRR",
                "2359786",
                matches=[],
            )
        ],
    },
]

BERT_REST = [
    (
        "Masked Language Model (MLM) pre-training objective",
        "A pre-training objective that masks 15% of input tokens and predicts the "
        "originals from both directions of context, producing deep bidirectional "
        "representations rather than shallow concatenations of unidirectional models.",
        [("techniques_algorithms", "New self-supervised objective for bidirectional training.")],
        ["Section 3.1: Pre-training BERT"],
    ),
    (
        "Next Sentence Prediction (NSP) pre-training task",
        "A binarized sentence-pair classification objective predicting whether the "
        "second sentence follows the first in the corpus, teaching the encoder "
        "inter-sentence coherence useful for QA and inference tasks.",
        [("techniques_algorithms", "Sentence-pair objective complementing token masking.")],
        ["Section 3.1: Pre-training BERT"],
    ),
    (
        "Unified fine-tuning procedure across NLP tasks",
        "A single fine-tuning recipe that adds one task-specific output layer to the "
        "pretrained encoder and updates all parameters end to end, covering "
        "classification, tagging, and span prediction without task-specific architectures.",
        [("research_methods_procedures", "One transfer recipe serving many downstream tasks.")],
        ["Section 3.2: Fine-tuning BERT"],
    ),
    (
        "Large-scale pre-training methodology (data, batch size, curriculum)",
        "The pre-training regimen pairing BooksCorpus and English Wikipedia with large "
        "batches, long schedules, and TPU infrastructure, establishing the scale needed "
        "for deep bidirectional encoders.",
        [("research_methods_procedures", "Defines the data and compute recipe for pre-training.")],
        ["Appendix A.2: Pre-training Procedure"],
    ),
    (
        "State-of-the-art results on the GLUE benchmark",
        "Fine-tuned evaluation pushing the GLUE benchmark average to 80.5%, a 7.7 point "
        "absolute improvement over the prior best, demonstrating broad language "
        "understanding transfer from bidirectional pre-training.",
        [("empirical_evaluation", "Benchmark results for the fine-tuned encoder.")],
        ["Section 4.1: GLUE"],
    ),
    (
        "SQuAD v1.1 question answering results",
        "Span-prediction fine-tuning on SQuAD v1.1 reaching 93.2 F1, surpassing human "
        "performance and prior ensembles with a single model.",
        [("empirical_evaluation", "Reading-comprehension results with span prediction.")],
        ["Section 4.2: SQuAD v1.1"],
    ),
    (
        "SQuAD v2.0 question answering results",
        "Extension of span prediction with a no-answer option evaluated on SQuAD v2.0, "
        "reaching 83.1 F1 and improving over the prior best system by 5.1 points.",
        [("empirical_evaluation", "Handles unanswerable questions in reading comprehension.")],
        ["Section 4.3: SQuAD v2.0"],
    ),
    (
        "SWAG common-sense inference results",
        "Sentence-pair scoring on the SWAG grounded common-sense inference task, "
        "reaching 86.3% accuracy and exceeding the prior best by 27 points.",
        [("empirical_evaluation", "Common-sense inference evaluation of the encoder.")],
        ["Section 4.4: SWAG"],
    ),
    (
        "Ablation analysis of pre-training objectives",
        "Controlled comparison showing that removing NSP or replacing MLM with a "
        "left-to-right objective degrades downstream performance, isolating the "
        "contribution of each pre-training task.",
        [("analysis", "Attributes downstream gains to specific objectives.")],
        ["Section 5.1: Effect of Pre-training Tasks"],
    ),
    (
        "Analysis of the effect of model size",
        "Scaling study showing that larger encoders keep improving downstream accuracy "
        "even on small fine-tuning datasets, provided the model is sufficiently pretrained.",
        [("analysis", "Demonstrates monotone gains from encoder scale.")],
        ["Section 5.2: Effect of Model Size"],
    ),
    (
        "Feature-based application of pretrained representations",
        "Evaluation of frozen contextual embeddings extracted from the encoder as input "
        "features to a task model, showing the approach remains competitive with full "
        "fine-tuning on NER.",
        [("empirical_evaluation", "Frozen-feature usage of the pretrained encoder.")],
        ["Section 5.3: Feature-based Approach with BERT"],
    ),
]

BERT = {
    "corpus_id": "52967399",
    "title": "BERT: Pre-training of Deep Bidirectional Transformers for Language Understanding",
    "year": 2019,
    "contributions": [
        contribution(
            "52967399.c0",
            "Bidirectional Transformer encoder architecture (BERT)",
            "BERT introduces a multi-layer Transformer encoder in which every token "
            "attends to both its left and right context through fully bidirectional "
            "self-attention. The model combines WordPiece token embeddings, learned "
            "segment embeddings, positional embeddings, and special tokens ([CLS], "
            "[SEP]) to represent single sentences or sentence pairs uniformly. This "
            "architecture serves as a universal language representation that can be "
            "fine-tuned with a minimal task-specific output layer for a wide range of "
            "NLP tasks.",
            [
                (
                    "models_or_architectures",
                    "Proposes a new model architecture based on a bidirectional "
                    "Transformer encoder.",
                ),
                (
                    "representational",
                    "Defines a novel way to encode text that captures full left-right "
                    "context at every layer.",
                ),
            ],
            [
                "Section 3: BERT",
                "Section 3.1: Pre-training BERT",
                "Appendix A.4: Comparison of BERT, ELMo, and OpenAI GPT",
            ],
            prerequisites=BERT_C0_PREREQS,
        )
    ]
    + [
        contribution(f"52967399.c{i}", name, description, types, sections)
        for i, (name, description, types, sections) in enumerate(BERT_REST, start=1)
    ],
}


def main():
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", encoding="utf-8") as f:
        for record in (ATTENTION, GNMT, ELMO, BERT):
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()

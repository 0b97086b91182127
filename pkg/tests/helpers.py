"""Shared fixtures-in-code: random corpus generators and independent oracles.

Everything here is deliberately written from first principles (plain loops,
no reuse of the library's internals beyond its public data types) so tests
check the implementation against an independent derivation.
"""

from __future__ import annotations

import random

import numpy as np

from nerbench.corpus import Document, EntitySpan, Token, tokenize
from nerbench.metrics import DocPrediction, PredictionSet
from nerbench.corpus import TagMatrix

WORD_CHARS = "abcdefghijklmnopqrstuvwxyzABCDE0123456789"
PUNCT_CHARS = ".,;:+-/()"

# per-label document counts of the 1000-note reference corpus
REFERENCE_COUNTS = {
    "Procedures": 984,
    "Disorders": 979,
    "Concepts & Ideas": 887,
    "Living Beings": 715,
    "Anatomy": 705,
    "Chemicals & Drugs": 601,
    "Physiology": 566,
    "Phenomena": 492,
    "Devices": 416,
    "Organizations": 348,
    "Objects": 122,
    "Activities & Behaviors": 36,
}


def random_text(rng: random.Random, min_pieces: int = 3, max_pieces: int = 40) -> str:
    pieces = []
    for _ in range(rng.randint(min_pieces, max_pieces)):
        if rng.random() < 0.2:
            pieces.append(rng.choice(PUNCT_CHARS))
        else:
            pieces.append("".join(rng.choice(WORD_CHARS) for _ in range(rng.randint(1, 8))))
    text = pieces[0]
    for piece in pieces[1:]:
        text += " " * rng.randint(0, 2) + piece
    return text


def pick_token_runs(
    rng: random.Random, n_tokens: int, max_runs: int, min_gap: int
) -> list[tuple[int, int]]:
    """Disjoint (first, last) token-index runs separated by at least min_gap tokens."""
    runs = []
    pos = 0
    for _ in range(rng.randint(0, max_runs)):
        if pos >= n_tokens:
            break
        first = rng.randint(pos, min(n_tokens - 1, pos + 4))
        last = min(first + rng.randint(0, 2), n_tokens - 1)
        runs.append((first, last))
        pos = last + 1 + min_gap
    return runs


def random_codec_document(
    rng: random.Random, labels: tuple[str, ...], doc_id: str, min_gap: int
) -> tuple[Document, list[Token]]:
    """Document whose same-label spans sit on disjoint token runs.

    min_gap=1 keeps at least one unlabeled token between same-label spans
    (the IO contract); min_gap=0 additionally produces adjacent same-label
    entities (the BIO contract). Span boundaries are jittered inside their
    first/last tokens so snapping to token boundaries is non-trivial.
    """
    text = random_text(rng)
    tokens = tokenize(text)
    entities = []
    if tokens:
        for label in labels:
            for first, last in pick_token_runs(rng, len(tokens), 3, min_gap):
                start = rng.randint(tokens[first].start, tokens[first].end - 1)
                end = rng.randint(max(tokens[last].start + 1, start + 1), tokens[last].end)
                entities.append(EntitySpan(start, end, label))
    return Document(doc_id, text, entities), tokens


def snapped_spans(doc: Document, tokens: list[Token]) -> set[tuple[int, int, str]]:
    """Token-boundary-snapped gold spans, derived by brute-force char overlap."""
    out = set()
    for span in doc.entities:
        hit = [t for t in tokens if t.start < span.end and span.start < t.end]
        if hit:
            out.add((hit[0].start, hit[-1].end, span.label))
    return out


def oracle_confusion(
    gold: list[TagMatrix], pred: PredictionSet, threshold: float
) -> dict[str, tuple[int, int, int]]:
    """Cell-by-cell TP/FP/FN counting with plain Python loops."""
    gold_by_id = {m.doc_id: m for m in gold}
    counts = {ch: [0, 0, 0] for ch in pred.channels}
    for doc in pred.docs:
        rows = gold_by_id[doc.doc_id].rows
        for r in range(rows.shape[0]):
            for c, ch in enumerate(pred.channels):
                is_gold = bool(rows[r][c])
                is_pred = float(doc.probs[r][c]) >= threshold
                if is_pred and is_gold:
                    counts[ch][0] += 1
                elif is_pred and not is_gold:
                    counts[ch][1] += 1
                elif not is_pred and is_gold:
                    counts[ch][2] += 1
    return {ch: tuple(v) for ch, v in counts.items()}


def oracle_prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def oracle_micro_f1(gold: list[TagMatrix], pred: PredictionSet, threshold: float) -> float:
    counts = oracle_confusion(gold, pred, threshold)
    tp = sum(v[0] for v in counts.values())
    fp = sum(v[1] for v in counts.values())
    fn = sum(v[2] for v in counts.values())
    return oracle_prf(tp, fp, fn)[2]


def random_instance(
    rng: random.Random,
    max_docs: int = 5,
    max_tokens: int = 10,
    max_channels: int = 4,
    scheme: str = "io",
) -> tuple[list[TagMatrix], PredictionSet]:
    """Random aligned gold/prediction pair for oracle-equivalence checks."""
    n_channels = rng.randint(1, max_channels)
    channels = tuple(f"L{i}" for i in range(n_channels))
    gold, docs = [], []
    for d in range(rng.randint(1, max_docs)):
        n_tokens = rng.randint(0, max_tokens)
        tokens = tuple(Token(2 * i, 2 * i + 1) for i in range(n_tokens))
        rows = np.array(
            [[rng.random() < 0.3 for _ in channels] for _ in range(n_tokens)], dtype=np.int8
        ).reshape(n_tokens, n_channels)
        if rng.random() < 0.5:
            probs = np.array([[rng.random() for _ in channels] for _ in range(n_tokens)])
        else:
            grid = [0.0, 0.25, 0.5, 0.75, 1.0]
            probs = np.array([[rng.choice(grid) for _ in channels] for _ in range(n_tokens)])
        probs = probs.reshape(n_tokens, n_channels)
        gold.append(TagMatrix(f"d{d}", scheme, channels, tokens, rows))
        docs.append(DocPrediction(f"d{d}", tokens, probs))
    return gold, PredictionSet(scheme, channels, docs)


def label_only_document(doc_id: str, labels: set[str]) -> Document:
    """Minimal document carrying exactly the given label set."""
    return Document(doc_id, "x", [EntitySpan(0, 1, lab) for lab in sorted(labels)])


def synthetic_imbalanced_corpus(
    rng: random.Random, n_docs: int, frequencies: dict[str, float]
) -> list[Document]:
    """Corpus where each label occurs in round(f * n) documents, overlaps allowed."""
    membership: dict[int, set[str]] = {i: set() for i in range(n_docs)}
    for label, freq in frequencies.items():
        count = round(freq * n_docs)
        for i in rng.sample(range(n_docs), count):
            membership[i].add(label)
    return [label_only_document(f"doc{i:03d}", labs) for i, labs in membership.items()]

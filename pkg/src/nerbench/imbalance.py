"""Class-imbalance remedies: per-class loss weights and mean-frequency oversampling."""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .corpus import Document, LabelVocabulary


class ImbalanceError(ValueError):
    """Weight or oversampling computation is undefined for the given corpus."""


@dataclass
class LabelStats:
    """Per-label document counts over a corpus subset."""

    containing: dict[str, int]  # label -> number of documents with >=1 span of it
    total: int

    def not_containing(self, label: str) -> int:
        return self.total - self.containing[label]


@dataclass
class ClassWeights:
    """Loss weight per label: documents without the label over documents with it."""

    weights: dict[str, Fraction]
    clamped: bool

    def to_dict(self) -> dict:
        return {
            "clamped": self.clamped,
            "weights": {lab: float(w) for lab, w in self.weights.items()},
        }


@dataclass
class OversamplePlan:
    """Replication count per training document, targeting the mean label frequency."""

    entries: list[tuple[str, int]]  # (doc id, count >= 1) in input order
    target: Fraction
    cap: float
    seed: int
    final_counts: dict[str, int]

    @property
    def size(self) -> int:
        return sum(count for _, count in self.entries)

    def to_dict(self) -> dict:
        return {
            "target": float(self.target),
            "cap": self.cap,
            "seed": self.seed,
            "plan": [{"id": doc_id, "count": count} for doc_id, count in self.entries],
            "final_counts": dict(self.final_counts),
        }


def label_stats(docs: list[Document], vocab: LabelVocabulary) -> LabelStats:
    """Count, for every vocabulary label, the documents containing it."""
    containing = {lab: 0 for lab in vocab.labels}
    for doc in docs:
        for lab in doc.label_set():
            if lab in containing:
                containing[lab] += 1
    return LabelStats(containing, len(docs))


def class_weights(stats: LabelStats, clamp: bool = False) -> ClassWeights:
    """Exact rational weights; clamping fixes the floor at 1.0.

    Raises ImbalanceError for any label present in zero documents, since its
    weight would be infinite.
    """
    weights: dict[str, Fraction] = {}
    for lab, n_c in stats.containing.items():
        if n_c == 0:
            raise ImbalanceError(f"label '{lab}' occurs in no documents; weight undefined")
        w = Fraction(stats.total - n_c, n_c)
        if clamp and w < 1:
            w = Fraction(1)
        weights[lab] = w
    return ClassWeights(weights, clamp)


def oversample(
    docs: list[Document], vocab: LabelVocabulary, seed: int, cap: float = 3.0
) -> OversamplePlan:
    """Replicate documents of under-represented labels up to the initial mean count.

    The target is fixed before any replication. Each step replicates, for the
    currently rarest label (ties: vocabulary order), its least-replicated
    document (ties: seeded uniform choice); replication raises the counts of
    every label that document carries. The cap multiplier bounds the plan size
    and guarantees termination.
    """
    if not docs:
        raise ImbalanceError("no documents to oversample")
    stats = label_stats(docs, vocab)
    active = [lab for lab in vocab.labels if stats.containing[lab] > 0]
    reps = {d.id: 1 for d in docs}
    doc_labels = {d.id: d.label_set() for d in docs}

    if not active:
        return OversamplePlan([(d.id, 1) for d in docs], Fraction(0), cap, seed, {})

    rng = random.Random(seed)
    target = Fraction(sum(stats.containing[lab] for lab in active), len(active))
    counts = {lab: stats.containing[lab] for lab in active}
    members = {lab: [d.id for d in docs if lab in doc_labels[d.id]] for lab in active}
    total = len(docs)
    max_total = cap * len(docs)

    while total < max_total:
        below = [lab for lab in active if counts[lab] < target]
        if not below:
            break
        lab = min(below, key=lambda l: (counts[l], vocab.index(l)))
        fewest = min(reps[i] for i in members[lab])
        tied = [i for i in members[lab] if reps[i] == fewest]
        doc_id = tied[0] if len(tied) == 1 else rng.choice(tied)
        reps[doc_id] += 1
        total += 1
        for other in doc_labels[doc_id]:
            if other in counts:
                counts[other] += 1

    entries = [(d.id, reps[d.id]) for d in docs]
    return OversamplePlan(entries, target, cap, seed, counts)

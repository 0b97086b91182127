"""Train/validation/test splitting: seeded random slicing and first-order iterative stratification."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import Document

RANDOM = "random"
ITERATIVE = "iterative"
METHODS = (RANDOM, ITERATIVE)

DEFAULT_RATIOS = (0.6, 0.2, 0.2)


class SplitError(ValueError):
    """A split request or assignment violates its contract."""


@dataclass(frozen=True)
class SplitSpec:
    """How to partition a corpus: subset ratios, method, and seed."""

    ratios: tuple[float, ...] = DEFAULT_RATIOS
    method: str = ITERATIVE
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise SplitError(f"unknown split method '{self.method}' (expected one of {METHODS})")
        if len(self.ratios) < 2:
            raise SplitError("need at least two subsets")
        if any(r <= 0 for r in self.ratios):
            raise SplitError(f"ratios must be positive, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise SplitError(f"ratios must sum to 1, got {sum(self.ratios)}")

    @property
    def subset_names(self) -> tuple[str, ...]:
        k = len(self.ratios)
        if k == 2:
            return ("train", "test")
        if k == 3:
            return ("train", "validation", "test")
        return tuple(f"subset{i}" for i in range(k))


@dataclass
class SplitAssignment:
    """Disjoint document-id subsets whose union is the input corpus."""

    subsets: dict[str, list[str]]
    spec: SplitSpec

    def subset_of(self, doc_id: str) -> str:
        for name, ids in self.subsets.items():
            if doc_id in ids:
                return name
        raise SplitError(f"document '{doc_id}' is not in any subset")

    def to_dict(self) -> dict:
        return {
            "method": self.spec.method,
            "seed": self.spec.seed,
            "ratios": list(self.spec.ratios),
            "subsets": {name: list(ids) for name, ids in self.subsets.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> SplitAssignment:
        spec = SplitSpec(tuple(data["ratios"]), data["method"], data["seed"])
        subsets = {name: list(ids) for name, ids in data["subsets"].items()}
        return cls(subsets, spec)

    def validate(self, docs: list[Document]) -> None:
        ids = [d.id for d in docs]
        assigned: list[str] = []
        for subset_ids in self.subsets.values():
            assigned.extend(subset_ids)
        if len(assigned) != len(set(assigned)):
            raise SplitError("subsets are not disjoint")
        if set(assigned) != set(ids):
            missing = set(ids) - set(assigned)
            extra = set(assigned) - set(ids)
            raise SplitError(f"assignment does not cover corpus (missing {missing}, extra {extra})")


@dataclass
class SplitQualityReport:
    """Per-label subset counts and deviations from the target ratios."""

    counts: dict[str, dict[str, int]]  # label -> subset -> doc count
    deviations: dict[str, dict[str, float]]  # label -> subset -> |actual - target|
    max_deviation: float
    mean_deviation: float

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "deviations": self.deviations,
            "max_deviation": self.max_deviation,
            "mean_deviation": self.mean_deviation,
        }


def _subset_sizes(n: int, ratios: tuple[float, ...]) -> list[int]:
    """Floor allocation; leftover documents go to the earliest subsets."""
    # epsilon absorbs float dust so e.g. 5 * 0.6 floors to 3, never 2
    sizes = [int(n * r + 1e-9) for r in ratios]
    for i in range(n - sum(sizes)):
        sizes[i] += 1
    return sizes


def split_random(docs: list[Document], spec: SplitSpec) -> SplitAssignment:
    """Seeded shuffle followed by contiguous slicing at the ratio boundaries."""
    if len(docs) < len(spec.ratios):
        raise SplitError(f"{len(docs)} documents cannot fill {len(spec.ratios)} subsets")
    ids = [d.id for d in docs]
    rng = random.Random(spec.seed)
    rng.shuffle(ids)
    sizes = _subset_sizes(len(ids), spec.ratios)
    subsets: dict[str, list[str]] = {}
    pos = 0
    for name, size in zip(spec.subset_names, sizes):
        subsets[name] = ids[pos : pos + size]
        pos += size
    return SplitAssignment(subsets, spec)


def split_iterative(docs: list[Document], spec: SplitSpec) -> SplitAssignment:
    """First-order iterative stratification.

    Repeatedly takes the label with the fewest unassigned documents and deals
    those documents to the subset with the greatest remaining demand for that
    label (ties: greatest total remaining demand, then seeded uniform choice).
    Unlabeled documents are dealt at the end by total demand alone.
    """
    if len(docs) < len(spec.ratios):
        raise SplitError(f"{len(docs)} documents cannot fill {len(spec.ratios)} subsets")
    rng = random.Random(spec.seed)
    k = len(spec.ratios)
    doc_labels = {d.id: d.label_set() for d in docs}
    order = {d.id: i for i, d in enumerate(docs)}

    label_members: dict[str, list[str]] = {}
    for d in docs:
        for lab in sorted(d.label_set()):
            label_members.setdefault(lab, []).append(d.id)

    total_demand = [r * len(docs) for r in spec.ratios]
    label_demand = {lab: [r * len(ids) for r in spec.ratios] for lab, ids in label_members.items()}

    assigned: dict[str, int] = {}

    def pick_subset(demands: list[float]) -> int:
        best = max(demands)
        tied = [j for j in range(k) if demands[j] == best]
        if len(tied) > 1:
            best_total = max(total_demand[j] for j in tied)
            tied = [j for j in tied if total_demand[j] == best_total]
        return tied[0] if len(tied) == 1 else rng.choice(tied)

    def assign(doc_id: str, j: int) -> None:
        assigned[doc_id] = j
        total_demand[j] -= 1
        for lab in doc_labels[doc_id]:
            label_demand[lab][j] -= 1

    while True:
        remaining = {
            lab: [i for i in ids if i not in assigned] for lab, ids in label_members.items()
        }
        remaining = {lab: ids for lab, ids in remaining.items() if ids}
        if not remaining:
            break
        # Rarest label first; name order makes label ties deterministic.
        lab = min(remaining, key=lambda l: (len(remaining[l]), l))
        for doc_id in remaining[lab]:
            assign(doc_id, pick_subset(label_demand[lab]))

    for d in docs:
        if d.id not in assigned:
            assign(d.id, pick_subset(total_demand))

    subsets: dict[str, list[str]] = {name: [] for name in spec.subset_names}
    for doc_id in sorted(assigned, key=order.__getitem__):
        subsets[spec.subset_names[assigned[doc_id]]].append(doc_id)
    return SplitAssignment(subsets, spec)


def split(docs: list[Document], spec: SplitSpec) -> SplitAssignment:
    """Dispatch on spec.method."""
    if spec.method == RANDOM:
        return split_random(docs, spec)
    return split_iterative(docs, spec)


def split_quality(
    docs: list[Document], assignment: SplitAssignment, spec: SplitSpec
) -> SplitQualityReport:
    """Quantify how far each label's subset shares drift from the target ratios.

    Labels occurring in zero documents are omitted (no denominator).
    """
    assignment.validate(docs)
    subset_by_id = {
        doc_id: name for name, ids in assignment.subsets.items() for doc_id in ids
    }
    label_totals: dict[str, int] = {}
    counts: dict[str, dict[str, int]] = {}
    for d in docs:
        for lab in d.label_set():
            label_totals[lab] = label_totals.get(lab, 0) + 1
            per = counts.setdefault(lab, {name: 0 for name in spec.subset_names})
            per[subset_by_id[d.id]] += 1

    deviations: dict[str, dict[str, float]] = {}
    all_devs: list[float] = []
    for lab in sorted(counts):
        per = {}
        for name, ratio in zip(spec.subset_names, spec.ratios):
            dev = abs(counts[lab][name] / label_totals[lab] - ratio)
            per[name] = dev
            all_devs.append(dev)
        deviations[lab] = per

    max_dev = max(all_devs) if all_devs else 0.0
    mean_dev = sum(all_devs) / len(all_devs) if all_devs else 0.0
    return SplitQualityReport(
        {lab: counts[lab] for lab in sorted(counts)}, deviations, max_dev, mean_dev
    )

"""Token-channel multilabel evaluation: confusion counts, micro/macro scores, threshold sweep, PR curves."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import TagMatrix, Token

log = logging.getLogger(__name__)

GRID = np.arange(1001) / 1000.0  # 0.000, 0.001, ..., 1.000
MAX_OBSERVED_CANDIDATES = 10_000


class EvaluationError(ValueError):
    """Gold and predictions cannot be compared as given."""


@dataclass
class DocPrediction:
    """Per-document probability matrix aligned to the reference tokens."""

    doc_id: str
    tokens: tuple[Token, ...]
    probs: np.ndarray  # shape (len(tokens), n_channels), values in [0, 1]


@dataclass
class PredictionSet:
    """Model output for a corpus subset: one probability matrix per document."""

    scheme: str
    channels: tuple[str, ...]
    docs: list[DocPrediction]

    def validate(self) -> None:
        for doc in self.docs:
            doc.probs = np.asarray(doc.probs, dtype=np.float64)
            if doc.probs.shape != (len(doc.tokens), len(self.channels)):
                raise EvaluationError(
                    f"document '{doc.doc_id}': probability matrix shape {doc.probs.shape} "
                    f"does not match {len(doc.tokens)} tokens x {len(self.channels)} channels"
                )
            if doc.probs.size and (doc.probs.min() < 0.0 or doc.probs.max() > 1.0):
                raise EvaluationError(
                    f"document '{doc.doc_id}': probabilities outside [0, 1]"
                )


@dataclass
class ConfusionCounts:
    """Per-channel TP/FP/FN totals at one threshold; TN is never needed."""

    channels: tuple[str, ...]
    threshold: float
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray


@dataclass
class LabelScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass
class MetricsReport:
    """Per-label and aggregated precision/recall/F1 at one threshold."""

    threshold: float
    per_label: dict[str, LabelScore]
    micro: tuple[float, float, float]  # precision, recall, f1
    macro: tuple[float, float, float]
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "degenerate": self.degenerate,
            "per_label": {
                lab: {
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                }
                for lab, s in self.per_label.items()
            },
            "micro": {"precision": self.micro[0], "recall": self.micro[1], "f1": self.micro[2]},
            "macro": {"precision": self.macro[0], "recall": self.macro[1], "f1": self.macro[2]},
        }


@dataclass
class PRCurve:
    """Per-label precision/recall trade-off over increasing thresholds."""

    label: str
    points: list[tuple[float, float, float]]  # (threshold, precision, recall)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "precision", "recall"])
            for t, p, r in self.points:
                writer.writerow([f"{t:.6g}", f"{p:.6g}", f"{r:.6g}"])


def _pair_documents(
    gold: list[TagMatrix], pred: PredictionSet
) -> list[tuple[TagMatrix, DocPrediction]]:
    pred.validate()
    gold_by_id = {m.doc_id: m for m in gold}
    if len(gold_by_id) != len(gold):
        raise EvaluationError("duplicate document ids in gold set")
    pred_ids = [d.doc_id for d in pred.docs]
    missing = set(pred_ids) - set(gold_by_id)
    if missing:
        raise EvaluationError(f"documents without gold annotations: {sorted(missing)}")
    extra = set(gold_by_id) - set(pred_ids)
    if extra:
        raise EvaluationError(f"gold documents without predictions: {sorted(extra)}")

    pairs = []
    for doc in pred.docs:
        g = gold_by_id[doc.doc_id]
        if tuple(g.channels) != tuple(pred.channels):
            raise EvaluationError(
                f"document '{doc.doc_id}': gold channels {list(g.channels)} differ from "
                f"prediction channels {list(pred.channels)}"
            )
        if tuple(g.tokens) != tuple(doc.tokens):
            raise EvaluationError(
                f"document '{doc.doc_id}': gold and prediction tokenizations differ"
            )
        pairs.append((g, doc))
    return pairs


def _stacked(gold: list[TagMatrix], pred: PredictionSet) -> tuple[np.ndarray, np.ndarray]:
    """All documents' cells stacked into (total_tokens, n_channels) gold/prob arrays."""
    pairs = _pair_documents(gold, pred)
    n_ch = len(pred.channels)
    if not pairs:
        return np.zeros((0, n_ch), dtype=bool), np.zeros((0, n_ch))
    g = np.vstack([p[0].rows.astype(bool) for p in pairs])
    p = np.vstack([p[1].probs for p in pairs])
    return g, p


def confusion(gold: list[TagMatrix], pred: PredictionSet, threshold: float) -> ConfusionCounts:
    """Count per-channel TP/FP/FN with a cell predicted positive iff prob >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise EvaluationError(f"threshold {threshold} outside [0, 1]")
    g, p = _stacked(gold, pred)
    pos = p >= threshold
    tp = (pos & g).sum(axis=0)
    fp = (pos & ~g).sum(axis=0)
    fn = (~pos & g).sum(axis=0)
    return ConfusionCounts(tuple(pred.channels), threshold, tp, fp, fn)


def _prf(tp: float, fp: float, fn: float) -> tuple[float, float, float]:
    """Precision/recall/F1 with the 0/0 -> 0 convention."""
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def score(counts: ConfusionCounts) -> MetricsReport:
    """Per-label scores plus micro (summed counts) and macro (unweighted mean) averages."""
    per_label: dict[str, LabelScore] = {}
    macros = []
    for ci, ch in enumerate(counts.channels):
        tp, fp, fn = int(counts.tp[ci]), int(counts.fp[ci]), int(counts.fn[ci])
        p, r, f1 = _prf(tp, fp, fn)
        per_label[ch] = LabelScore(tp, fp, fn, p, r, f1)
        macros.append((p, r, f1))
    micro = _prf(int(counts.tp.sum()), int(counts.fp.sum()), int(counts.fn.sum()))
    n = len(counts.channels)
    macro = tuple(sum(m[i] for m in macros) / n for i in range(3)) if n else (0.0, 0.0, 0.0)
    return MetricsReport(counts.threshold, per_label, micro, macro)


def _candidates(probs: np.ndarray) -> np.ndarray:
    """Threshold grid plus the observed probabilities when there are few enough."""
    uniq = np.unique(probs) if probs.size else np.empty(0)
    if uniq.size > MAX_OBSERVED_CANDIDATES:
        uniq = np.empty(0)
    return np.union1d(GRID, uniq)


def _counts_by_threshold(
    values: np.ndarray, gold: np.ndarray, cands: np.ndarray
) -> tuple[np.ndarray, np.ndarray, int]:
    """TP and FP counts at every candidate threshold via sorted search."""
    pos = np.sort(values[gold])
    neg = np.sort(values[~gold])
    tp = pos.size - np.searchsorted(pos, cands, side="left")
    fp = neg.size - np.searchsorted(neg, cands, side="left")
    return tp, fp, pos.size


def sweep_threshold(gold: list[TagMatrix], pred: PredictionSet) -> tuple[float, MetricsReport]:
    """Choose the shared threshold maximizing micro F1; ties go to the lowest threshold."""
    if not pred.docs:
        raise EvaluationError("empty prediction set")
    g, p = _stacked(gold, pred)
    cands = _candidates(p)
    tp, fp, n_pos = _counts_by_threshold(p.ravel(), g.ravel(), cands)
    fn = n_pos - tp
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = np.where(2 * tp + fp + fn > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    best = int(np.argmax(f1))  # first max, so ties resolve to the lowest threshold
    best_t = float(cands[best])
    report = score(confusion(gold, pred, best_t))
    report.degenerate = bool(p.size == 0 or best_t <= float(p.min()))
    return best_t, report


def pr_curve(gold: list[TagMatrix], pred: PredictionSet, label: str) -> PRCurve:
    """Precision/recall of one channel at every candidate threshold."""
    if label not in pred.channels:
        raise EvaluationError(f"unknown label '{label}'")
    ci = pred.channels.index(label)
    g, p = _stacked(gold, pred)
    col_g, col_p = g[:, ci], p[:, ci]
    if not col_g.any():
        log.warning("label '%s' has zero gold positives; recall is 0 everywhere", label)
    cands = _candidates(col_p)
    tp, fp, n_pos = _counts_by_threshold(col_p, col_g, cands)
    points = []
    for i, t in enumerate(cands):
        precision = tp[i] / (tp[i] + fp[i]) if tp[i] + fp[i] > 0 else 0.0
        recall = tp[i] / n_pos if n_pos > 0 else 0.0
        points.append((float(t), float(precision), float(recall)))
    return PRCurve(label, points)


def write_predictions(pred: PredictionSet, path: str | Path, meta: dict | None = None) -> None:
    """Export predictions as JSONL; an optional leading _meta line carries provenance."""
    pred.validate()
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}, ensure_ascii=False) + "\n")
        for doc in pred.docs:
            obj = {
                "id": doc.doc_id,
                "tokens": [[t.start, t.end] for t in doc.tokens],
                "channels": list(pred.channels),
                "probs": doc.probs.tolist(),
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_predictions(path: str | Path, scheme: str) -> tuple[PredictionSet, dict | None]:
    """Read a prediction JSONL file; returns (PredictionSet, meta-or-None)."""
    docs: list[DocPrediction] = []
    channels: tuple[str, ...] | None = None
    meta: dict | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvaluationError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from None
            if "_meta" in obj:
                meta = obj["_meta"]
                continue
            line_channels = tuple(obj["channels"])
            if channels is None:
                channels = line_channels
            elif channels != line_channels:
                raise EvaluationError(
                    f"{path}: line {lineno}: channel list differs from earlier lines"
                )
            tokens = tuple(Token(s, e) for s, e in obj["tokens"])
            docs.append(DocPrediction(obj["id"], tokens, np.array(obj["probs"], dtype=np.float64)))
    if channels is None:
        raise EvaluationError(f"{path}: no prediction rows found")
    pred = PredictionSet(scheme, channels, docs)
    pred.validate()
    return pred, meta

"""Corpus data model: standoff documents, offset-exact tokenizer, IO/BIO tag codecs."""

from __future__ import annotations

import hashlib
import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IO = "io"
BIO = "bio"
SCHEMES = (IO, BIO)


class CorpusError(ValueError):
    """A corpus file or document violates the data contract."""


@dataclass(frozen=True)
class EntitySpan:
    """Character-offset entity annotation; start inclusive, end exclusive."""

    start: int
    end: int
    label: str

    def __post_init__(self) -> None:
        if not isinstance(self.start, int) or not isinstance(self.end, int):
            raise CorpusError(f"span offsets must be integers, got ({self.start!r}, {self.end!r})")
        if self.start < 0:
            raise CorpusError(f"span start {self.start} is negative")
        if self.start >= self.end:
            raise CorpusError(f"span start >= end ({self.start} >= {self.end})")
        if not self.label:
            raise CorpusError("span label is empty")

    def overlaps(self, other: EntitySpan) -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class Token:
    """Half-open character range of a single token."""

    start: int
    end: int


@dataclass(frozen=True)
class LabelVocabulary:
    """Ordered set of entity labels; order defines channel indices."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.labels:
            raise CorpusError("vocabulary is empty")
        if len(set(self.labels)) != len(self.labels):
            raise CorpusError("vocabulary labels are not unique")
        if any(not lab for lab in self.labels):
            raise CorpusError("vocabulary contains an empty label")

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise CorpusError(f"unknown label '{label}'") from None

    def channels(self, scheme: str) -> list[str]:
        """Channel names: the labels themselves (IO) or B-/I- pairs (BIO)."""
        _check_scheme(scheme)
        if scheme == IO:
            return list(self.labels)
        out = []
        for lab in self.labels:
            out.append(f"B-{lab}")
            out.append(f"I-{lab}")
        return out

    def channel_count(self, scheme: str) -> int:
        return len(self.labels) * (2 if scheme == BIO else 1)

    @property
    def digest(self) -> str:
        """Short content hash used to detect artifact/vocabulary mixups."""
        canon = json.dumps(list(self.labels), ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]

    @classmethod
    def from_file(cls, path: str | Path) -> LabelVocabulary:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
            raise CorpusError(f"{path}: vocabulary file must be a JSON array of strings")
        return cls(tuple(data))

    def to_file(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(list(self.labels), fh, ensure_ascii=False, indent=0)
            fh.write("\n")


@dataclass
class Document:
    """One clinical note with its standoff entity annotations."""

    id: str
    text: str
    entities: list[EntitySpan] = field(default_factory=list)

    def label_set(self) -> set[str]:
        return {span.label for span in self.entities}

    def validate(self, vocab: LabelVocabulary | None = None) -> None:
        """Check span bounds, label membership, and same-label non-overlap."""
        if not self.id:
            raise CorpusError("document id is empty")
        for span in self.entities:
            if span.end > len(self.text):
                raise CorpusError(
                    f"document '{self.id}': span ({span.start},{span.end}) outside "
                    f"text of length {len(self.text)}"
                )
            if vocab is not None and span.label not in vocab:
                raise CorpusError(f"document '{self.id}': unknown label '{span.label}'")
        by_label: dict[str, list[EntitySpan]] = {}
        for span in self.entities:
            by_label.setdefault(span.label, []).append(span)
        for label, spans in by_label.items():
            spans = sorted(spans, key=lambda s: (s.start, s.end))
            for prev, cur in zip(spans, spans[1:]):
                if prev.end > cur.start:
                    raise CorpusError(
                        f"document '{self.id}': overlapping '{label}' spans "
                        f"({prev.start},{prev.end}) and ({cur.start},{cur.end})"
                    )


@dataclass
class TagMatrix:
    """Token x channel binary matrix for one document under one scheme."""

    doc_id: str
    scheme: str
    channels: tuple[str, ...]
    tokens: tuple[Token, ...]
    rows: np.ndarray  # shape (len(tokens), len(channels)), dtype int8

    def __post_init__(self) -> None:
        _check_scheme(self.scheme)
        self.rows = np.asarray(self.rows, dtype=np.int8)
        if self.rows.shape != (len(self.tokens), len(self.channels)):
            raise CorpusError(
                f"document '{self.doc_id}': matrix shape {self.rows.shape} does not match "
                f"{len(self.tokens)} tokens x {len(self.channels)} channels"
            )


def _check_scheme(scheme: str) -> None:
    if scheme not in SCHEMES:
        raise CorpusError(f"unknown scheme '{scheme}' (expected one of {SCHEMES})")


def tokenize(text: str) -> list[Token]:
    """Split text into maximal letter/digit runs plus single punctuation characters.

    Whitespace separates tokens and is never part of one. Offsets index the
    original string, so text[t.start:t.end] recovers each token exactly.
    """
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch.isalnum():
            j = i + 1
            while j < n and text[j].isalnum():
                j += 1
            tokens.append(Token(i, j))
            i = j
        else:
            tokens.append(Token(i, i + 1))
            i += 1
    return tokens


def overlapping_tokens(tokens: list[Token], start: int, end: int) -> range:
    """Indices of tokens overlapping [start, end); tokens must be sorted and disjoint."""
    ends = [t.end for t in tokens]
    starts = [t.start for t in tokens]
    lo = bisect_right(ends, start)
    hi = bisect_left(starts, end)
    return range(lo, hi)


def project_spans(doc: Document, tokens: list[Token]) -> list[set[str]]:
    """Per-token label sets under the any-overlap rule; multilabel by design."""
    labels: list[set[str]] = [set() for _ in tokens]
    for span in doc.entities:
        for ti in overlapping_tokens(tokens, span.start, span.end):
            labels[ti].add(span.label)
    return labels


def encode(doc: Document, tokens: list[Token], vocab: LabelVocabulary, scheme: str) -> TagMatrix:
    """Encode a document's spans as an IO or BIO tag matrix over the given tokens."""
    _check_scheme(scheme)
    channels = tuple(vocab.channels(scheme))
    rows = np.zeros((len(tokens), len(channels)), dtype=np.int8)
    if scheme == IO:
        for ti, labs in enumerate(project_spans(doc, tokens)):
            for lab in labs:
                rows[ti, vocab.index(lab)] = 1
    else:
        # Canonical span order so the B/I conflict rule below is deterministic.
        for span in sorted(doc.entities, key=lambda s: (s.start, s.end, s.label)):
            b_ch = 2 * vocab.index(span.label)
            i_ch = b_ch + 1
            hit = list(overlapping_tokens(tokens, span.start, span.end))
            for k, ti in enumerate(hit):
                if k == 0:
                    # B dominates: a span boundary overrides a continuation
                    # left on this token by an earlier same-label span.
                    rows[ti, b_ch] = 1
                    rows[ti, i_ch] = 0
                elif not rows[ti, b_ch]:
                    rows[ti, i_ch] = 1
    return TagMatrix(doc.id, scheme, channels, tuple(tokens), rows)


def decode(matrix: TagMatrix, tokens: list[Token] | None = None) -> list[EntitySpan]:
    """Recover entity spans from a tag matrix.

    IO: each maximal run of set cells per channel becomes one span, so adjacent
    same-label entities merge. BIO: B opens a span, I extends it, and an I with
    no open span opens one (orphan repair); per-label decoding is independent.
    """
    toks = list(tokens) if tokens is not None else list(matrix.tokens)
    if len(toks) != matrix.rows.shape[0]:
        raise CorpusError(
            f"document '{matrix.doc_id}': {len(toks)} tokens vs {matrix.rows.shape[0]} matrix rows"
        )
    spans: list[EntitySpan] = []
    if matrix.scheme == IO:
        for ci, label in enumerate(matrix.channels):
            col = matrix.rows[:, ci]
            run_start: int | None = None
            for ti in range(len(toks) + 1):
                on = ti < len(toks) and col[ti]
                if on and run_start is None:
                    run_start = ti
                elif not on and run_start is not None:
                    spans.append(EntitySpan(toks[run_start].start, toks[ti - 1].end, label))
                    run_start = None
    else:
        for pair in range(len(matrix.channels) // 2):
            label = matrix.channels[2 * pair][2:]
            b_col = matrix.rows[:, 2 * pair]
            i_col = matrix.rows[:, 2 * pair + 1]
            open_start: int | None = None
            last = -1
            for ti in range(len(toks)):
                if b_col[ti]:
                    if open_start is not None:
                        spans.append(EntitySpan(toks[open_start].start, toks[last].end, label))
                    open_start, last = ti, ti
                elif i_col[ti]:
                    if open_start is None:
                        open_start = ti  # orphan I: repair as span start
                    last = ti
                else:
                    if open_start is not None:
                        spans.append(EntitySpan(toks[open_start].start, toks[last].end, label))
                        open_start = None
            if open_start is not None:
                spans.append(EntitySpan(toks[open_start].start, toks[last].end, label))
    spans.sort(key=lambda s: (s.start, s.end, s.label))
    return spans


def _document_from_obj(obj: object, lineno: int) -> Document:
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object, got {type(obj).__name__}")
    doc_id = obj.get("id")
    text = obj.get("text")
    raw_entities = obj.get("entities", [])
    if not isinstance(doc_id, str) or not doc_id:
        raise CorpusError(f"line {lineno}: missing or invalid 'id'")
    if not isinstance(text, str):
        raise CorpusError(f"line {lineno}: missing or invalid 'text'")
    if not isinstance(raw_entities, list):
        raise CorpusError(f"line {lineno}: 'entities' must be an array")
    entities = []
    for ent in raw_entities:
        if not isinstance(ent, dict):
            raise CorpusError(f"line {lineno}: entity entries must be objects")
        try:
            entities.append(EntitySpan(ent.get("start"), ent.get("end"), ent.get("label")))
        except CorpusError as exc:
            raise CorpusError(f"line {lineno}: {exc} in document '{doc_id}'") from None
    return Document(doc_id, text, entities)


def ingest(path: str | Path, vocab: LabelVocabulary) -> list[Document]:
    """Read and validate a JSONL corpus; documents are returned in file order.

    Every violation (malformed JSON, out-of-bounds span, unknown label,
    duplicate id, same-label overlap) raises CorpusError with the line number.
    """
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            doc = _document_from_obj(obj, lineno)
            if doc.id in seen:
                raise CorpusError(f"line {lineno}: duplicate document id '{doc.id}'")
            seen.add(doc.id)
            try:
                doc.validate(vocab)
            except CorpusError as exc:
                raise CorpusError(f"line {lineno}: {exc}") from None
            docs.append(doc)
    return docs


def write_documents(docs: list[Document], path: str | Path) -> None:
    """Write documents back out in the corpus JSONL format."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            obj = {
                "id": doc.id,
                "text": doc.text,
                "entities": [
                    {"start": s.start, "end": s.end, "label": s.label} for s in doc.entities
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def write_tag_matrices(matrices: list[TagMatrix], path: str | Path, meta: dict | None = None) -> None:
    """Export tag matrices as JSONL; an optional leading _meta line carries provenance."""
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}, ensure_ascii=False) + "\n")
        for m in matrices:
            obj = {
                "id": m.doc_id,
                "tokens": [[t.start, t.end] for t in m.tokens],
                "channels": list(m.channels),
                "rows": m.rows.tolist(),
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_tag_matrices(path: str | Path, scheme: str) -> tuple[list[TagMatrix], dict | None]:
    """Read a tag-matrix JSONL export; returns (matrices, meta-or-None)."""
    _check_scheme(scheme)
    matrices: list[TagMatrix] = []
    meta: dict | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from None
            if "_meta" in obj:
                meta = obj["_meta"]
                continue
            tokens = tuple(Token(s, e) for s, e in obj["tokens"])
            matrices.append(
                TagMatrix(obj["id"], scheme, tuple(obj["channels"]), tokens, np.array(obj["rows"]))
            )
    return matrices, meta

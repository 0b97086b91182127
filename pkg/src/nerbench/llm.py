"""Few-shot LLM entity extraction: prompt building, chat-completions calls, tolerant
response parsing, exact-substring span alignment, and token/cost accounting."""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .corpus import Document, EntitySpan, LabelVocabulary, encode, tokenize
from .metrics import DocPrediction, PredictionSet

log = logging.getLogger(__name__)

PLACEHOLDERS = ("{entities}", "{example_text}", "{example_response}", "{input_text}")

DEFAULT_SYSTEM_TEMPLATE = (
    "Extract the following entities from the given clinical note in order of appearance. "
    "Use exact text for extractions. Do not paraphrase or overlap entities. "
    "The entities to extract are: {entities}. "
    "See the examples below for the expected format.\n\n"
    "# Clinical note example: {example_text}\n\n"
    "# Ideal response example: {example_response}"
)
DEFAULT_USER_TEMPLATE = "# Clinical note: {input_text}"

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class ProviderError(RuntimeError):
    """The provider endpoint could not be reached or kept failing."""


class ResponseParseError(ValueError):
    """No JSON object could be recovered from the model output."""


class PromptError(ValueError):
    """A prompt template or its inputs are malformed."""


@dataclass(frozen=True)
class PromptTemplate:
    """System/user message pair with one slot each for the entity list, the
    worked example, its ideal response, and the input note."""

    system: str
    user: str

    def __post_init__(self) -> None:
        combined = self.system + "\x00" + self.user
        for ph in PLACEHOLDERS:
            n = combined.count(ph)
            if n != 1:
                raise PromptError(f"placeholder {ph} must appear exactly once, found {n}")

    @classmethod
    def default(cls) -> PromptTemplate:
        return cls(DEFAULT_SYSTEM_TEMPLATE, DEFAULT_USER_TEMPLATE)


@dataclass
class ExtractionResponse:
    """Per-label extraction strings parsed from a model reply."""

    extractions: dict[str, list[str]]
    raw: str


@dataclass
class UsageRecord:
    """Tokens, wall-clock time, and cost of one completed request."""

    model: str
    effort: str
    seconds: float
    prompt_tokens: int
    completion_tokens: int
    cost_usd: float
    usage_missing: bool = False

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass
class UsageSummary:
    """Mean time/tokens and extrapolated cost per batch for one (model, effort) group."""

    model: str
    effort: str
    n_responses: int
    mean_seconds: float
    mean_total_tokens: float
    cost_per_batch_usd: float
    n_per_batch: int


@dataclass
class ProviderConfig:
    """Where and how to call a chat-completions-style endpoint."""

    base_url: str
    model: str
    api_key_env: str = "NERBENCH_API_KEY"
    prompt_price_per_m: float = 0.0
    completion_price_per_m: float = 0.0
    max_parallel: int = 4
    timeout_s: float = 60.0
    retries: int = 3
    backoff_s: float = 1.0
    effort: str = ""

    def __post_init__(self) -> None:
        if self.prompt_price_per_m < 0 or self.completion_price_per_m < 0:
            raise ValueError("token prices must be nonnegative")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path) -> ProviderConfig:
        path = Path(path)
        if path.suffix == ".toml":
            try:
                import tomllib  # py311+
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"{path}: unknown provider config keys {sorted(extra)}")
        return cls(**data)

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise ProviderError(f"environment variable {self.api_key_env} is not set")
        return key

    def cost(self, prompt_tokens: int, completion_tokens: int) -> float:
        return (
            prompt_tokens * self.prompt_price_per_m
            + completion_tokens * self.completion_price_per_m
        ) / 1e6


@dataclass
class AlignmentReport:
    """What happened to each extraction string during span alignment."""

    doc_id: str
    total: int = 0
    matched: int = 0
    fallback_matched: int = 0
    hallucinations: list[tuple[str, str]] = field(default_factory=list)
    overlaps_rejected: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "total": self.total,
            "matched": self.matched,
            "fallback_matched": self.fallback_matched,
            "hallucinations": [list(h) for h in self.hallucinations],
            "overlaps_rejected": [list(o) for o in self.overlaps_rejected],
        }


def render_example_response(extractions: dict[str, list[str]], vocab: LabelVocabulary) -> str:
    """Canonical JSON for the ideal-response slot, keys in vocabulary order."""
    for lab in extractions:
        if lab not in vocab:
            raise PromptError(f"example response uses unknown label '{lab}'")
    ordered = {lab: list(extractions[lab]) for lab in vocab.labels if lab in extractions}
    return json.dumps(ordered, ensure_ascii=False)


_PLACEHOLDER_RE = re.compile(r"\{(entities|example_text|example_response|input_text)\}")


def build_prompt(
    template: PromptTemplate,
    vocab: LabelVocabulary,
    example_doc: Document,
    example_response: dict[str, list[str]],
    input_doc: Document,
) -> tuple[str, str]:
    """Render the (system, user) message pair for one input document.

    Substitution is a single literal pass, so braces inside note texts survive
    untouched and inserted text is never re-scanned for placeholders.
    """
    values = {
        "entities": ", ".join(vocab.labels),
        "example_text": example_doc.text,
        "example_response": render_example_response(example_response, vocab),
        "input_text": input_doc.text,
    }
    system = _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template.system)
    user = _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template.user)
    return system, user


def call(config: ProviderConfig, system: str, user: str) -> tuple[str, UsageRecord]:
    """POST one chat completion, retrying transient failures with exponential backoff.

    Returns the reply text and a UsageRecord; missing usage fields are flagged
    and filled with zeros rather than failing the request.
    """
    url = config.base_url.rstrip("/") + "/chat/completions"
    body: dict = {
        "model": config.model,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    }
    if config.effort:
        body["reasoning_effort"] = config.effort
    headers = {
        "Authorization": f"Bearer {config.api_key()}",
        "Content-Type": "application/json",
    }

    last_error: Exception | None = None
    for attempt in range(config.retries + 1):
        if attempt:
            delay = config.backoff_s * 2 ** (attempt - 1)
            log.warning("retry %d/%d after %s (sleeping %.2fs)", attempt, config.retries, last_error, delay)
            time.sleep(delay)
        started = time.monotonic()
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=config.timeout_s)
        except requests.RequestException as exc:
            last_error = exc
            continue
        elapsed = time.monotonic() - started
        if resp.status_code in RETRYABLE_STATUS:
            last_error = ProviderError(f"HTTP {resp.status_code} from provider")
            continue
        if resp.status_code != 200:
            raise ProviderError(f"HTTP {resp.status_code} from provider: {resp.text[:200]}")
        try:
            payload = resp.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from None
        usage = payload.get("usage") or {}
        missing = "prompt_tokens" not in usage or "completion_tokens" not in usage
        if missing:
            log.warning("provider response lacks usage fields; recording zeros")
        prompt_tokens = int(usage.get("prompt_tokens", 0))
        completion_tokens = int(usage.get("completion_tokens", 0))
        record = UsageRecord(
            model=config.model,
            effort=config.effort,
            seconds=elapsed,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            cost_usd=config.cost(prompt_tokens, completion_tokens),
            usage_missing=missing,
        )
        return content, record
    raise ProviderError(f"request failed after {config.retries + 1} attempts: {last_error}")


_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_-]+)?\s*(.*?)```", re.DOTALL)


def parse_response(raw: str, vocab: LabelVocabulary) -> ExtractionResponse:
    """Tolerantly parse a model reply into per-label extraction lists.

    Code fences are stripped, the first parseable JSON object wins, unknown
    labels are dropped with a warning, and scalar values become one-item lists.
    """
    text = raw
    fenced = _FENCE_RE.search(raw)
    if fenced:
        text = fenced.group(1)
    decoder = json.JSONDecoder()
    obj = None
    for match in re.finditer(r"\{", text):
        try:
            candidate, _ = decoder.raw_decode(text[match.start() :])
        except json.JSONDecodeError:
            continue
        if isinstance(candidate, dict):
            obj = candidate
            break
    if obj is None:
        raise ResponseParseError("no JSON object recoverable from model reply")

    known: dict[str, list[str]] = {}
    for lab, value in obj.items():
        if lab not in vocab:
            log.warning("dropping extraction for unknown label '%s'", lab)
            continue
        if value is None:
            known[lab] = []
        elif isinstance(value, list):
            known[lab] = [v if isinstance(v, str) else str(v) for v in value if v is not None]
        elif isinstance(value, str):
            known[lab] = [value]
        else:
            known[lab] = [str(value)]
    ordered = {lab: known[lab] for lab in vocab.labels if lab in known}
    return ExtractionResponse(ordered, raw)


def _find_free(text: str, needle: str, start: int, taken: list[tuple[int, int]]) -> int | None:
    """First occurrence of needle at/after start that overlaps none of taken."""
    pos = text.find(needle, start)
    while pos != -1:
        end = pos + len(needle)
        if all(end <= s or e <= pos for s, e in taken):
            return pos
        pos = text.find(needle, pos + 1)
    return None


def align(doc: Document, resp: ExtractionResponse) -> tuple[list[EntitySpan], AlignmentReport]:
    """Map extraction strings onto exact character spans of the note.

    Per label a cursor walks forward; each string must match verbatim at or
    after it. A string absent from the remaining text gets one fallback search
    from the start over positions not overlapping accepted same-label spans.
    Unmatched strings are hallucinations; same-label collisions are rejected.
    """
    report = AlignmentReport(doc.id)
    spans: list[EntitySpan] = []
    for label, strings in resp.extractions.items():
        taken: list[tuple[int, int]] = []
        cursor = 0
        for ext in strings:
            report.total += 1
            if not ext:
                report.hallucinations.append((label, ext))
                continue
            pos = _find_free(doc.text, ext, cursor, taken)
            if pos is not None:
                taken.append((pos, pos + len(ext)))
                cursor = pos + len(ext)
                spans.append(EntitySpan(pos, pos + len(ext), label))
                report.matched += 1
                continue
            pos = _find_free(doc.text, ext, 0, taken)
            if pos is not None:
                # Out-of-order output salvaged; the cursor stays put.
                taken.append((pos, pos + len(ext)))
                spans.append(EntitySpan(pos, pos + len(ext), label))
                report.matched += 1
                report.fallback_matched += 1
            elif ext in doc.text:
                report.overlaps_rejected.append((label, ext))
            else:
                report.hallucinations.append((label, ext))
    spans.sort(key=lambda s: (s.start, s.end, s.label))
    return spans, report


def to_predictions(
    docs: list[Document],
    spans_by_id: dict[str, list[EntitySpan]],
    vocab: LabelVocabulary,
    scheme: str,
) -> PredictionSet:
    """Encode aligned spans as hard 0/1 probability matrices for the metrics module."""
    channels = tuple(vocab.channels(scheme))
    out: list[DocPrediction] = []
    for doc in docs:
        synthetic = Document(doc.id, doc.text, list(spans_by_id.get(doc.id, [])))
        tokens = tokenize(doc.text)
        matrix = encode(synthetic, tokens, vocab, scheme)
        out.append(DocPrediction(doc.id, matrix.tokens, matrix.rows.astype(float)))
    return PredictionSet(scheme, channels, out)


def usage_summary(records: list[UsageRecord], n_per_batch: int = 1000) -> list[UsageSummary]:
    """Mean seconds/tokens and cost extrapolated per batch, grouped by (model, effort)."""
    if not records:
        raise ValueError("no usage records to summarize")
    groups: dict[tuple[str, str], list[UsageRecord]] = {}
    for rec in records:
        groups.setdefault((rec.model, rec.effort), []).append(rec)
    out = []
    for (model, effort) in sorted(groups):
        recs = groups[(model, effort)]
        n = len(recs)
        out.append(
            UsageSummary(
                model=model,
                effort=effort,
                n_responses=n,
                mean_seconds=sum(r.seconds for r in recs) / n,
                mean_total_tokens=sum(r.total_tokens for r in recs) / n,
                cost_per_batch_usd=sum(r.cost_usd for r in recs) * n_per_batch / n,
                n_per_batch=n_per_batch,
            )
        )
    return out


@dataclass
class ExtractionOutcome:
    """Result of one document's extract-parse-align pipeline."""

    doc_id: str
    raw: str | None = None
    spans: list[EntitySpan] = field(default_factory=list)
    report: AlignmentReport | None = None
    usage: UsageRecord | None = None
    error: str | None = None


@dataclass
class ExtractionRun:
    """Aggregated artifacts of a full extraction run."""

    outcomes: list[ExtractionOutcome]
    predictions: PredictionSet
    usage_records: list[UsageRecord]

    @property
    def failed_ids(self) -> list[str]:
        return [o.doc_id for o in self.outcomes if o.error is not None]


def run_extraction(
    docs: list[Document],
    vocab: LabelVocabulary,
    config: ProviderConfig,
    template: PromptTemplate,
    example_doc: Document,
    example_response: dict[str, list[str]],
    scheme: str,
) -> ExtractionRun:
    """Extract entities for every document with bounded request parallelism.

    Documents whose request or parse fails are marked unprocessed and excluded
    from the prediction set; everything else flows through align().
    """

    def process(doc: Document) -> ExtractionOutcome:
        outcome = ExtractionOutcome(doc.id)
        try:
            system, user = build_prompt(template, vocab, example_doc, example_response, doc)
            raw, usage = call(config, system, user)
            outcome.raw = raw
            outcome.usage = usage
            resp = parse_response(raw, vocab)
            outcome.spans, outcome.report = align(doc, resp)
        except (ProviderError, ResponseParseError) as exc:
            outcome.error = str(exc)
            log.error("document '%s' unprocessed: %s", doc.id, exc)
        return outcome

    with ThreadPoolExecutor(max_workers=config.max_parallel) as pool:
        outcomes = list(pool.map(process, docs))

    ok_docs = [d for d, o in zip(docs, outcomes) if o.error is None]
    spans_by_id = {o.doc_id: o.spans for o in outcomes if o.error is None}
    predictions = to_predictions(ok_docs, spans_by_id, vocab, scheme)
    usage_records = [o.usage for o in outcomes if o.usage is not None]
    return ExtractionRun(outcomes, predictions, usage_records)

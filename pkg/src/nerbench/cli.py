"""Command-line pipeline: each subcommand wraps one library stage and hands off through files."""

from __future__ import annotations

import csv
import json
import re
import sys
from pathlib import Path

import click

from . import __version__, corpus, imbalance, llm, metrics, plots, stratify
from .provenance import VocabularyMismatch, check_vocab_hash, file_digest, provenance_block

EXIT_VALIDATION = 1
EXIT_CONFIG = 2


def _fail(message: str) -> click.ClickException:
    exc = click.ClickException(message)
    exc.exit_code = EXIT_VALIDATION
    return exc


def _load_vocab(path: str) -> corpus.LabelVocabulary:
    try:
        return corpus.LabelVocabulary.from_file(path)
    except corpus.CorpusError as exc:
        raise click.UsageError(str(exc))


def _load_corpus(path: str, vocab: corpus.LabelVocabulary) -> list[corpus.Document]:
    try:
        docs = corpus.ingest(path, vocab)
    except corpus.CorpusError as exc:
        raise _fail(f"{path}: {exc}")
    if not docs:
        raise _fail(f"{path}: no documents")
    return docs


def _provenance(command: str, args: dict, inputs: dict[str, str], vocab_hash: str, seed: int | None = None) -> dict:
    return provenance_block(command, args, inputs, vocab_hash, __version__, seed)


def _write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def _read_split(path: str, vocab: corpus.LabelVocabulary) -> stratify.SplitAssignment:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        check_vocab_hash(vocab.digest, data.get("provenance", {}).get("vocab_hash"), path)
        return stratify.SplitAssignment.from_dict(data)
    except VocabularyMismatch as exc:
        raise _fail(str(exc))
    except (KeyError, stratify.SplitError) as exc:
        raise _fail(f"{path}: invalid split file ({exc})")


def _subset_docs(
    docs: list[corpus.Document],
    assignment: stratify.SplitAssignment,
    subset: str,
) -> list[corpus.Document]:
    if subset not in assignment.subsets:
        raise click.UsageError(
            f"unknown subset '{subset}' (split has {sorted(assignment.subsets)})"
        )
    wanted = set(assignment.subsets[subset])
    unknown = wanted - {d.id for d in docs}
    if unknown:
        raise _fail(f"split references documents absent from corpus: {sorted(unknown)[:5]}")
    return [d for d in docs if d.id in wanted]


def _safe_filename(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


@click.group()
@click.version_option(__version__, prog_name="nerbench")
def main() -> None:
    """Multilabel clinical NER experimentation harness."""


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Write the per-label stats table as JSON.")
def ingest(corpus_path: str, vocab_path: str, out: str | None) -> None:
    """Validate a corpus and report per-label document counts."""
    vocab = _load_vocab(vocab_path)
    docs = _load_corpus(corpus_path, vocab)
    stats = imbalance.label_stats(docs, vocab)
    rows = sorted(stats.containing.items(), key=lambda kv: (-kv[1], kv[0]))
    width = max(len(lab) for lab in stats.containing)
    click.echo(f"{len(docs)} documents, {len(vocab.labels)} labels")
    for lab, count in rows:
        click.echo(f"  {lab:<{width}}  {count}")
    if out:
        payload = {
            "documents": len(docs),
            "per_label": {lab: count for lab, count in rows},
            "provenance": _provenance(
                "ingest",
                {"corpus": corpus_path, "vocab": vocab_path},
                {"corpus": corpus_path, "vocab": vocab_path},
                vocab.digest,
            ),
        }
        _write_json(out, payload)


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(stratify.METHODS), default=stratify.ITERATIVE, show_default=True)
@click.option("--ratios", default="0.6,0.2,0.2", show_default=True, help="Comma-separated subset fractions.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Split JSON output path.")
def split(corpus_path: str, vocab_path: str, method: str, ratios: str, seed: int, out: str) -> None:
    """Partition the corpus and write the split plus a quality report and figure."""
    vocab = _load_vocab(vocab_path)
    docs = _load_corpus(corpus_path, vocab)
    try:
        ratio_values = tuple(float(r) for r in ratios.split(","))
        spec = stratify.SplitSpec(ratio_values, method, seed)
    except (ValueError, stratify.SplitError) as exc:
        raise click.UsageError(f"bad --ratios/--method: {exc}")
    try:
        assignment = stratify.split(docs, spec)
        quality = stratify.split_quality(docs, assignment, spec)
    except stratify.SplitError as exc:
        raise _fail(str(exc))

    prov = _provenance(
        "split",
        {"corpus": corpus_path, "vocab": vocab_path, "method": method, "ratios": ratios},
        {"corpus": corpus_path, "vocab": vocab_path},
        vocab.digest,
        seed=seed,
    )
    payload = assignment.to_dict()
    payload["provenance"] = prov
    _write_json(out, payload)

    stem = Path(out).with_suffix("")
    quality_path = Path(f"{stem}_quality.json")
    figure_path = Path(f"{stem}_quality.png")
    _write_json(quality_path, {**quality.to_dict(), "provenance": prov})
    plots.plot_split_quality(quality, list(spec.subset_names), figure_path)
    click.echo(
        f"split written to {out} (max deviation {quality.max_deviation:.4f}, "
        f"quality report {quality_path}, figure {figure_path})"
    )


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_path", type=click.Path(exists=True, dir_okay=False), help="Restrict to one subset of this split.")
@click.option("--subset", default="train", show_default=True)
@click.option("--clamp", is_flag=True, help="Fix the minimum class weight at 1.0.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def weights(corpus_path: str, vocab_path: str, split_path: str | None, subset: str, clamp: bool, out: str) -> None:
    """Compute per-class loss weights from document counts."""
    vocab = _load_vocab(vocab_path)
    docs = _load_corpus(corpus_path, vocab)
    inputs = {"corpus": corpus_path, "vocab": vocab_path}
    if split_path:
        docs = _subset_docs(docs, _read_split(split_path, vocab), subset)
        inputs["split"] = split_path
    stats = imbalance.label_stats(docs, vocab)
    try:
        result = imbalance.class_weights(stats, clamp)
    except imbalance.ImbalanceError as exc:
        raise _fail(str(exc))
    payload = result.to_dict()
    payload["provenance"] = _provenance(
        "weights",
        {"corpus": corpus_path, "vocab": vocab_path, "split": split_path, "subset": subset, "clamp": clamp},
        inputs,
        vocab.digest,
    )
    _write_json(out, payload)
    click.echo(f"weights for {len(vocab.labels)} labels written to {out}")


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--subset", default="train", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--cap", type=float, default=3.0, show_default=True, help="Maximum plan size as a multiple of the input size.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def oversample(corpus_path: str, vocab_path: str, split_path: str | None, subset: str, seed: int, cap: float, out: str) -> None:
    """Plan document replications that lift rare labels toward the mean count."""
    vocab = _load_vocab(vocab_path)
    docs = _load_corpus(corpus_path, vocab)
    inputs = {"corpus": corpus_path, "vocab": vocab_path}
    if split_path:
        docs = _subset_docs(docs, _read_split(split_path, vocab), subset)
        inputs["split"] = split_path
    try:
        plan = imbalance.oversample(docs, vocab, seed, cap)
    except imbalance.ImbalanceError as exc:
        raise _fail(str(exc))
    payload = plan.to_dict()
    payload["provenance"] = _provenance(
        "oversample",
        {"corpus": corpus_path, "vocab": vocab_path, "split": split_path, "subset": subset, "cap": cap},
        inputs,
        vocab.digest,
        seed=seed,
    )
    _write_json(out, payload)
    click.echo(f"plan of {plan.size} documents (from {len(docs)}) written to {out}")


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", type=click.Choice(corpus.SCHEMES), default=corpus.IO, show_default=True)
@click.option("--split", "split_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--subset", default="test", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def encode(corpus_path: str, vocab_path: str, scheme: str, split_path: str | None, subset: str, out: str) -> None:
    """Tokenize documents and export gold tag matrices as JSONL."""
    vocab = _load_vocab(vocab_path)
    docs = _load_corpus(corpus_path, vocab)
    inputs = {"corpus": corpus_path, "vocab": vocab_path}
    if split_path:
        docs = _subset_docs(docs, _read_split(split_path, vocab), subset)
        inputs["split"] = split_path
    matrices = [corpus.encode(d, corpus.tokenize(d.text), vocab, scheme) for d in docs]
    meta = _provenance(
        "encode",
        {"corpus": corpus_path, "vocab": vocab_path, "scheme": scheme, "split": split_path, "subset": subset},
        inputs,
        vocab.digest,
    )
    corpus.write_tag_matrices(matrices, out, meta=meta)
    click.echo(f"{len(matrices)} tag matrices ({scheme}) written to {out}")


def _load_gold_and_predictions(
    gold_path: str, pred_path: str, scheme: str, vocab_path: str | None
) -> tuple[list[corpus.TagMatrix], metrics.PredictionSet, str]:
    try:
        gold, gold_meta = corpus.read_tag_matrices(gold_path, scheme)
        preds, pred_meta = metrics.read_predictions(pred_path, scheme)
    except (corpus.CorpusError, metrics.EvaluationError) as exc:
        raise _fail(str(exc))
    gold_hash = (gold_meta or {}).get("vocab_hash")
    pred_hash = (pred_meta or {}).get("vocab_hash")
    try:
        if vocab_path:
            expected = _load_vocab(vocab_path).digest
            check_vocab_hash(expected, gold_hash, gold_path)
            check_vocab_hash(expected, pred_hash, pred_path)
        elif gold_hash is not None:
            check_vocab_hash(gold_hash, pred_hash, pred_path)
    except VocabularyMismatch as exc:
        raise _fail(str(exc))
    return gold, preds, gold_hash or pred_hash or ""


@main.command()
@click.argument("gold_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("pred_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", type=click.Choice(corpus.SCHEMES), default=corpus.IO, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False), help="Cross-check artifact vocabulary hashes.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def evaluate(gold_path: str, pred_path: str, scheme: str, threshold: float, vocab_path: str | None, out: str) -> None:
    """Score predictions against gold tags at a fixed threshold."""
    gold, preds, vocab_hash = _load_gold_and_predictions(gold_path, pred_path, scheme, vocab_path)
    try:
        report = metrics.score(metrics.confusion(gold, preds, threshold))
    except metrics.EvaluationError as exc:
        raise _fail(str(exc))
    payload = report.to_dict()
    payload["provenance"] = _provenance(
        "evaluate",
        {"gold": gold_path, "predictions": pred_path, "scheme": scheme, "threshold": threshold},
        {"gold": gold_path, "predictions": pred_path},
        vocab_hash,
    )
    _write_json(out, payload)
    click.echo(
        f"micro F1 {report.micro[2]:.4f}  macro F1 {report.macro[2]:.4f}  "
        f"(threshold {threshold}, report {out})"
    )


@main.command()
@click.argument("gold_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("pred_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", type=click.Choice(corpus.SCHEMES), default=corpus.IO, show_default=True)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def sweep(gold_path: str, pred_path: str, scheme: str, vocab_path: str | None, out: str) -> None:
    """Find the shared threshold maximizing micro F1 and score there."""
    gold, preds, vocab_hash = _load_gold_and_predictions(gold_path, pred_path, scheme, vocab_path)
    try:
        best, report = metrics.sweep_threshold(gold, preds)
    except metrics.EvaluationError as exc:
        raise _fail(str(exc))
    payload = report.to_dict()
    payload["best_threshold"] = best
    payload["provenance"] = _provenance(
        "sweep",
        {"gold": gold_path, "predictions": pred_path, "scheme": scheme},
        {"gold": gold_path, "predictions": pred_path},
        vocab_hash,
    )
    _write_json(out, payload)
    click.echo(f"best threshold {best:.3f}, micro F1 {report.micro[2]:.4f} (report {out})")


@main.command()
@click.argument("gold_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("pred_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", type=click.Choice(corpus.SCHEMES), default=corpus.IO, show_default=True)
@click.option("--label", "labels", multiple=True, help="Channel to plot; repeatable. Default: all channels.")
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def prcurve(gold_path: str, pred_path: str, scheme: str, labels: tuple[str, ...], vocab_path: str | None, out_dir: str) -> None:
    """Write per-label precision-recall CSVs and a combined figure."""
    gold, preds, _ = _load_gold_and_predictions(gold_path, pred_path, scheme, vocab_path)
    wanted = list(labels) if labels else list(preds.channels)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves = []
    for lab in wanted:
        try:
            curve = metrics.pr_curve(gold, preds, lab)
        except metrics.EvaluationError as exc:
            raise _fail(str(exc))
        curve.to_csv(out / f"pr_{_safe_filename(lab)}.csv")
        curves.append(curve)
    figure_path = out / "pr_curves.png"
    plots.plot_pr_curves(curves, figure_path)
    click.echo(f"{len(curves)} PR curves written to {out_dir} (figure {figure_path})")


@main.command(name="llm-run")
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--provider", "provider_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Provider config (JSON or TOML).")
@click.option("--example-id", required=True, help="Corpus document used as the in-context example.")
@click.option("--split", "split_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--subset", default="test", show_default=True)
@click.option("--scheme", type=click.Choice(corpus.SCHEMES), default=corpus.IO, show_default=True)
@click.option("--limit", type=int, default=0, help="Process at most N documents (0 = all).")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def llm_run(
    corpus_path: str,
    vocab_path: str,
    provider_path: str,
    example_id: str,
    split_path: str | None,
    subset: str,
    scheme: str,
    limit: int,
    out_dir: str,
) -> None:
    """Run few-shot extraction over a corpus subset and write all run artifacts."""
    vocab = _load_vocab(vocab_path)
    docs = _load_corpus(corpus_path, vocab)
    try:
        config = llm.ProviderConfig.from_file(provider_path)
        config.api_key()  # fail fast before any request
    except (ValueError, llm.ProviderError) as exc:
        raise click.UsageError(str(exc))

    by_id = {d.id: d for d in docs}
    if example_id not in by_id:
        raise click.UsageError(f"example document '{example_id}' not found in corpus")
    example_doc = by_id[example_id]
    example_response = _gold_response(example_doc, vocab)

    targets = docs
    inputs = {"corpus": corpus_path, "vocab": vocab_path, "provider": provider_path}
    if split_path:
        targets = _subset_docs(docs, _read_split(split_path, vocab), subset)
        inputs["split"] = split_path
    targets = [d for d in targets if d.id != example_id]
    if limit > 0:
        targets = targets[:limit]
    if not targets:
        raise _fail("no documents to process after subset/example filtering")

    run = llm.run_extraction(
        targets, vocab, config, llm.PromptTemplate.default(), example_doc, example_response, scheme
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(
        "llm-run",
        {
            "corpus": corpus_path,
            "vocab": vocab_path,
            "provider": provider_path,
            "example_id": example_id,
            "scheme": scheme,
            "subset": subset if split_path else None,
        },
        inputs,
        vocab.digest,
    )

    with open(out / "responses.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": prov}, ensure_ascii=False) + "\n")
        for o in run.outcomes:
            fh.write(
                json.dumps(
                    {
                        "id": o.doc_id,
                        "error": o.error,
                        "raw": o.raw,
                        "alignment": o.report.to_dict() if o.report else None,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )

    metrics.write_predictions(run.predictions, out / "predictions.jsonl", meta=prov)

    with open(out / "usage.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "effort", "seconds", "prompt_tokens", "completion_tokens", "cost_usd"])
        for rec in run.usage_records:
            writer.writerow(
                [rec.model, rec.effort, f"{rec.seconds:.3f}", rec.prompt_tokens, rec.completion_tokens, f"{rec.cost_usd:.6f}"]
            )

    if run.usage_records:
        with open(out / "usage_summary.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "effort", "time_s", "total_tokens", "cost_per_1000_usd"])
            for row in llm.usage_summary(run.usage_records, n_per_batch=1000):
                writer.writerow(
                    [row.model, row.effort, f"{row.mean_seconds:.3f}", f"{row.mean_total_tokens:.1f}", f"{row.cost_per_batch_usd:.2f}"]
                )

    processed = len(targets) - len(run.failed_ids)
    click.echo(f"{processed}/{len(targets)} documents processed; artifacts in {out_dir}")
    if run.failed_ids:
        click.echo(f"unprocessed: {', '.join(run.failed_ids)}", err=True)
        if processed == 0:
            raise _fail("every document failed")


def _gold_response(doc: corpus.Document, vocab: corpus.LabelVocabulary) -> dict[str, list[str]]:
    """Ideal response for the in-context example: exact texts in order of appearance."""
    response: dict[str, list[str]] = {}
    for lab in vocab.labels:
        spans = sorted((s for s in doc.entities if s.label == lab), key=lambda s: s.start)
        if spans:
            response[lab] = [doc.text[s.start : s.end] for s in spans]
    return response


if __name__ == "__main__":
    main()

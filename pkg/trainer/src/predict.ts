/**
 * Emit predictions in the harness JSONL format: one row per document with the
 * reference tokens, channel names, and per-token probabilities. Tokens beyond
 * the input-length cap get zero probabilities and are counted in the report.
 */

import * as tf from "@tensorflow/tfjs";

import { Document, PredictionRow } from "./formats.js";
import { encodeDocument, reduceToTokens } from "./tokenizer.js";
import { predictBatch } from "./trainer.js";
import { Checkpoint } from "./trainer.js";

export interface PredictReport {
  documents: number;
  droppedTokens: number;
}

export function predictDocuments(
  model: tf.LayersModel,
  checkpoint: Checkpoint,
  docs: Document[]
): { rows: PredictionRow[]; report: PredictReport } {
  const cfg = checkpoint.config;
  const rows: PredictionRow[] = [];
  let droppedTokens = 0;
  const batchSize = 16;
  for (let i = 0; i < docs.length; i += batchSize) {
    const slice = docs.slice(i, i + batchSize);
    const encoded = slice.map((d) =>
      encodeDocument(d, cfg.labels, cfg.scheme, cfg.maxLength, cfg.subwordWidth, cfg.buckets)
    );
    const probsPerDoc = predictBatch(model, encoded, cfg.channels.length);
    encoded.forEach((e, j) => {
      droppedTokens += e.droppedTokens;
      const tokenProbs = reduceToTokens(
        e,
        probsPerDoc[j],
        cfg.channels.length,
        cfg.subwordReduce
      );
      rows.push({
        id: e.doc.id,
        tokens: e.tokens.map((t) => [t.start, t.end] as [number, number]),
        channels: [...cfg.channels],
        probs: tokenProbs,
      });
    });
  }
  return { rows, report: { documents: docs.length, droppedTokens } };
}

/**
 * File formats shared with the evaluation harness.
 *
 * The adapter talks to the harness exclusively through these files: corpus
 * JSONL in, split/weights/plan JSON in, prediction JSONL out. Offsets are
 * Unicode code-point indices (the harness is Python-based), never UTF-16
 * code units.
 */

import { createHash } from "node:crypto";
import { readFileSync, writeFileSync } from "node:fs";

export interface EntitySpan {
  start: number;
  end: number;
  label: string;
}

export interface Document {
  id: string;
  text: string;
  entities: EntitySpan[];
}

export interface SplitFile {
  method: string;
  seed: number;
  ratios: number[];
  subsets: Record<string, string[]>;
}

export interface WeightsFile {
  clamped: boolean;
  weights: Record<string, number>;
}

export interface OversamplePlan {
  plan: { id: string; count: number }[];
}

export type Scheme = "io" | "bio";

/** Short content hash of the label list; must match the harness digest. */
export function vocabDigest(labels: string[]): string {
  return createHash("sha256").update(JSON.stringify(labels), "utf8").digest("hex").slice(0, 12);
}

export function readVocabulary(path: string): string[] {
  const data = JSON.parse(readFileSync(path, "utf8"));
  if (!Array.isArray(data) || !data.every((x) => typeof x === "string")) {
    throw new Error(`${path}: vocabulary file must be a JSON array of strings`);
  }
  if (new Set(data).size !== data.length) {
    throw new Error(`${path}: vocabulary labels are not unique`);
  }
  return data;
}

export function readCorpus(path: string): Document[] {
  const docs: Document[] = [];
  const seen = new Set<string>();
  const lines = readFileSync(path, "utf8").split("\n");
  lines.forEach((line, i) => {
    if (!line.trim()) return;
    let obj: any;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}: line ${i + 1}: malformed JSON`);
    }
    if ("_meta" in obj) return;
    if (typeof obj.id !== "string" || typeof obj.text !== "string") {
      throw new Error(`${path}: line ${i + 1}: missing id or text`);
    }
    if (seen.has(obj.id)) {
      throw new Error(`${path}: line ${i + 1}: duplicate document id '${obj.id}'`);
    }
    seen.add(obj.id);
    const entities: EntitySpan[] = (obj.entities ?? []).map((e: any) => {
      if (
        typeof e.start !== "number" ||
        typeof e.end !== "number" ||
        typeof e.label !== "string" ||
        e.start >= e.end
      ) {
        throw new Error(`${path}: line ${i + 1}: invalid entity span`);
      }
      return { start: e.start, end: e.end, label: e.label };
    });
    docs.push({ id: obj.id, text: obj.text, entities });
  });
  return docs;
}

export function readSplit(path: string): SplitFile {
  const data = JSON.parse(readFileSync(path, "utf8"));
  if (!data.subsets) throw new Error(`${path}: not a split file (no subsets)`);
  return data as SplitFile;
}

export function readWeights(path: string): WeightsFile {
  const data = JSON.parse(readFileSync(path, "utf8"));
  if (!data.weights) throw new Error(`${path}: not a weights file`);
  return data as WeightsFile;
}

export function readOversamplePlan(path: string): OversamplePlan {
  const data = JSON.parse(readFileSync(path, "utf8"));
  if (!Array.isArray(data.plan)) throw new Error(`${path}: not an oversample plan`);
  return data as OversamplePlan;
}

export function subsetDocuments(
  docs: Document[],
  split: SplitFile,
  subset: string
): Document[] {
  const ids = split.subsets[subset];
  if (!ids) {
    throw new Error(`unknown subset '${subset}' (split has ${Object.keys(split.subsets)})`);
  }
  const wanted = new Set(ids);
  return docs.filter((d) => wanted.has(d.id));
}

/** Replicate documents per the harness oversample plan, preserving order. */
export function applyOversamplePlan(docs: Document[], plan: OversamplePlan): Document[] {
  const counts = new Map(plan.plan.map((e) => [e.id, e.count]));
  const out: Document[] = [];
  for (const doc of docs) {
    const n = counts.get(doc.id) ?? 1;
    for (let i = 0; i < n; i++) out.push(doc);
  }
  return out;
}

export interface PredictionRow {
  id: string;
  tokens: [number, number][];
  channels: string[];
  probs: number[][];
}

export function writePredictions(
  rows: PredictionRow[],
  path: string,
  meta: Record<string, unknown>
): void {
  const lines = [JSON.stringify({ _meta: meta })];
  for (const row of rows) lines.push(JSON.stringify(row));
  writeFileSync(path, lines.join("\n") + "\n", "utf8");
}

export function channelNames(labels: string[], scheme: Scheme): string[] {
  if (scheme === "io") return [...labels];
  const out: string[] = [];
  for (const lab of labels) out.push(`B-${lab}`, `I-${lab}`);
  return out;
}

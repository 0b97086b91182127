/**
 * Reference tokenization and gold-label projection, mirrored from the harness:
 * maximal letter/digit runs are one token, every other non-whitespace code
 * point is a single-character token. Offsets are code-point indices so they
 * line up with the harness's Python string offsets.
 */

import { EntitySpan, Document, Scheme } from "./formats.js";

export interface TokenSpan {
  start: number;
  end: number;
  text: string;
}

const ALNUM = /[\p{L}\p{N}]/u;
// Python's str.isspace() additionally covers \x1c-\x1f and \x85; JS \s
// additionally covers ﻿, which Python treats as a regular character.
const PY_EXTRA_SPACE = new Set(["\x1c", "\x1d", "\x1e", "\x1f", "\x85"]);

function isSpace(ch: string): boolean {
  if (ch === "﻿") return false;
  return /\s/u.test(ch) || PY_EXTRA_SPACE.has(ch);
}

export function tokenize(text: string): TokenSpan[] {
  const cps = Array.from(text);
  const tokens: TokenSpan[] = [];
  let i = 0;
  while (i < cps.length) {
    const ch = cps[i];
    if (isSpace(ch)) {
      i += 1;
    } else if (ALNUM.test(ch)) {
      let j = i + 1;
      while (j < cps.length && ALNUM.test(cps[j])) j += 1;
      tokens.push({ start: i, end: j, text: cps.slice(i, j).join("") });
      i = j;
    } else {
      tokens.push({ start: i, end: i + 1, text: ch });
      i += 1;
    }
  }
  return tokens;
}

function overlaps(token: TokenSpan, span: EntitySpan): boolean {
  return token.start < span.end && span.start < token.end;
}

/**
 * Per-token channel targets under the any-overlap rule.
 * IO: channel set for every overlapping token. BIO: the first overlapping
 * token of each span gets B, the rest I; B wins when spans collide on a token.
 */
export function goldTargets(
  doc: Document,
  tokens: TokenSpan[],
  labels: string[],
  scheme: Scheme
): number[][] {
  const width = scheme === "io" ? labels.length : 2 * labels.length;
  const rows: number[][] = tokens.map(() => new Array(width).fill(0));
  const index = new Map(labels.map((lab, i) => [lab, i]));
  const spans = [...doc.entities].sort(
    (a, b) => a.start - b.start || a.end - b.end || a.label.localeCompare(b.label)
  );
  for (const span of spans) {
    const li = index.get(span.label);
    if (li === undefined) throw new Error(`unknown label '${span.label}' in '${doc.id}'`);
    const hit = tokens
      .map((t, ti) => (overlaps(t, span) ? ti : -1))
      .filter((ti) => ti >= 0);
    if (scheme === "io") {
      for (const ti of hit) rows[ti][li] = 1;
    } else {
      hit.forEach((ti, k) => {
        if (k === 0) {
          rows[ti][2 * li] = 1;
          rows[ti][2 * li + 1] = 0;
        } else if (!rows[ti][2 * li]) {
          rows[ti][2 * li + 1] = 1;
        }
      });
    }
  }
  return rows;
}

/** FNV-1a hash of a string, for the hashed-subword embedding table. */
export function hashBucket(s: string, buckets: number): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  // bucket 0 is reserved for padding
  return (h % (buckets - 1)) + 1;
}

/** Split a token's text into fixed-width lowercase subword chunks. */
export function subwords(tokenText: string, width: number): string[] {
  const lower = tokenText.toLowerCase();
  if (lower.length <= width) return [lower];
  const out: string[] = [];
  for (let i = 0; i < lower.length; i += width) out.push(lower.slice(i, i + width));
  return out;
}

export interface EncodedDocument {
  doc: Document;
  tokens: TokenSpan[];
  /** hashed subword ids, truncated at the model's max input length */
  ids: number[];
  /** parallel array: which token each subword belongs to */
  tokenIndex: number[];
  /** per-token gold channel rows (full token count, incl. dropped tokens) */
  targets: number[][];
  /** tokens whose subwords all fell beyond the input-length cap */
  droppedTokens: number;
}

export function encodeDocument(
  doc: Document,
  labels: string[],
  scheme: Scheme,
  maxLength: number,
  subwordWidth: number,
  buckets: number
): EncodedDocument {
  const tokens = tokenize(doc.text);
  const targets = goldTargets(doc, tokens, labels, scheme);
  const ids: number[] = [];
  const tokenIndex: number[] = [];
  let droppedTokens = 0;
  for (let ti = 0; ti < tokens.length; ti++) {
    const pieces = subwords(tokens[ti].text, subwordWidth);
    if (ids.length >= maxLength) {
      droppedTokens += 1;
      continue;
    }
    for (const piece of pieces) {
      if (ids.length >= maxLength) break;
      ids.push(hashBucket(piece, buckets));
      tokenIndex.push(ti);
    }
  }
  return { doc, tokens, ids, tokenIndex, targets, droppedTokens };
}

/** Reduce per-subword probabilities to per-token rows (max or first-subword). */
export function reduceToTokens(
  encoded: EncodedDocument,
  subwordProbs: number[][],
  width: number,
  mode: "max" | "first"
): number[][] {
  const rows: number[][] = encoded.tokens.map(() => new Array(width).fill(0));
  const seen = new Set<number>();
  for (let si = 0; si < encoded.tokenIndex.length; si++) {
    const ti = encoded.tokenIndex[si];
    if (mode === "first") {
      if (seen.has(ti)) continue;
      seen.add(ti);
      rows[ti] = subwordProbs[si].slice(0, width);
    } else {
      for (let c = 0; c < width; c++) {
        rows[ti][c] = Math.max(rows[ti][c], subwordProbs[si][c]);
      }
    }
  }
  return rows;
}

/**
 * Training loop: mini-batches with gradient accumulation, weighted BCE,
 * early stopping on validation micro-F1, best-checkpoint retention.
 */

import * as tf from "@tensorflow/tfjs";

import {
  Document,
  Scheme,
  WeightsFile,
  channelNames,
  vocabDigest,
} from "./formats.js";
import {
  EncodedDocument,
  encodeDocument,
  reduceToTokens,
} from "./tokenizer.js";
import {
  MicroCounts,
  accumulateCounts,
  buildModel,
  microF1,
  weightedBce,
} from "./model.js";

export interface TrainSpec {
  model: string;
  learningRate: number;
  batchSize: number;
  accumulationSteps: number;
  maxLength: number;
  patience: number;
  scheme: Scheme;
  seed: number;
  maxEpochs: number;
  subwordReduce: "max" | "first";
}

/** Published hyperparameter profiles; flags may override any field. */
export const PROFILES: Record<string, Partial<TrainSpec>> = {
  default: {
    learningRate: 5e-5,
    batchSize: 10,
    accumulationSteps: 5,
    maxLength: 512,
    patience: 5,
  },
  "breast-cancer": {
    learningRate: 1e-4,
    batchSize: 10,
    accumulationSteps: 5,
    maxLength: 512,
    patience: 15,
  },
};

export function makeSpec(overrides: Partial<TrainSpec> = {}, profile = "default"): TrainSpec {
  const base = PROFILES[profile];
  if (!base) throw new Error(`unknown profile '${profile}'`);
  return {
    model: "tiny-conv",
    scheme: "io",
    seed: 0,
    maxEpochs: 50,
    subwordReduce: "max",
    learningRate: 5e-5,
    batchSize: 10,
    accumulationSteps: 5,
    maxLength: 512,
    patience: 5,
    ...base,
    ...overrides,
  };
}

export interface EpochLog {
  epoch: number;
  trainLoss: number;
  valMicroF1: number;
}

export interface TrainingLog {
  epochs: EpochLog[];
  bestEpoch: number;
  bestValMicroF1: number;
  droppedTokens: { train: number; validation: number };
  stoppedEarly: boolean;
}

export interface Checkpoint {
  config: {
    model: string;
    scheme: Scheme;
    labels: string[];
    vocabHash: string;
    channels: string[];
    buckets: number;
    embeddingDim: number;
    subwordWidth: number;
    maxLength: number;
    subwordReduce: "max" | "first";
    seed: number;
  };
  weights: { shape: number[]; data: number[] }[];
  log: TrainingLog;
}

export const BUCKETS = 2048;
export const EMBEDDING_DIM = 24;
export const SUBWORD_WIDTH = 4;

/** Deterministic PRNG for shuffling (mulberry32). */
export function seededRandom(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled<T>(items: T[], rand: () => number): T[] {
  const out = [...items];
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

export interface Batch {
  ids: tf.Tensor2D;
  labels: tf.Tensor3D;
  mask: tf.Tensor3D;
}

export function makeBatch(encoded: EncodedDocument[], channels: number): Batch {
  const maxLen = Math.max(1, ...encoded.map((e) => e.ids.length));
  const b = encoded.length;
  const ids = new Int32Array(b * maxLen);
  const labels = new Float32Array(b * maxLen * channels);
  const mask = new Float32Array(b * maxLen);
  encoded.forEach((e, bi) => {
    for (let si = 0; si < e.ids.length; si++) {
      ids[bi * maxLen + si] = e.ids[si];
      mask[bi * maxLen + si] = 1;
      const row = e.targets[e.tokenIndex[si]];
      for (let c = 0; c < channels; c++) {
        labels[(bi * maxLen + si) * channels + c] = row[c];
      }
    }
  });
  return {
    ids: tf.tensor2d(ids, [b, maxLen], "int32"),
    labels: tf.tensor3d(labels, [b, maxLen, channels]),
    mask: tf.tensor3d(mask, [b, maxLen, 1]),
  };
}

export function disposeBatch(batch: Batch): void {
  batch.ids.dispose();
  batch.labels.dispose();
  batch.mask.dispose();
}

/** Per-channel positive weights from the harness weights file (ones when absent). */
export function posWeightVector(
  labels: string[],
  scheme: Scheme,
  weightsFile: WeightsFile | null
): number[] {
  const channels = channelNames(labels, scheme);
  if (!weightsFile) return channels.map(() => 1.0);
  return channels.map((ch) => {
    const lab = scheme === "io" ? ch : ch.slice(2);
    const w = weightsFile.weights[lab];
    if (w === undefined) throw new Error(`weights file lacks label '${lab}'`);
    return w;
  });
}

function chunk<T>(items: T[], size: number): T[][] {
  const out: T[][] = [];
  for (let i = 0; i < items.length; i += size) out.push(items.slice(i, i + size));
  return out;
}

export function evaluateMicroF1(
  model: tf.LayersModel,
  encoded: EncodedDocument[],
  channels: number,
  reduce: "max" | "first"
): number {
  const counts: MicroCounts = { tp: 0, fp: 0, fn: 0 };
  for (const batch of chunk(encoded, 16)) {
    const probsPerDoc = predictBatch(model, batch, channels);
    batch.forEach((e, i) => {
      const tokenProbs = reduceToTokens(e, probsPerDoc[i], channels, reduce);
      const kept = e.tokens.map((_, ti) => e.tokenIndex.includes(ti));
      accumulateCounts(counts, tokenProbs, e.targets, kept);
    });
  }
  return microF1(counts);
}

/** Sigmoid probabilities per subword position, unpadded per document. */
export function predictBatch(
  model: tf.LayersModel,
  encoded: EncodedDocument[],
  channels: number
): number[][][] {
  const batch = makeBatch(encoded, channels);
  const probsData = tf.tidy(() => {
    const logits = model.apply(batch.ids) as tf.Tensor3D;
    return tf.sigmoid(logits).dataSync() as Float32Array;
  });
  const maxLen = batch.ids.shape[1];
  disposeBatch(batch);
  return encoded.map((e, bi) => {
    const rows: number[][] = [];
    for (let si = 0; si < e.ids.length; si++) {
      const offset = (bi * maxLen + si) * channels;
      rows.push(Array.from(probsData.subarray(offset, offset + channels)));
    }
    return rows;
  });
}

export interface TrainResult {
  model: tf.LayersModel;
  log: TrainingLog;
  checkpoint: Checkpoint;
}

export function encodeAll(
  docs: Document[],
  labels: string[],
  spec: TrainSpec
): EncodedDocument[] {
  return docs.map((d) =>
    encodeDocument(d, labels, spec.scheme, spec.maxLength, SUBWORD_WIDTH, BUCKETS)
  );
}

export async function train(
  spec: TrainSpec,
  trainDocs: Document[],
  valDocs: Document[],
  labels: string[],
  weightsFile: WeightsFile | null = null
): Promise<TrainResult> {
  const channels = channelNames(labels, spec.scheme);
  const trainEncoded = encodeAll(trainDocs, labels, spec);
  const valEncoded = encodeAll(valDocs, labels, spec);
  const model = buildModel({
    model: spec.model,
    channels: channels.length,
    buckets: BUCKETS,
    embeddingDim: EMBEDDING_DIM,
    seed: spec.seed,
  });
  const optimizer = tf.train.adam(spec.learningRate);
  const posWeight = tf.tensor1d(posWeightVector(labels, spec.scheme, weightsFile));
  const rand = seededRandom(spec.seed);

  const epochs: EpochLog[] = [];
  let bestF1 = -Infinity;
  let bestEpoch = 0;
  let sinceBest = 0;
  let bestWeights: tf.Tensor[] | null = null;
  let stoppedEarly = false;

  for (let epoch = 1; epoch <= spec.maxEpochs; epoch++) {
    const order = shuffled(trainEncoded, rand);
    const microBatches = chunk(order, spec.batchSize);
    let lossSum = 0;
    let accum: Record<string, tf.Tensor> | null = null;
    let accumCount = 0;

    const applyAccumulated = () => {
      if (!accum || accumCount === 0) return;
      const averaged = Object.entries(accum).map(([name, g]) => ({
        name,
        tensor: tf.div(g, accumCount) as tf.Tensor,
      }));
      optimizer.applyGradients(averaged);
      for (const g of Object.values(accum)) g.dispose();
      for (const { tensor } of averaged) tensor.dispose();
      accum = null;
      accumCount = 0;
    };

    for (const mb of microBatches) {
      const batch = makeBatch(mb, channels.length);
      const { value, grads } = tf.variableGrads(() =>
        weightedBce(
          model.apply(batch.ids) as tf.Tensor3D,
          batch.labels,
          batch.mask,
          posWeight as tf.Tensor1D
        )
      );
      lossSum += value.dataSync()[0];
      value.dispose();
      disposeBatch(batch);
      if (accum === null) {
        accum = grads;
      } else {
        for (const [name, g] of Object.entries(grads)) {
          const prev = accum[name];
          accum[name] = tf.add(prev, g);
          prev.dispose();
          g.dispose();
        }
      }
      accumCount += 1;
      if (accumCount >= spec.accumulationSteps) applyAccumulated();
    }
    applyAccumulated(); // flush the remainder so every example contributes

    const trainLoss = lossSum / Math.max(1, microBatches.length);
    if (!Number.isFinite(trainLoss)) {
      posWeight.dispose();
      throw new Error(`training diverged: loss is not finite at epoch ${epoch}`);
    }
    const valF1 = evaluateMicroF1(model, valEncoded, channels.length, spec.subwordReduce);
    epochs.push({ epoch, trainLoss, valMicroF1: valF1 });

    if (valF1 > bestF1) {
      bestF1 = valF1;
      bestEpoch = epoch;
      sinceBest = 0;
      if (bestWeights) bestWeights.forEach((w) => w.dispose());
      bestWeights = model.getWeights().map((w) => w.clone());
    } else {
      sinceBest += 1;
      if (sinceBest > spec.patience) {
        stoppedEarly = true;
        break;
      }
    }
  }

  if (bestWeights) {
    model.setWeights(bestWeights);
    bestWeights.forEach((w) => w.dispose());
  }
  posWeight.dispose();

  const log: TrainingLog = {
    epochs,
    bestEpoch,
    bestValMicroF1: bestF1 === -Infinity ? 0 : bestF1,
    droppedTokens: {
      train: trainEncoded.reduce((n, e) => n + e.droppedTokens, 0),
      validation: valEncoded.reduce((n, e) => n + e.droppedTokens, 0),
    },
    stoppedEarly,
  };

  const checkpoint: Checkpoint = {
    config: {
      model: spec.model,
      scheme: spec.scheme,
      labels: [...labels],
      vocabHash: vocabDigest(labels),
      channels,
      buckets: BUCKETS,
      embeddingDim: EMBEDDING_DIM,
      subwordWidth: SUBWORD_WIDTH,
      maxLength: spec.maxLength,
      subwordReduce: spec.subwordReduce,
      seed: spec.seed,
    },
    weights: model.getWeights().map((w) => ({
      shape: w.shape as number[],
      data: Array.from(w.dataSync()),
    })),
    log,
  };

  return { model, log, checkpoint };
}

export function restoreModel(checkpoint: Checkpoint): tf.LayersModel {
  const { config } = checkpoint;
  const model = buildModel({
    model: config.model,
    channels: config.channels.length,
    buckets: config.buckets,
    embeddingDim: config.embeddingDim,
    seed: config.seed,
  });
  model.setWeights(
    checkpoint.weights.map((w) => tf.tensor(w.data, w.shape as number[]))
  );
  return model;
}

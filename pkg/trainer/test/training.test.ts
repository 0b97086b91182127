import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";

import { WeightsFile } from "../src/formats.js";
import { buildModel, weightedBce } from "../src/model.js";
import {
  BUCKETS,
  EMBEDDING_DIM,
  disposeBatch,
  encodeAll,
  makeBatch,
  makeSpec,
  restoreModel,
  train,
} from "../src/trainer.js";
import { predictDocuments } from "../src/predict.js";
import { LEXICAL_LABELS, makeLexicalCorpus } from "./lexical_corpus.js";

const CORPUS = makeLexicalCorpus(50, 7);
const TRAIN_DOCS = CORPUS.slice(0, 30);
const VAL_DOCS = CORPUS.slice(30, 40);

function softplus(x: number): number {
  return Math.log1p(Math.exp(x));
}

describe("weightedBce", () => {
  it("matches the hand-computed positive-weighted formula", () => {
    const logits = tf.tensor3d([[[0.5, -1.0]]]);
    const labels = tf.tensor3d([[[1, 0]]]);
    const mask = tf.tensor3d([[[1]]]);
    const posWeight = tf.tensor1d([2, 1]);
    const loss = weightedBce(logits, labels, mask, posWeight).dataSync()[0];
    const expected = (2 * softplus(-0.5) + (-1.0 + softplus(1.0))) / 2;
    expect(loss).toBeCloseTo(expected, 6);
  });

  it("ignores masked positions", () => {
    const logits = tf.tensor3d([[[3.0], [99.0]]]);
    const labels = tf.tensor3d([[[0], [1]]]);
    const mask = tf.tensor3d([[[1], [0]]]);
    const posWeight = tf.tensor1d([1]);
    const loss = weightedBce(logits, labels, mask, posWeight).dataSync()[0];
    expect(loss).toBeCloseTo(3.0 + softplus(-3.0), 5);
  });
});

describe("adapter sanity (acceptance)", () => {
  it("reaches validation micro-F1 above 0.9 within 5 epochs on the lexical corpus", async () => {
    const spec = makeSpec({
      learningRate: 0.02,
      accumulationSteps: 1,
      maxEpochs: 5,
      seed: 1,
    });
    const result = await train(spec, TRAIN_DOCS, VAL_DOCS, LEXICAL_LABELS, null);
    expect(result.log.epochs.length).toBeLessThanOrEqual(5);
    expect(result.log.bestValMicroF1).toBeGreaterThan(0.9);
  });
});

describe("identity-weights equivalence (acceptance)", () => {
  it("all-1.0 weights reproduce the unweighted run exactly on the same seed", async () => {
    const spec = makeSpec({
      model: "tiny-dense",
      learningRate: 0.01,
      accumulationSteps: 1,
      maxEpochs: 2,
      seed: 5,
    });
    const ones: WeightsFile = {
      clamped: false,
      weights: Object.fromEntries(LEXICAL_LABELS.map((lab) => [lab, 1.0])),
    };
    const unweighted = await train(spec, TRAIN_DOCS, VAL_DOCS, LEXICAL_LABELS, null);
    const weighted = await train(spec, TRAIN_DOCS, VAL_DOCS, LEXICAL_LABELS, ones);
    expect(weighted.log.epochs).toEqual(unweighted.log.epochs);
    expect(weighted.checkpoint.weights).toEqual(unweighted.checkpoint.weights);
  });
});

describe("training loop", () => {
  it("is deterministic for a fixed seed", async () => {
    const spec = makeSpec({
      model: "tiny-dense",
      learningRate: 0.01,
      accumulationSteps: 2,
      maxEpochs: 2,
      seed: 11,
    });
    const a = await train(spec, TRAIN_DOCS.slice(0, 10), VAL_DOCS, LEXICAL_LABELS, null);
    const b = await train(spec, TRAIN_DOCS.slice(0, 10), VAL_DOCS, LEXICAL_LABELS, null);
    expect(a.log.epochs).toEqual(b.log.epochs);
    expect(a.checkpoint.weights).toEqual(b.checkpoint.weights);
  });

  it("patience 0 stops after the first non-improving evaluation", async () => {
    const spec = makeSpec({
      learningRate: 0.02,
      accumulationSteps: 1,
      maxEpochs: 20,
      patience: 0,
      seed: 1,
    });
    const result = await train(spec, TRAIN_DOCS, VAL_DOCS, LEXICAL_LABELS, null);
    expect(result.log.stoppedEarly).toBe(true);
    expect(result.log.epochs.length).toBe(result.log.bestEpoch + 1);
  });

  it("accumulated micro-batches equal one combined batch for equal-length inputs", async () => {
    // both docs produce the same number of subwords, so the mean of the two
    // micro-batch gradients is exactly the combined-batch gradient
    const docs = [
      { id: "p1", text: "amoxicilina", entities: [{ start: 0, end: 11, label: "DRUG" }] },
      { id: "p2", text: "metformina", entities: [{ start: 0, end: 10, label: "DRUG" }] },
    ];
    const accumulated = await train(
      makeSpec({ model: "tiny-dense", learningRate: 0.01, batchSize: 1, accumulationSteps: 2, maxEpochs: 1, seed: 3 }),
      docs, docs, LEXICAL_LABELS, null
    );
    const combined = await train(
      makeSpec({ model: "tiny-dense", learningRate: 0.01, batchSize: 2, accumulationSteps: 1, maxEpochs: 1, seed: 3 }),
      docs, docs, LEXICAL_LABELS, null
    );
    for (let i = 0; i < combined.checkpoint.weights.length; i++) {
      const a = accumulated.checkpoint.weights[i].data;
      const b = combined.checkpoint.weights[i].data;
      for (let j = 0; j < b.length; j++) {
        expect(Math.abs(a[j] - b[j])).toBeLessThan(1e-5);
      }
    }
  });

  it("aborts when the loss diverges", async () => {
    const spec = makeSpec({
      model: "tiny-dense",
      learningRate: 1e12,
      accumulationSteps: 1,
      maxEpochs: 10,
      seed: 2,
    });
    await expect(train(spec, TRAIN_DOCS.slice(0, 6), VAL_DOCS, LEXICAL_LABELS, null)).rejects.toThrow(
      /not finite/
    );
  });

  it("rejects unknown model ids", () => {
    expect(() =>
      buildModel({ model: "resnet", channels: 2, buckets: BUCKETS, embeddingDim: EMBEDDING_DIM, seed: 0 })
    ).toThrow(/unknown model id/);
  });
});

describe("checkpoint round trip", () => {
  it("restored models predict identically", async () => {
    const spec = makeSpec({
      model: "tiny-dense",
      learningRate: 0.01,
      accumulationSteps: 1,
      maxEpochs: 1,
      seed: 13,
    });
    const result = await train(spec, TRAIN_DOCS.slice(0, 8), VAL_DOCS.slice(0, 4), LEXICAL_LABELS, null);
    const before = predictDocuments(result.model, result.checkpoint, VAL_DOCS.slice(0, 4));
    const restored = restoreModel(JSON.parse(JSON.stringify(result.checkpoint)));
    const after = predictDocuments(restored, result.checkpoint, VAL_DOCS.slice(0, 4));
    expect(after.rows).toEqual(before.rows);
  });
});

describe("batch construction", () => {
  it("pads shorter documents and masks the padding", () => {
    const docs = [
      { id: "a", text: "um", entities: [] },
      { id: "b", text: "um dois tres", entities: [] },
    ];
    const encoded = encodeAll(docs, LEXICAL_LABELS, makeSpec({}));
    const batch = makeBatch(encoded, 2);
    expect(batch.ids.shape).toEqual([2, 3]);
    const mask = batch.mask.dataSync();
    expect(Array.from(mask)).toEqual([1, 0, 0, 1, 1, 1]);
    disposeBatch(batch);
  });
});

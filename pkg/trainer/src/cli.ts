#!/usr/bin/env node
/**
 * Command line: `train` fits a small encoder on harness artifacts and saves a
 * checkpoint + training log; `predict` emits a prediction JSONL the harness
 * evaluate/sweep/prcurve commands consume unchanged.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";

import {
  applyOversamplePlan,
  readCorpus,
  readOversamplePlan,
  readSplit,
  readVocabulary,
  readWeights,
  subsetDocuments,
  vocabDigest,
  writePredictions,
  Scheme,
} from "./formats.js";
import { Checkpoint, PROFILES, TrainSpec, makeSpec, restoreModel, train } from "./trainer.js";
import { predictDocuments } from "./predict.js";

function fail(message: string): never {
  console.error(`error: ${message}`);
  process.exit(1);
}

async function cmdTrain(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      corpus: { type: "string" },
      vocab: { type: "string" },
      split: { type: "string" },
      subset: { type: "string", default: "train" },
      "val-subset": { type: "string", default: "validation" },
      scheme: { type: "string", default: "io" },
      profile: { type: "string", default: "default" },
      model: { type: "string", default: "tiny-conv" },
      lr: { type: "string" },
      "batch-size": { type: "string" },
      accumulation: { type: "string" },
      "max-length": { type: "string" },
      patience: { type: "string" },
      "max-epochs": { type: "string" },
      seed: { type: "string", default: "0" },
      weights: { type: "string" },
      oversample: { type: "string" },
      reduce: { type: "string", default: "max" },
      out: { type: "string" },
      log: { type: "string" },
    },
  });
  for (const key of ["corpus", "vocab", "split", "out"] as const) {
    if (!values[key]) fail(`--${key} is required`);
  }
  if (!(values.profile! in PROFILES)) fail(`unknown profile '${values.profile}'`);
  if (values.scheme !== "io" && values.scheme !== "bio") fail("--scheme must be io or bio");
  if (values.reduce !== "max" && values.reduce !== "first") fail("--reduce must be max or first");

  const labels = readVocabulary(values.vocab!);
  const docs = readCorpus(values.corpus!);
  const split = readSplit(values.split!);
  let trainDocs = subsetDocuments(docs, split, values.subset!);
  const valDocs = subsetDocuments(docs, split, values["val-subset"]!);
  if (values.oversample) {
    trainDocs = applyOversamplePlan(trainDocs, readOversamplePlan(values.oversample));
  }
  const weightsFile = values.weights ? readWeights(values.weights) : null;

  const overrides: Partial<TrainSpec> = {
    model: values.model!,
    scheme: values.scheme as Scheme,
    seed: parseInt(values.seed!, 10),
    subwordReduce: values.reduce as "max" | "first",
  };
  if (values.lr) overrides.learningRate = parseFloat(values.lr);
  if (values["batch-size"]) overrides.batchSize = parseInt(values["batch-size"], 10);
  if (values.accumulation) overrides.accumulationSteps = parseInt(values.accumulation, 10);
  if (values["max-length"]) overrides.maxLength = parseInt(values["max-length"], 10);
  if (values.patience !== undefined) overrides.patience = parseInt(values.patience, 10);
  if (values["max-epochs"]) overrides.maxEpochs = parseInt(values["max-epochs"], 10);
  const spec = makeSpec(overrides, values.profile);

  const result = await train(spec, trainDocs, valDocs, labels, weightsFile);
  writeFileSync(values.out!, JSON.stringify(result.checkpoint), "utf8");
  const logPath = values.log ?? values.out!.replace(/\.json$/, "") + "_log.json";
  writeFileSync(logPath, JSON.stringify(result.log, null, 2) + "\n", "utf8");
  console.log(
    `best validation micro-F1 ${result.log.bestValMicroF1.toFixed(4)} at epoch ` +
      `${result.log.bestEpoch}; checkpoint ${values.out}, log ${logPath}`
  );
}

async function cmdPredict(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      checkpoint: { type: "string" },
      corpus: { type: "string" },
      vocab: { type: "string" },
      split: { type: "string" },
      subset: { type: "string", default: "test" },
      out: { type: "string" },
    },
  });
  for (const key of ["checkpoint", "corpus", "out"] as const) {
    if (!values[key]) fail(`--${key} is required`);
  }
  const checkpoint = JSON.parse(readFileSync(values.checkpoint!, "utf8")) as Checkpoint;
  if (values.vocab) {
    const digest = vocabDigest(readVocabulary(values.vocab));
    if (digest !== checkpoint.config.vocabHash) {
      fail(
        `vocabulary hash mismatch: checkpoint has ${checkpoint.config.vocabHash}, ` +
          `${values.vocab} is ${digest}`
      );
    }
  }
  let docs = readCorpus(values.corpus!);
  if (values.split) {
    docs = subsetDocuments(docs, readSplit(values.split), values.subset!);
  }
  const model = restoreModel(checkpoint);
  const { rows, report } = predictDocuments(model, checkpoint, docs);
  writePredictions(rows, values.out!, {
    vocab_hash: checkpoint.config.vocabHash,
    tool: "nerbench-trainer 0.1.0",
    command: "predict",
    model: checkpoint.config.model,
    scheme: checkpoint.config.scheme,
    dropped_tokens: report.droppedTokens,
  });
  console.log(
    `${report.documents} documents predicted (${report.droppedTokens} tokens beyond ` +
      `the length cap); predictions ${values.out}`
  );
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2);
  if (command === "train") await cmdTrain(rest);
  else if (command === "predict") await cmdPredict(rest);
  else {
    console.error("usage: nerbench-trainer <train|predict> [options]");
    process.exit(2);
  }
}

main().catch((err) => {
  console.error(`error: ${err.message}`);
  process.exit(1);
});

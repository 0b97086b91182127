/**
 * Small trainable token-classification encoders and the weighted BCE loss.
 *
 * Every architecture maps hashed-subword ids [B, S] to per-channel logits
 * [B, S, C]; sigmoid happens at prediction time, the loss works on logits.
 */

import * as tf from "@tensorflow/tfjs";

export interface ModelConfig {
  model: string;
  channels: number;
  buckets: number;
  embeddingDim: number;
  seed: number;
}

export const MODEL_IDS = ["tiny-conv", "tiny-dense"] as const;

export function buildModel(config: ModelConfig): tf.LayersModel {
  const { model, channels, buckets, embeddingDim, seed } = config;
  if (!MODEL_IDS.includes(model as any)) {
    throw new Error(`unknown model id '${model}' (expected one of ${MODEL_IDS.join(", ")})`);
  }
  const input = tf.input({ shape: [null], dtype: "int32" });
  let x = tf.layers
    .embedding({
      inputDim: buckets,
      outputDim: embeddingDim,
      embeddingsInitializer: tf.initializers.randomUniform({
        minval: -0.05,
        maxval: 0.05,
        seed,
      }),
    })
    .apply(input) as tf.SymbolicTensor;
  if (model === "tiny-conv") {
    x = tf.layers
      .conv1d({
        filters: 64,
        kernelSize: 3,
        padding: "same",
        activation: "relu",
        kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
      })
      .apply(x) as tf.SymbolicTensor;
    x = tf.layers
      .conv1d({
        filters: 64,
        kernelSize: 3,
        padding: "same",
        activation: "relu",
        kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 2 }),
      })
      .apply(x) as tf.SymbolicTensor;
  } else {
    x = tf.layers
      .dense({
        units: 64,
        activation: "relu",
        kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
      })
      .apply(x) as tf.SymbolicTensor;
  }
  const logits = tf.layers
    .dense({
      units: channels,
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 3 }),
    })
    .apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: logits });
}

/**
 * Per-channel positive-weighted binary cross entropy over masked positions.
 *
 *   loss = mean_cells[ w_c * y * softplus(-x) + (1 - y) * (x + softplus(-x)) ]
 *
 * With w_c = 1 everywhere this is exactly the unweighted BCE; the unweighted
 * path passes a ones tensor through the same graph.
 */
export function weightedBce(
  logits: tf.Tensor3D,
  labels: tf.Tensor3D,
  mask: tf.Tensor3D,
  posWeight: tf.Tensor1D
): tf.Scalar {
  return tf.tidy(() => {
    const sp = tf.softplus(tf.neg(logits)); // -log sigmoid(x)
    const spNeg = tf.add(logits, sp); // -log(1 - sigmoid(x))
    const positive = tf.mul(tf.mul(labels, sp), posWeight);
    const negative = tf.mul(tf.sub(1, labels), spNeg);
    const perCell = tf.mul(tf.add(positive, negative), mask);
    const cells = tf.mul(tf.sum(mask), logits.shape[2]);
    return tf.div(tf.sum(perCell), cells) as tf.Scalar;
  });
}

export interface MicroCounts {
  tp: number;
  fp: number;
  fn: number;
}

export function microF1(counts: MicroCounts): number {
  const { tp, fp, fn } = counts;
  const denom = 2 * tp + fp + fn;
  return denom > 0 ? (2 * tp) / denom : 0;
}

export function accumulateCounts(
  into: MicroCounts,
  predicted: number[][],
  gold: number[][],
  keptTokens: boolean[],
  threshold = 0.5
): void {
  for (let ti = 0; ti < gold.length; ti++) {
    if (!keptTokens[ti]) continue;
    for (let c = 0; c < gold[ti].length; c++) {
      const isPred = predicted[ti][c] >= threshold;
      const isGold = gold[ti][c] === 1;
      if (isPred && isGold) into.tp += 1;
      else if (isPred && !isGold) into.fp += 1;
      else if (!isPred && isGold) into.fn += 1;
    }
  }
}

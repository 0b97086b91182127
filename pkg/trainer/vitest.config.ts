import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    testTimeout: 600_000,
    hookTimeout: 60_000,
    // tfjs keeps global state (weight registries, backend); one worker keeps
    // runs deterministic and the memory footprint flat
    maxWorkers: 1,
    fileParallelism: false,
  },
});

import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // LSTM training and child-process lifecycles dominate the runtime.
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
});

import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globals: true,
    environment: "node",
    testTimeout: 300_000,
    hookTimeout: 120_000,
    // the e2e suite drives one shared service/session; keep files sequential
    fileParallelism: false,
  },
});

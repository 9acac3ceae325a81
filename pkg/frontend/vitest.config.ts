import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // the e2e file spawns the Python service and trains a model
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});

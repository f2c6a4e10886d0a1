import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    // the live-service test drives a real training loop; generous timeout
    testTimeout: 120_000,
    hookTimeout: 120_000,
    // one CPU in CI and a python server child: run files serially
    fileParallelism: false,
  },
});

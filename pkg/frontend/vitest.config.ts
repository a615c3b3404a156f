import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // every test drives the native CLI as a subprocess
    testTimeout: 300_000,
    hookTimeout: 120_000,
  },
});

import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // every kernel call spawns a fresh CLI process; give suites real time
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
});

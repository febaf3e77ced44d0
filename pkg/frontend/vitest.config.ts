import { defineConfig } from "vitest/config";

// The end-to-end suite boots the Python annotation service in a child
// process; generous timeouts cover its startup on a cold interpreter.
export default defineConfig({
  test: {
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});

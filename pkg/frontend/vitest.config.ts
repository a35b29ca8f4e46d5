import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: {
        // tests talk to an in-process stub service on a dynamic port
        settings: { fetch: { disableSameOriginPolicy: true } },
      },
    },
    include: ["src/__tests__/**/*.test.ts"],
  },
});

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { extractAdas, isValidAda, renderWithAdaLinks } from "../ada.js";

// Shared vectors keep the frontend pattern in lockstep with the backend.
const vectors = JSON.parse(
  readFileSync(join(__dirname, "../../../tests/fixtures/ada_vectors.json"), "utf-8"),
) as { valid: string[]; invalid: string[] };

describe("ada pattern", () => {
  it("accepts every shared valid vector", () => {
    for (const ada of vectors.valid) {
      expect(isValidAda(ada), ada).toBe(true);
    }
  });

  it("rejects every shared invalid vector", () => {
    for (const ada of vectors.invalid) {
      expect(isValidAda(ada), ada).toBe(false);
    }
  });
});

describe("extractAdas", () => {
  it("finds identifiers in running text, deduplicated in order", () => {
    const text = "βλ. ΨΣ02ΟΕΨΠ-ΛΔΤ και 6Μ6ΨΟΕΨΠ-ΛΗ2, ξανά ΨΣ02ΟΕΨΠ-ΛΔΤ";
    expect(extractAdas(text)).toEqual(["ΨΣ02ΟΕΨΠ-ΛΔΤ", "6Μ6ΨΟΕΨΠ-ΛΗ2"]);
  });

  it("returns nothing for plain text", () => {
    expect(extractAdas("καμία παραπομπή εδώ")).toEqual([]);
  });
});

describe("renderWithAdaLinks", () => {
  it("turns identifiers into anchors with the configured base", () => {
    const target = document.createElement("div");
    renderWithAdaLinks(target, "βλ. ΨΣ02ΟΕΨΠ-ΛΔΤ τέλος", "https://example.test/view/");
    const anchor = target.querySelector("a");
    expect(anchor).not.toBeNull();
    expect(anchor!.getAttribute("href")).toBe(
      `https://example.test/view/${encodeURIComponent("ΨΣ02ΟΕΨΠ-ΛΔΤ")}`,
    );
    expect(anchor!.textContent).toBe("ΨΣ02ΟΕΨΠ-ΛΔΤ");
    expect(target.textContent).toBe("βλ. ΨΣ02ΟΕΨΠ-ΛΔΤ τέλος");
  });

  it("does not inject markup from answer text", () => {
    const target = document.createElement("div");
    renderWithAdaLinks(target, "<b>όχι markup</b>", "https://example.test/");
    expect(target.querySelector("b")).toBeNull();
    expect(target.textContent).toContain("<b>όχι markup</b>");
  });
});

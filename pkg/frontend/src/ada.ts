// Decision identifier pattern, kept in lockstep with the backend validator
// (shared test vectors live in ../tests/fixtures/ada_vectors.json).
const ADA_CLASS = "0-9A-ZΑ-ΡΣ-Ω";
const ADA_CORE = `[${ADA_CLASS}]{8,12}-[${ADA_CLASS}]{3}`;

export const ADA_RE = new RegExp(`^${ADA_CORE}$`);
const ADA_SCAN_RE = new RegExp(
  `(?<![${ADA_CLASS}])${ADA_CORE}(?![${ADA_CLASS}])`,
  "g",
);

export function isValidAda(candidate: string): boolean {
  return ADA_RE.test(candidate);
}

export function extractAdas(text: string): string[] {
  const seen: string[] = [];
  for (const match of text.matchAll(ADA_SCAN_RE)) {
    if (!seen.includes(match[0])) {
      seen.push(match[0]);
    }
  }
  return seen;
}

/**
 * Render text into `target`, turning every decision identifier into a link.
 * Builds DOM nodes (no innerHTML), so answer text cannot inject markup.
 */
export function renderWithAdaLinks(
  target: HTMLElement,
  text: string,
  linkBase: string,
): void {
  target.textContent = "";
  let cursor = 0;
  for (const match of text.matchAll(ADA_SCAN_RE)) {
    const index = match.index ?? 0;
    if (index > cursor) {
      target.appendChild(document.createTextNode(text.slice(cursor, index)));
    }
    const anchor = document.createElement("a");
    anchor.href = `${linkBase}${encodeURIComponent(match[0])}`;
    anchor.textContent = match[0];
    anchor.target = "_blank";
    anchor.rel = "noopener";
    anchor.className = "ada-link";
    target.appendChild(anchor);
    cursor = index + match[0].length;
  }
  if (cursor < text.length) {
    target.appendChild(document.createTextNode(text.slice(cursor)));
  }
}

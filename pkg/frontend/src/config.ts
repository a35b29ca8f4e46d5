export type AppConfig = {
  /** Base URL of the QA service. */
  apiBase: string;
  /** Where a cited decision identifier should link to; the id is appended. */
  decisionLinkBase: string;
};

export const DEFAULT_CONFIG: AppConfig = {
  apiBase: "http://localhost:8000",
  decisionLinkBase: "https://diavgeia.gov.gr/decision/view/",
};

export function resolveConfig(overrides: Partial<AppConfig> = {}): AppConfig {
  return { ...DEFAULT_CONFIG, ...overrides };
}

import { renderWithAdaLinks } from "./ada.js";
import { ApiClient } from "./api.js";
import { AppConfig, resolveConfig } from "./config.js";
import { UiSession, UiTurn, startSession } from "./session.js";
import strings from "./strings.json" with { type: "json" };

/**
 * Framework-free chat widget over the documented HTTP API.
 *
 * One in-flight message per session: the input is disabled while streaming.
 * Assistant turns render incrementally; once an exchange completes the
 * transcript is reconciled with the server and citations become links.
 */
export class ChatApp {
  readonly config: AppConfig;
  readonly api: ApiClient;
  session: UiSession | null = null;

  private transcriptEl!: HTMLElement;
  private inputEl!: HTMLInputElement;
  private sendEl!: HTMLButtonElement;
  private bannerEl!: HTMLElement;

  constructor(overrides: Partial<AppConfig> = {}) {
    this.config = resolveConfig(overrides);
    this.api = new ApiClient(this.config);
  }

  async mount(root: HTMLElement): Promise<void> {
    root.textContent = "";

    const title = document.createElement("h1");
    title.textContent = strings.title;
    root.appendChild(title);

    this.bannerEl = document.createElement("div");
    this.bannerEl.className = "banner hidden";
    root.appendChild(this.bannerEl);

    this.transcriptEl = document.createElement("div");
    this.transcriptEl.className = "transcript";
    root.appendChild(this.transcriptEl);

    const form = document.createElement("form");
    form.className = "composer";
    this.inputEl = document.createElement("input");
    this.inputEl.type = "text";
    this.inputEl.placeholder = strings.inputPlaceholder;
    this.sendEl = document.createElement("button");
    this.sendEl.type = "submit";
    this.sendEl.textContent = strings.send;
    form.append(this.inputEl, this.sendEl);
    root.appendChild(form);

    this.inputEl.addEventListener("input", () => this.refreshComposerState());
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.send();
    });

    await this.connect();
  }

  private async connect(): Promise<void> {
    try {
      this.session = await startSession(this.api);
      this.hideBanner();
    } catch {
      this.session = null;
      this.showBanner(strings.connectionError, () => void this.connect());
    }
    this.render();
  }

  private showBanner(message: string, retry: () => void): void {
    this.bannerEl.className = "banner";
    this.bannerEl.textContent = message + " ";
    const button = document.createElement("button");
    button.type = "button";
    button.className = "retry";
    button.textContent = strings.retry;
    button.addEventListener("click", retry);
    this.bannerEl.appendChild(button);
  }

  private hideBanner(): void {
    this.bannerEl.className = "banner hidden";
    this.bannerEl.textContent = "";
  }

  private refreshComposerState(): void {
    const busy = this.session === null || this.session.streaming;
    this.sendEl.disabled = busy || this.inputEl.value.trim().length === 0;
    this.inputEl.disabled = busy;
  }

  async send(): Promise<void> {
    const session = this.session;
    const question = this.inputEl.value.trim();
    if (!session || session.streaming || !question) {
      return;
    }
    this.inputEl.value = "";
    const assistantTurn = session.beginExchange(question);
    this.render();

    try {
      await this.api.streamMessage(session.sessionId, question, {
        onToken: (chunk) => {
          session.appendToken(assistantTurn, chunk);
          this.renderTurnText(assistantTurn);
        },
        onDone: () => undefined,
        onError: (message) => {
          throw new Error(message);
        },
      });
      await session.completeExchange();
      this.hideBanner();
    } catch {
      session.abortExchange();
      this.showBanner(strings.streamInterrupted, () => {
        this.inputEl.value = question;
        void this.send();
      });
    }
    this.render();
  }

  /** Re-render the whole transcript from session state. */
  render(): void {
    if (!this.transcriptEl) {
      return;
    }
    this.transcriptEl.textContent = "";
    const session = this.session;
    if (session) {
      for (const turn of session.transcript) {
        this.transcriptEl.appendChild(this.renderTurn(turn));
      }
    }
    this.refreshComposerState();
  }

  private turnTextEl(turn: UiTurn): HTMLElement | null {
    const nodes = this.transcriptEl.querySelectorAll(".bubble-text");
    const index = this.session?.transcript.indexOf(turn) ?? -1;
    return index >= 0 ? (nodes[index] as HTMLElement | undefined) ?? null : null;
  }

  private renderTurnText(turn: UiTurn): void {
    const el = this.turnTextEl(turn);
    if (el) {
      // streaming text stays plain; links appear on completion
      el.textContent = turn.text;
    }
  }

  private renderTurn(turn: UiTurn): HTMLElement {
    const bubble = document.createElement("div");
    bubble.className = `bubble ${turn.role}${turn.pending ? " pending" : ""}`;

    const text = document.createElement("div");
    text.className = "bubble-text";
    if (turn.pending) {
      text.textContent = turn.text;
    } else {
      renderWithAdaLinks(text, turn.text, this.config.decisionLinkBase);
    }
    bubble.appendChild(text);

    if (!turn.pending && turn.detail) {
      bubble.appendChild(this.renderDetail(turn));
    }
    return bubble;
  }

  private renderDetail(turn: UiTurn): HTMLElement {
    const details = document.createElement("details");
    details.className = "detail-panel";
    const summary = document.createElement("summary");
    summary.textContent = strings.detailsShow;
    details.appendChild(summary);

    const explanation = document.createElement("div");
    explanation.className = "detail-text";
    renderWithAdaLinks(explanation, turn.detail ?? "", this.config.decisionLinkBase);
    details.appendChild(explanation);

    if (turn.citedAdas.length > 0) {
      const heading = document.createElement("div");
      heading.className = "citations-heading";
      heading.textContent = strings.detailsCitations;
      details.appendChild(heading);
      const list = document.createElement("ul");
      list.className = "citations";
      for (const ada of turn.citedAdas) {
        const item = document.createElement("li");
        renderWithAdaLinks(item, ada, this.config.decisionLinkBase);
        list.appendChild(item);
      }
      details.appendChild(list);
    }
    return details;
  }
}

export function bootstrap(overrides: Partial<AppConfig> = {}): ChatApp {
  const app = new ChatApp(overrides);
  const root = document.getElementById("app");
  if (root) {
    void app.mount(root);
  }
  return app;
}

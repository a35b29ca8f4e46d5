import { AppConfig } from "./config.js";
import { SSEHandlers, consumeSSE } from "./sse.js";

export type ServerTurn = {
  role: "user" | "assistant";
  text: string;
  cited_adas: string[];
  timestamp: number;
  detail?: string;
  error?: string;
};

export type ServerTranscript = {
  session_id: string;
  turns: ServerTurn[];
};

export type StructuredAnswer = {
  concise_answer: string;
  detailed_explanation: string;
  citations: string[];
};

export class ApiClient {
  constructor(private readonly config: AppConfig) {}

  async createSession(): Promise<string> {
    const response = await fetch(`${this.config.apiBase}/sessions`, { method: "POST" });
    if (!response.ok) {
      throw new Error(`session creation failed: HTTP ${response.status}`);
    }
    const payload = (await response.json()) as { session_id: string };
    return payload.session_id;
  }

  async getSession(sessionId: string): Promise<ServerTranscript> {
    const response = await fetch(
      `${this.config.apiBase}/sessions/${encodeURIComponent(sessionId)}`,
    );
    if (!response.ok) {
      throw new Error(`transcript fetch failed: HTTP ${response.status}`);
    }
    return (await response.json()) as ServerTranscript;
  }

  /** POST a question and stream the assistant's answer token events. */
  async streamMessage(
    sessionId: string,
    question: string,
    handlers: SSEHandlers,
  ): Promise<void> {
    const response = await fetch(
      `${this.config.apiBase}/sessions/${encodeURIComponent(sessionId)}/messages`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ question, mode: "streaming" }),
      },
    );
    if (!response.ok || !response.body) {
      throw new Error(`message failed: HTTP ${response.status}`);
    }
    await consumeSSE(response.body, handlers);
  }

  async structuredMessage(sessionId: string, question: string): Promise<StructuredAnswer> {
    const response = await fetch(
      `${this.config.apiBase}/sessions/${encodeURIComponent(sessionId)}/messages`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ question, mode: "structured" }),
      },
    );
    if (!response.ok) {
      throw new Error(`message failed: HTTP ${response.status}`);
    }
    return (await response.json()) as StructuredAnswer;
  }
}

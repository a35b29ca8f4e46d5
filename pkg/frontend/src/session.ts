import { ApiClient, ServerTranscript, ServerTurn } from "./api.js";

export type UiTurn = {
  role: "user" | "assistant";
  text: string;
  citedAdas: string[];
  detail?: string;
  pending: boolean;
};

/**
 * Client-side mirror of one chat session. During a stream the last assistant
 * turn is `pending`; after every completed exchange the transcript is
 * reconciled against the server copy, which is the source of truth.
 */
export class UiSession {
  readonly transcript: UiTurn[] = [];
  streaming = false;

  constructor(
    readonly sessionId: string,
    private readonly api: ApiClient,
  ) {}

  beginExchange(question: string): UiTurn {
    this.streaming = true;
    this.transcript.push({
      role: "user",
      text: question,
      citedAdas: [],
      pending: false,
    });
    const assistant: UiTurn = { role: "assistant", text: "", citedAdas: [], pending: true };
    this.transcript.push(assistant);
    return assistant;
  }

  appendToken(turn: UiTurn, chunk: string): void {
    turn.text += chunk;
  }

  async completeExchange(): Promise<void> {
    const server = await this.api.getSession(this.sessionId);
    this.reconcile(server);
    this.streaming = false;
  }

  abortExchange(): void {
    this.streaming = false;
    const last = this.transcript[this.transcript.length - 1];
    if (last !== undefined && last.pending) {
      last.pending = false;
    }
  }

  reconcile(server: ServerTranscript): void {
    this.transcript.length = 0;
    for (const turn of server.turns) {
      this.transcript.push(fromServer(turn));
    }
  }
}

function fromServer(turn: ServerTurn): UiTurn {
  return {
    role: turn.role,
    text: turn.text,
    citedAdas: turn.cited_adas ?? [],
    detail: turn.detail,
    pending: false,
  };
}

export async function startSession(api: ApiClient): Promise<UiSession> {
  return new UiSession(await api.createSession(), api);
}

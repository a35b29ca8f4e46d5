export type SSEHandlers = {
  onToken: (chunk: string) => void;
  onDone: (payload: string) => void;
  onError: (message: string) => void;
};

/**
 * Consume a text/event-stream body (fetch + ReadableStream; EventSource
 * cannot POST). Events carry `event:` and one or more `data:` lines.
 */
export async function consumeSSE(
  body: ReadableStream<Uint8Array>,
  handlers: SSEHandlers,
): Promise<void> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  let sawDone = false;

  const dispatch = (block: string) => {
    let event = "message";
    const data: string[] = [];
    for (const line of block.split("\n")) {
      if (line.startsWith("event:")) {
        event = line.slice(6).trim();
      } else if (line.startsWith("data:")) {
        data.push(line.slice(5).replace(/^ /, ""));
      }
    }
    const payload = data.join("\n");
    if (event === "token") {
      handlers.onToken(payload);
    } else if (event === "done") {
      sawDone = true;
      handlers.onDone(payload);
    } else if (event === "error") {
      sawDone = true;
      handlers.onError(payload);
    }
  };

  try {
    for (;;) {
      const { value, done } = await reader.read();
      if (done) {
        break;
      }
      buffer += decoder.decode(value, { stream: true });
      let split;
      while ((split = buffer.indexOf("\n\n")) !== -1) {
        dispatch(buffer.slice(0, split));
        buffer = buffer.slice(split + 2);
      }
    }
    if (buffer.trim().length > 0) {
      dispatch(buffer);
    }
    if (!sawDone) {
      handlers.onError("stream ended before completion");
    }
  } catch (err) {
    handlers.onError(err instanceof Error ? err.message : String(err));
  }
}

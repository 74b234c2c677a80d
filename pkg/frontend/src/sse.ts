// SSE consumer over fetch streaming, with reconnect and exponential
// backoff. EventSource is avoided so the same code runs in browsers and
// under node-based tests.

export interface SseOptions {
  fetchImpl?: (url: string, init?: RequestInit) => Promise<Response>;
  maxBackoffMs?: number;
  onEvent: (data: string) => void;
  onStateChange?: (state: "connecting" | "open" | "retrying" | "closed") => void;
}

export class SseClient {
  private closed = false;
  private backoffMs = 500;

  constructor(private url: string, private options: SseOptions) {}

  async run(): Promise<void> {
    const fetchImpl = this.options.fetchImpl ?? ((u, i) => fetch(u, i));
    while (!this.closed) {
      this.options.onStateChange?.("connecting");
      try {
        const response = await fetchImpl(this.url, {
          headers: { accept: "text/event-stream" },
        });
        if (!response.ok || !response.body) {
          throw new Error(`stream failed: ${response.status}`);
        }
        this.options.onStateChange?.("open");
        this.backoffMs = 500;
        await this.consume(response.body);
      } catch {
        // fall through to retry
      }
      if (this.closed) break;
      this.options.onStateChange?.("retrying");
      await new Promise((resolve) => setTimeout(resolve, this.backoffMs));
      this.backoffMs = Math.min(this.backoffMs * 2, this.options.maxBackoffMs ?? 15000);
    }
    this.options.onStateChange?.("closed");
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    while (!this.closed) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let index;
      while ((index = buffer.indexOf("\n\n")) >= 0) {
        const frame = buffer.slice(0, index);
        buffer = buffer.slice(index + 2);
        for (const line of frame.split("\n")) {
          if (line.startsWith("data:")) {
            this.options.onEvent(line.slice(5).trim());
          }
        }
      }
    }
    reader.cancel().catch(() => undefined);
  }

  close(): void {
    this.closed = true;
  }
}

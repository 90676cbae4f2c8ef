/**
 * Pure client logic for the chat API: wire types, fetch wrappers, and
 * the span -> transcript-segment conversion. No DOM access here so the
 * whole file is unit-testable in node.
 */

export interface Span {
  start: number;
  end: number;
  source: "vocab" | "kg";
  triple: number | null;
  triple_sro: [string, string, string] | null;
}

export interface ChatResponse {
  text: string;
  spans: Span[];
  gate_trace: number[];
  truncated: boolean;
}

export interface Segment {
  text: string;
  source: "vocab" | "kg";
  triple: number | null;
  tooltip: string | null;
}

export interface TranscriptEntry {
  speaker: "you" | "bot";
  text: string;
  segments: Segment[];
  truncated: boolean;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

/**
 * Convert server spans into renderable segments.
 *
 * The server guarantees the spans tile the text exactly (every
 * character in exactly one span, in order); this verifies that before
 * trusting the offsets, so a malformed payload fails loudly instead of
 * rendering scrambled text.
 */
export function segmentsFromResponse(response: ChatResponse): Segment[] {
  const { text, spans } = response;
  if (spans.length === 0) {
    if (text.length !== 0) throw new Error("spans missing for non-empty text");
    return [];
  }
  let cursor = 0;
  const segments: Segment[] = [];
  for (const span of spans) {
    if (span.start !== cursor) {
      throw new Error(`span gap/overlap at offset ${span.start}, expected ${cursor}`);
    }
    if (span.end <= span.start || span.end > text.length) {
      throw new Error(`bad span bounds [${span.start}, ${span.end})`);
    }
    segments.push({
      text: text.slice(span.start, span.end),
      source: span.source,
      triple: span.triple,
      tooltip: span.triple_sro ? span.triple_sro.join(" · ") : null,
    });
    cursor = span.end;
  }
  if (cursor !== text.length) {
    throw new Error(`spans cover ${cursor} of ${text.length} characters`);
  }
  return segments;
}

export function userEntry(text: string): TranscriptEntry {
  return {
    speaker: "you",
    text,
    segments: [{ text, source: "vocab", triple: null, tooltip: null }],
    truncated: false,
  };
}

export function botEntry(response: ChatResponse): TranscriptEntry {
  return {
    speaker: "bot",
    text: response.text,
    segments: segmentsFromResponse(response),
    truncated: response.truncated,
  };
}

function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Render one entry's message body as HTML (KG copies highlighted). */
export function entryHtml(entry: TranscriptEntry): string {
  if (entry.segments.length === 0) {
    return '<span class="empty">(empty reply)</span>';
  }
  const parts = entry.segments.map((seg) => {
    if (seg.source === "kg") {
      const title = seg.tooltip ? ` title="${escapeHtml(seg.tooltip)}"` : "";
      return `<mark class="kg"${title}>${escapeHtml(seg.text)}</mark>`;
    }
    return escapeHtml(seg.text);
  });
  const flag = entry.truncated ? ' <span class="trunc">[truncated]</span>' : "";
  return parts.join("") + flag;
}

async function parseError(resp: Response): Promise<ApiError> {
  let message = `request failed with status ${resp.status}`;
  try {
    const payload = await resp.json();
    if (payload && typeof payload.error === "string") message = payload.error;
  } catch {
    /* non-JSON error body; keep the generic message */
  }
  return new ApiError(message, resp.status);
}

/** Thin typed wrapper over the three server endpoints. */
export class ChatApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(this.base + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  async teams(): Promise<string[]> {
    const payload = await this.request<{ teams: string[] }>("GET", "/teams");
    return payload.teams;
  }

  async createSession(team: string): Promise<string> {
    const payload = await this.request<{ session_id: string; team: string }>(
      "POST", "/sessions", { team },
    );
    return payload.session_id;
  }

  async sendMessage(sessionId: string, text: string): Promise<ChatResponse> {
    return this.request<ChatResponse>(
      "POST", `/sessions/${encodeURIComponent(sessionId)}/messages`, { text },
    );
  }
}

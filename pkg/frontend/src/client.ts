// HTTP face of the editor server: POST /rpc/<method> with a params
// object, JSON result back.  Every call is appended to a transcript so
// any UI session can be replayed headlessly against a fresh server.

import {
  ErrorCode,
  MethodName,
  MethodResults,
  Notification,
  ServerError,
  Span,
} from "./protocol.js";

export interface TranscriptEntry {
  method: string;
  params: Record<string, unknown>;
}

export type ResponseValidator = (
  method: string,
  params: Record<string, unknown>,
  result: unknown,
) => void;

interface ErrorBody {
  error?: { code?: string; message?: string };
}

const ERROR_CODES: ReadonlySet<string> = new Set([
  "BadRequest",
  "NotFound",
  "StaleVersion",
  "QueryParseError",
  "UnknownMethod",
  "InternalError",
]);

function toServerError(status: number, body: unknown): ServerError {
  const err = (body as ErrorBody)?.error;
  const code = err?.code && ERROR_CODES.has(err.code) ? (err.code as ErrorCode) : "InternalError";
  return new ServerError(code, err?.message ?? `HTTP ${status}`, status);
}

export class Client {
  readonly baseUrl: string;
  private readonly log: TranscriptEntry[] = [];
  private readonly validator: ResponseValidator | null;

  constructor(baseUrl: string, validator?: ResponseValidator) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.validator = validator ?? null;
  }

  /** Copy of everything sent so far, in order. */
  transcript(): TranscriptEntry[] {
    return this.log.map((e) => ({ method: e.method, params: { ...e.params } }));
  }

  async call<M extends MethodName>(
    method: M,
    params: Record<string, unknown> = {},
  ): Promise<MethodResults[M]> {
    this.log.push({ method, params: { ...params } });
    const result = await rawCall(this.baseUrl, method, params);
    this.validator?.(method, params, result);
    return result as MethodResults[M];
  }

  initialize() {
    return this.call("initialize");
  }

  didOpen(uri: string, text?: string, version?: number) {
    const params: Record<string, unknown> = { uri };
    if (text !== undefined) params["text"] = text;
    if (version !== undefined) params["version"] = version;
    return this.call("didOpen", params);
  }

  didChange(uri: string, version: number, text: string) {
    return this.call("didChange", { uri, version, text });
  }

  didClose(uri: string) {
    return this.call("didClose", { uri });
  }

  typeAt(uri: string, offset: number) {
    return this.call("typeAt", { uri, offset });
  }

  completionsAt(uri: string, offset: number) {
    return this.call("completionsAt", { uri, offset });
  }

  definitionAt(uri: string, offset: number) {
    return this.call("definitionAt", { uri, offset });
  }

  related(uri: string, offset: number, relation: string) {
    return this.call("related", { uri, offset, relation });
  }

  search(query: string, uri?: string) {
    const params: Record<string, unknown> = { query };
    if (uri !== undefined) params["uri"] = uri;
    return this.call("search", params);
  }

  astOf(uri: string) {
    return this.call("astOf", { uri });
  }

  subtermAt(uri: string, range: Span) {
    return this.call("subtermAt", { uri, range });
  }

  stats(uri?: string) {
    return this.call("stats", uri === undefined ? {} : { uri });
  }

  openLocation(uri: string, range: Span | null) {
    return this.call("openLocation", { uri, range });
  }

  async pollNotifications(): Promise<Notification[]> {
    const r = await this.call("pollNotifications");
    return r.notifications;
  }

  shutdown() {
    return this.call("shutdown");
  }
}

/** One POST /rpc/<method> round-trip without transcript bookkeeping. */
export async function rawCall(
  baseUrl: string,
  method: string,
  params: Record<string, unknown>,
): Promise<unknown> {
  const resp = await fetch(`${baseUrl.replace(/\/+$/, "")}/rpc/${method}`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(params),
  });
  let body: unknown = null;
  const raw = await resp.text();
  if (raw !== "") {
    body = JSON.parse(raw);
  }
  if (!resp.ok) {
    throw toServerError(resp.status, body);
  }
  if (body !== null && typeof body === "object" && "result" in body) {
    return (body as { result: unknown }).result;
  }
  return body;
}

/**
 * Replays a recorded transcript verbatim against a server and returns
 * the result of every request in order.  No client state is involved:
 * whatever a UI session did, the same bytes go over the wire again.
 */
export async function replayTranscript(
  baseUrl: string,
  transcript: TranscriptEntry[],
): Promise<unknown[]> {
  const results: unknown[] = [];
  for (const entry of transcript) {
    results.push(await rawCall(baseUrl, entry.method, entry.params));
  }
  return results;
}

/** Final buffer text implied by a transcript: the last didOpen/didChange text. */
export function finalBufferText(
  transcript: TranscriptEntry[],
  uri: string,
): string | null {
  for (let i = transcript.length - 1; i >= 0; i--) {
    const e = transcript[i]!;
    if (
      (e.method === "didChange" || e.method === "didOpen") &&
      e.params["uri"] === uri &&
      typeof e.params["text"] === "string"
    ) {
      return e.params["text"] as string;
    }
  }
  return null;
}
